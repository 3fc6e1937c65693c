//! Command-line front end: `run`, `sweep`, `calibrate`, `verify`.

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use crate::calibrate::calibrate;
use crate::config::{Algorithm, ExperimentConfig};
use crate::experiment::{median_gap_by_n, run_experiment, sweep};
use crate::verify::verify;

#[derive(Debug, Parser)]
#[command(name = "ldpkm", version, about = "Locally private k-means simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every configured seed and write the run CSV.
    Run(ConfigArgs),
    /// Repeat the configured runs for several values of n.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [10_000usize, 100_000])]
        ns: Vec<usize>,
    },
    /// Probe the frozen error-bound constants.
    Calibrate {
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run and check every invariant; nonzero exit if one fails.
    Verify(ConfigArgs),
}

/// A config file plus per-field overrides.
#[derive(Debug, Default, Args)]
pub struct ConfigArgs {
    /// TOML config file; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub algorithm: Option<Algorithm>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub d_prime: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long)]
    pub stddev: Option<f64>,
    /// CSV of points to use instead of the synthetic mixture.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub c_dim: Option<f64>,
    #[arg(long)]
    pub c_s: Option<f64>,
    #[arg(long)]
    pub n_g: Option<usize>,
    #[arg(long)]
    pub c_b: Option<f64>,
    #[arg(long)]
    pub c_r: Option<f64>,
    #[arg(long)]
    pub max_repetitions: Option<usize>,
    #[arg(long)]
    pub d_power: Option<f64>,
    #[arg(long)]
    pub heavy_cap: Option<f64>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Output directory (the LDPKM_OUTPUT_DIR environment variable wins).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub artifacts: bool,
    #[arg(long)]
    pub plot_data: bool,
    /// Replace every randomizer by its exact functional (no privacy).
    #[arg(long)]
    pub noiseless: bool,
}

macro_rules! set {
    ($dst:expr, $src:expr) => {
        if let Some(v) = $src {
            $dst = v;
        }
    };
}

impl ConfigArgs {
    pub fn resolve(self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        set!(c.algorithm, self.algorithm);
        set!(c.n, self.n);
        set!(c.d_prime, self.d_prime);
        set!(c.k, self.k);
        set!(c.epsilon, self.epsilon);
        set!(c.delta, self.delta);
        set!(c.alpha, self.alpha);
        set!(c.c, self.c);
        set!(c.beta, self.beta);
        set!(c.data.separation, self.separation);
        set!(c.data.stddev, self.stddev);
        if self.data.is_some() {
            c.data.path = self.data;
        }
        set!(c.seeds, self.seeds);
        set!(c.constants.c_dim, self.c_dim);
        set!(c.constants.c_s, self.c_s);
        if self.n_g.is_some() {
            c.constants.n_g = self.n_g;
        }
        set!(c.constants.c_b, self.c_b);
        set!(c.constants.c_r, self.c_r);
        set!(c.constants.max_repetitions, self.max_repetitions);
        set!(c.constants.d_power, self.d_power);
        set!(c.constants.heavy_cap, self.heavy_cap);
        set!(c.constants.restarts, self.restarts);
        set!(c.constants.max_iterations, self.max_iterations);
        set!(c.output.dir, self.out);
        c.output.artifacts |= self.artifacts;
        c.output.plot_data |= self.plot_data;
        c.noiseless |= self.noiseless;
        c.validate()?;
        Ok(c)
    }
}

/// Executes a parsed command; `Ok(false)` means an invariant failed.
pub fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.resolve()?;
            if cfg.noiseless {
                log::warn!("NOISELESS MODE: randomizers are exact, no privacy is provided");
            }
            let dir = cfg.output_dir();
            let rows = run_experiment(&cfg, Some(&dir))?;
            for r in &rows {
                println!(
                    "seed {} n {} cost {:.4} baseline {:.4} ratio {}",
                    r.seed,
                    r.n,
                    r.private_cost.unwrap_or(f64::NAN),
                    r.baseline_cost,
                    r.mult_ratio.map_or("-".into(), |x| format!("{x:.3}"))
                );
            }
            println!("wrote {}", dir.display());
            Ok(true)
        }
        Command::Sweep { config, ns } => {
            let cfg = config.resolve()?;
            let dir = cfg.output_dir();
            let rows = sweep(&cfg, &ns, Some(&dir))?;
            for (n, m) in median_gap_by_n(&rows) {
                println!("n {n} median gap/opt {m:.4}");
            }
            Ok(true)
        }
        Command::Calibrate { trials, out } => {
            let report = calibrate(trials)?;
            let json = serde_json::to_string_pretty(&report)?;
            match out {
                Some(p) => std::fs::write(&p, json)?,
                None => println!("{json}"),
            }
            Ok(report.probes.iter().all(|p| p.held == p.trials))
        }
        Command::Verify(args) => {
            let cfg = args.resolve()?;
            let report = verify(&cfg)?;
            for c in &report.checks {
                println!("{} seed {} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.seed, c.name, c.detail);
            }
            Ok(report.passed())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "n = 700\nk = 3\n").unwrap();
        let cli = Cli::try_parse_from(["ldpkm", "run", "--config", path.to_str().unwrap(), "--k", "4", "--seeds", "1,2,3", "--noiseless"]).unwrap();
        let Command::Run(args) = cli.command else { panic!() };
        let cfg = args.resolve().unwrap();
        assert_eq!((cfg.n, cfg.k), (700, 4));
        assert_eq!(cfg.seeds, [1, 2, 3]);
        assert!(cfg.noiseless);
    }

    #[test]
    fn verify_command_reports_success() {
        let cli = Cli::try_parse_from(["ldpkm", "verify", "--n", "300", "--d-prime", "3", "--k", "2"]).unwrap();
        assert!(execute(cli).unwrap());
    }
}
