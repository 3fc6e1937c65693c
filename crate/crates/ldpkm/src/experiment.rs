//! Experiment driver: data, private run, baseline, CSV rows.
//!
//! CSV schema (version 1), one row per run, columns in [`RunRow`] order.
//! Private columns are empty for baseline-only runs. The long-format plot
//! file has columns `run,algorithm,seed,n,metric,level,value`.

use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use ldpkm_core::geometry::clustering_cost;
use ldpkm_core::kmeans::standard_kmeans_runs;
use ldpkm_core::low_error::{low_error_kmeans, LowErrorOutput};
use ldpkm_core::one_round::{one_round_kmeans, OneRoundOutput};
use ldpkm_core::prf::derive;
use ldpkm_core::{CenterSet, CostReport, Dataset, PrivacyBudget};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::artifacts::RunArtifacts;
use crate::config::{Algorithm, ExperimentConfig};
use crate::data::{gen_gaussian_mixture, load_points};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub schema_version: u32,
    pub algorithm: String,
    pub seed: u64,
    pub n: usize,
    pub d_prime: usize,
    pub k: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub alpha: f64,
    pub c: f64,
    pub beta: f64,
    pub separation: f64,
    pub stddev: f64,
    pub noiseless: bool,
    pub n_g: usize,
    pub c_dim: f64,
    pub c_s: f64,
    pub c_b: f64,
    pub c_r: f64,
    pub max_repetitions: usize,
    pub reduced_dim: Option<usize>,
    /// `|S|` for the four-round protocol, `|D*|` for the one-round protocol.
    pub candidates: Option<usize>,
    pub candidate_cap: Option<u64>,
    pub repetitions: Option<usize>,
    pub lsh_t: Option<usize>,
    pub epsilon_spent: Option<f64>,
    pub delta_spent: Option<f64>,
    pub rounds: Option<usize>,
    pub sentinels: Option<usize>,
    pub private_cost: Option<f64>,
    pub baseline_cost: f64,
    pub opt_estimate: f64,
    pub additive_gap: Option<f64>,
    pub gap_over_opt: Option<f64>,
    pub mult_ratio: Option<f64>,
    pub private_secs: Option<f64>,
    pub baseline_secs: f64,
}

/// Long-format plot record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotRecord {
    pub run: usize,
    pub algorithm: String,
    pub seed: u64,
    pub n: usize,
    pub metric: String,
    pub level: Option<u32>,
    pub value: f64,
}

/// Result of one private run, kept for artifacts and checks.
#[derive(Debug)]
pub enum PrivateRun {
    OneRound(Box<OneRoundOutput>),
    LowError(Box<LowErrorOutput>),
}

impl PrivateRun {
    pub fn centers(&self) -> &CenterSet {
        match self {
            PrivateRun::OneRound(o) => &o.centers,
            PrivateRun::LowError(o) => &o.centers,
        }
    }

    pub fn spent(&self) -> PrivacyBudget {
        match self {
            PrivateRun::OneRound(o) => o.session.ledger().max_spent(),
            PrivateRun::LowError(o) => o.session.ledger().max_spent(),
        }
    }

    pub fn rounds(&self) -> usize {
        match self {
            PrivateRun::OneRound(o) => o.session.transcript(0).len(),
            PrivateRun::LowError(o) => o.session.transcript(0).len(),
        }
    }
}

/// Everything one seed produced.
#[derive(Debug)]
pub struct RunOutcome {
    pub row: RunRow,
    pub plot: Vec<PlotRecord>,
    pub private: Option<PrivateRun>,
    pub baseline: CenterSet,
    pub data: Dataset,
}

/// Dataset for `seed`: the configured file, else the planted mixture.
pub fn dataset_for(config: &ExperimentConfig, seed: u64) -> Result<Dataset> {
    if let Some(path) = &config.data.path {
        return load_points(path);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, 0xda7a));
    Ok(gen_gaussian_mixture(config.n, config.d_prime, config.k, config.data.separation, config.data.stddev, &mut rng).data)
}

/// Best of the restarts of weighted k-means++ with Lloyd.
pub fn baseline(config: &ExperimentConfig, data: &Dataset, seed: u64) -> Result<CenterSet> {
    let out = standard_kmeans_runs(data, None, config.k, &config.kmeans(derive(seed, 0xba5e)))?;
    Ok(out.centers)
}

fn base_row(config: &ExperimentConfig, seed: u64, n: usize) -> RunRow {
    RunRow {
        schema_version: SCHEMA_VERSION,
        algorithm: config.algorithm.name().to_string(),
        seed,
        n,
        d_prime: config.d_prime,
        k: config.k,
        epsilon: config.epsilon,
        delta: config.delta,
        alpha: config.alpha,
        c: config.c,
        beta: config.beta,
        separation: config.data.separation,
        stddev: config.data.stddev,
        noiseless: config.noiseless,
        n_g: config.constants.n_g.unwrap_or(20 * config.k),
        c_dim: config.constants.c_dim,
        c_s: config.constants.c_s,
        c_b: config.constants.c_b,
        c_r: config.constants.c_r,
        max_repetitions: config.constants.max_repetitions,
        reduced_dim: None,
        candidates: None,
        candidate_cap: None,
        repetitions: None,
        lsh_t: None,
        epsilon_spent: None,
        delta_spent: None,
        rounds: None,
        sentinels: None,
        private_cost: None,
        baseline_cost: 0.0,
        opt_estimate: 0.0,
        additive_gap: None,
        gap_over_opt: None,
        mult_ratio: None,
        private_secs: None,
        baseline_secs: 0.0,
    }
}

/// One seed: data, private protocol (unless baseline-only), baseline.
pub fn run_once(config: &ExperimentConfig, seed: u64, run: usize) -> Result<RunOutcome> {
    let data = dataset_for(config, seed).with_context(|| format!("building data for seed {seed}"))?;
    let mut cfg = config.clone();
    cfg.n = data.len();
    cfg.d_prime = data.dim();
    let mut row = base_row(&cfg, seed, data.len());
    let mut plot = Vec::new();
    let algo = cfg.algorithm.name().to_string();
    let mut metric = |name: &str, level: Option<u32>, value: f64| {
        plot.push(PlotRecord {
            run,
            algorithm: algo.clone(),
            seed,
            n: data.len(),
            metric: name.to_string(),
            level,
            value,
        })
    };

    let started = Instant::now();
    let private = match cfg.algorithm {
        Algorithm::Baseline => None,
        Algorithm::OneRound => {
            let out = one_round_kmeans(&data, &cfg.alg1_params(seed)).with_context(|| format!("one-round run, seed {seed}, n {}", data.len()))?;
            row.reduced_dim = Some(out.reduced_dim);
            row.candidates = Some(out.proxy.len());
            for l in &out.levels {
                metric("picked", Some(l.level), l.picked as f64);
                metric("positive_picks", Some(l.level), l.positive_picks as f64);
                metric("count_mass", Some(l.level), l.count_mass);
                metric("histogram_entries", Some(l.level), l.histogram_entries as f64);
                metric("error_bound", Some(l.level), l.error_bound);
            }
            Some(PrivateRun::OneRound(Box::new(out)))
        }
        Algorithm::LowError => {
            let out = low_error_kmeans(&data, &cfg.alg2_params(seed)).with_context(|| format!("low-error run, seed {seed}, n {}", data.len()))?;
            row.reduced_dim = Some(out.map.dim());
            row.candidates = Some(out.candidates.len());
            row.candidate_cap = Some(out.audit.cap);
            row.repetitions = Some(out.plan.repetitions);
            row.lsh_t = Some(out.plan.profile.t);
            for ctx in &out.contexts {
                for (l, h) in ctx.labels.heavy_counts().iter().enumerate() {
                    metric(&format!("heavy_cells_f{}", ctx.f), Some(l as u32), *h as f64);
                }
            }
            metric("active_calls", None, out.round2.active_calls as f64);
            metric("queried_buckets", None, out.round2.queried_buckets as f64);
            Some(PrivateRun::LowError(Box::new(out)))
        }
    };
    let private_secs = started.elapsed().as_secs_f64();

    let started = Instant::now();
    let base = baseline(&cfg, &data, seed)?;
    row.baseline_secs = started.elapsed().as_secs_f64();
    row.baseline_cost = clustering_cost(&data, None, base.points());
    row.opt_estimate = row.baseline_cost;

    if let Some(p) = &private {
        let spent = p.spent();
        let cost = clustering_cost(&data, None, p.centers().points());
        let report = CostReport::new(cost, row.baseline_cost, row.opt_estimate, private_secs, spent);
        row.epsilon_spent = Some(spent.epsilon);
        row.delta_spent = Some(spent.delta);
        row.rounds = Some(p.rounds());
        row.sentinels = Some(p.centers().sentinel_count());
        row.private_cost = Some(report.private_cost);
        row.additive_gap = Some(report.additive_gap);
        row.gap_over_opt = Some(report.gap_over_opt());
        row.mult_ratio = Some(report.mult_ratio);
        row.private_secs = Some(private_secs);
        metric("mult_ratio", None, report.mult_ratio);
        metric("gap_over_opt", None, report.gap_over_opt());
    }
    Ok(RunOutcome { row, plot, private, baseline: base, data })
}

/// Every seed of the config; writes CSV (and artifacts/plot data when
/// enabled) into `out_dir` if given.
pub fn run_experiment(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<Vec<RunRow>> {
    config.validate()?;
    let mut rows = Vec::new();
    let mut plot = Vec::new();
    for (i, seed) in config.seeds.iter().enumerate() {
        let outcome = run_once(config, *seed, i)?;
        if let (Some(dir), true) = (out_dir, config.output.artifacts) {
            if let Some(p) = &outcome.private {
                let art = RunArtifacts::from_run(p, *seed);
                art.write(&dir.join(format!("artifacts-{}-seed{}.json", config.algorithm.name(), seed)))?;
            }
        }
        rows.push(outcome.row);
        plot.extend(outcome.plot);
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write_csv(&dir.join(format!("runs-{}.csv", config.algorithm.name())), &rows)?;
        if config.output.plot_data {
            write_csv(&dir.join(format!("plot-{}.csv", config.algorithm.name())), &plot)?;
        }
    }
    Ok(rows)
}

/// The same config at every `n` in `ns`.
pub fn sweep(config: &ExperimentConfig, ns: &[usize], out_dir: Option<&Path>) -> Result<Vec<RunRow>> {
    let mut rows = Vec::new();
    for n in ns {
        let cfg = ExperimentConfig { n: *n, ..config.clone() };
        rows.extend(run_experiment(&cfg, None).with_context(|| format!("sweep at n = {n}"))?);
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        write_csv(&dir.join(format!("sweep-{}.csv", config.algorithm.name())), &rows)?;
    }
    Ok(rows)
}

pub fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    Some(if xs.len() % 2 == 1 { xs[m] } else { 0.5 * (xs[m - 1] + xs[m]) })
}

/// Median `additive_gap/opt_estimate` per `n`, in increasing `n`.
pub fn median_gap_by_n(rows: &[RunRow]) -> Vec<(usize, f64)> {
    let mut ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    ns.into_iter()
        .filter_map(|n| median(rows.iter().filter(|r| r.n == n).filter_map(|r| r.gap_over_opt).collect()).map(|m| (n, m)))
        .collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<RunRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    r.deserialize().map(|x| x.map_err(anyhow::Error::from)).collect()
}
