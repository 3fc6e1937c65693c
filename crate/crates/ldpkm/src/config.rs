//! Experiment configuration (TOML on disk, flags on the command line).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ldpkm_core::kmeans::KMeansConfig;
use ldpkm_core::low_error::Alg2Params;
use ldpkm_core::one_round::Alg1Params;
use ldpkm_core::NoiseMode;
use serde::{Deserialize, Serialize};

/// Environment variable overriding [`OutputSpec::dir`].
pub const OUTPUT_DIR_ENV: &str = "LDPKM_OUTPUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// One round over nested grids.
    OneRound,
    /// Four rounds with heavy cells and LSH.
    LowError,
    /// Only the non-private k-means++ baseline.
    Baseline,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::OneRound => "one-round",
            Algorithm::LowError => "low-error",
            Algorithm::Baseline => "baseline",
        }
    }
}

/// Planted Gaussian mixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSpec {
    pub separation: f64,
    pub stddev: f64,
    /// Optional CSV of points (one row per agent) used instead of the mixture.
    pub path: Option<PathBuf>,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            separation: 0.4,
            stddev: 0.03,
            path: None,
        }
    }
}

/// Constants the analysis leaves unspecified.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Constants {
    pub c_dim: f64,
    pub c_s: f64,
    /// Cap on grid points per level (`N_G`); defaults to `20k`.
    pub n_g: Option<usize>,
    pub c_b: f64,
    pub c_r: f64,
    pub max_repetitions: usize,
    pub d_power: f64,
    pub heavy_cap: f64,
    pub restarts: usize,
    pub max_iterations: usize,
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            c_dim: 1.0,
            c_s: 1.0,
            n_g: None,
            c_b: 1e-6,
            c_r: 4.0,
            max_repetitions: 10_000,
            d_power: 0.0,
            heavy_cap: 1.0,
            restarts: 10,
            max_iterations: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputSpec {
    pub dir: PathBuf,
    /// Write per-run round artifacts as JSON.
    pub artifacts: bool,
    /// Also write the long-format plot CSV.
    pub plot_data: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            artifacts: false,
            plot_data: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub n: usize,
    pub d_prime: usize,
    pub k: usize,
    pub epsilon: f64,
    pub delta: f64,
    /// Dimension-reduction accuracy.
    pub alpha: f64,
    /// LSH approximation factor (four-round protocol).
    pub c: f64,
    pub beta: f64,
    pub data: DataSpec,
    /// One run per seed.
    pub seeds: Vec<u64>,
    pub constants: Constants,
    pub output: OutputSpec,
    pub noiseless: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::OneRound,
            n: 10_000,
            d_prime: 10,
            k: 5,
            epsilon: 2.0,
            delta: 1e-6,
            alpha: 0.3,
            c: 2.0,
            beta: 0.1,
            data: DataSpec::default(),
            seeds: vec![0],
            constants: Constants::default(),
            output: OutputSpec::default(),
            noiseless: false,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n < self.k {
            bail!("need n >= k >= 1 (n = {}, k = {})", self.n, self.k);
        }
        if self.d_prime == 0 {
            bail!("d_prime must be positive");
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            bail!("epsilon must be positive, got {}", self.epsilon);
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            bail!("delta must lie in (0, 1), got {}", self.delta);
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            bail!("alpha must lie in (0, 1), got {}", self.alpha);
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            bail!("beta must lie in (0, 1), got {}", self.beta);
        }
        if self.algorithm == Algorithm::LowError && !(self.c > std::f64::consts::SQRT_2) {
            bail!("c must exceed sqrt(2), got {}", self.c);
        }
        if !(self.data.stddev >= 0.0) || !(self.data.separation >= 0.0) {
            bail!("mixture separation and stddev must be nonnegative");
        }
        if self.seeds.is_empty() {
            bail!("at least one seed is required");
        }
        Ok(())
    }

    /// Output directory after the environment override.
    pub fn output_dir(&self) -> PathBuf {
        std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| self.output.dir.clone())
    }

    pub fn mode(&self) -> NoiseMode {
        if self.noiseless {
            NoiseMode::Noiseless
        } else {
            NoiseMode::Private
        }
    }

    pub fn kmeans(&self, seed: u64) -> KMeansConfig {
        KMeansConfig {
            restarts: self.constants.restarts,
            max_iterations: self.constants.max_iterations,
            ..KMeansConfig::default()
        }
        .with_seed(seed)
    }

    pub fn alg1_params(&self, seed: u64) -> Alg1Params {
        let mut p = Alg1Params::new(self.n, self.k, self.epsilon, self.delta, self.alpha, self.beta);
        if let Some(n_g) = self.constants.n_g {
            p = p.with_n_g(n_g);
        }
        p.c_dim = self.constants.c_dim;
        p.c_s = self.constants.c_s;
        p.kmeans = self.kmeans(seed);
        p.mode = self.mode();
        p.seed = seed;
        p
    }

    pub fn alg2_params(&self, seed: u64) -> Alg2Params {
        let mut p = Alg2Params::new(self.n, self.k, self.epsilon, self.delta, self.beta, self.c);
        p.alpha = self.alpha;
        p.c_dim = self.constants.c_dim;
        p.c_b = self.constants.c_b;
        p.c_r = self.constants.c_r;
        p.max_repetitions = self.constants.max_repetitions;
        p.d_power = self.constants.d_power;
        p.heavy_cap_constant = self.constants.heavy_cap;
        p.kmeans = self.kmeans(seed);
        p.mode = self.mode();
        p.seed = seed;
        p
    }
}
