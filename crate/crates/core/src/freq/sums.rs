//! Private vector sums per value, and the noisy-average combinator.
//!
//! Agent `j` with value `v_j` and vector `g_j` releases
//! `y_j = Z[v_j, j]·g_j + η_j`, where `Z` is a public ±1 matrix indexed by
//! value and agent and `η_j` is Gaussian noise. The analyzer answers
//! `S(v) = Σ_j Z[v, j]·y_j`, which is unbiased for the sum of `g` over the
//! agents holding `v`. `Z` is never materialized: its rows come from a keyed
//! PRF of the value's digest.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::histogram::SuccinctHistogram;
use super::value::Value;
use crate::error::{Error, Result};
use crate::prf::{agent_rng, derive, Prf};
use crate::privacy::{gaussian_spec, GaussianNoiseSpec, PrivacyBudget};
use crate::protocol::Round;

const SALT_VALUE: u64 = 11;
const SALT_SIGN: u64 = 12;
const SALT_NOISE: u64 = 13;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum Storage {
    Reports(Vec<f64>),
    Exact(BTreeMap<Value, Vec<f64>>),
}

/// Aggregated reports of one sum-oracle call.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SumOracle {
    pub seed: u64,
    pub dim: usize,
    pub agents: usize,
    /// Diameter `Δ` of the range of `g`.
    pub diameter: f64,
    /// ℓ2 sensitivity `Δ_{g,2}` of `g`.
    pub sensitivity: f64,
    pub noise: GaussianNoiseSpec,
    storage: Storage,
}

impl SumOracle {
    fn keys(&self) -> (Prf, Prf) {
        (Prf::new(derive(self.seed, SALT_VALUE)), Prf::new(derive(self.seed, SALT_SIGN)))
    }

    /// `S(v) = Σ_j Z[v, j]·y_j`.
    pub fn query(&self, v: &Value) -> Vec<f64> {
        match &self.storage {
            Storage::Exact(map) => map.get(v).cloned().unwrap_or_else(|| vec![0.0; self.dim]),
            Storage::Reports(y) => {
                let (value, sign) = self.keys();
                let row = sign.row(value.hash_words(v.words()));
                let mut out = vec![0.0; self.dim];
                for (j, yj) in y.chunks_exact(self.dim).enumerate() {
                    let s = row.sign(j as u64);
                    for (o, x) in out.iter_mut().zip(yj) {
                        *o += s * x;
                    }
                }
                out
            }
        }
    }

    /// Norm bound on `S(v) − Σ_{f(x)=v} g(x)` that holds with probability
    /// `1 − β`: `2Δ√(2n ln((d+1)/β)) + (4 c_G Δ_{g,2}/ε)√(2dn ln(4/β))`.
    pub fn error_bound(&self, beta: f64) -> f64 {
        if matches!(self.storage, Storage::Exact(_)) {
            return 0.0;
        }
        let n = self.agents as f64;
        let d = self.dim as f64;
        2.0 * self.diameter * libm::sqrt(2.0 * n * libm::log((d + 1.0) / beta))
            + 4.0 * self.noise.c_g * self.sensitivity / self.noise.epsilon * libm::sqrt(2.0 * d * n * libm::log(4.0 / beta))
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.storage, Storage::Exact(_))
    }
}

/// Free-function form of [`SumOracle::query`].
pub fn sum_query(o: &SumOracle, v: &Value) -> Vec<f64> {
    o.query(v)
}

/// One sum-oracle call. `g` holds one `dim`-vector per agent, flattened; every
/// vector must lie in the ball of radius `radius`, so the range has diameter
/// `2·radius` and ℓ2 sensitivity `2·radius`.
#[allow(clippy::too_many_arguments)]
pub fn heavy_sums_round(
    round: &mut Round<'_>,
    label: &str,
    values: &[Value],
    g: &[f64],
    dim: usize,
    radius: f64,
    epsilon: f64,
    delta: f64,
) -> Result<SumOracle> {
    if dim == 0 || g.len() != values.len() * dim {
        return Err(Error::DimensionMismatch {
            expected: values.len() * dim,
            got: g.len(),
        });
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::Unbounded);
    }
    if g.chunks_exact(dim).any(|x| crate::geometry::norm(x) > radius * (1.0 + 1e-9)) {
        return Err(Error::Unbounded);
    }
    let diameter = 2.0 * radius;
    let sensitivity = 2.0 * radius;
    // sign flips double the worst-case change of a report
    let noise = gaussian_spec(epsilon, delta, 2.0 * sensitivity)?;
    round.charge_all(label, PrivacyBudget { epsilon, delta }, 1)?;
    let seed = round.fresh_seed();
    let mut oracle = SumOracle {
        seed,
        dim,
        agents: values.len(),
        diameter,
        sensitivity,
        noise,
        storage: Storage::Reports(Vec::new()),
    };
    if round.mode().is_noiseless() {
        let mut map: BTreeMap<Value, Vec<f64>> = BTreeMap::new();
        for (v, x) in values.iter().zip(g.chunks_exact(dim)) {
            let e = map.entry(v.clone()).or_insert_with(|| vec![0.0; dim]);
            e.iter_mut().zip(x).for_each(|(a, b)| *a += b);
        }
        oracle.storage = Storage::Exact(map);
        return Ok(oracle);
    }
    let (value, sign) = oracle.keys();
    let coins = derive(seed, SALT_NOISE);
    let mut y = Vec::with_capacity(g.len());
    for (j, (v, x)) in values.iter().zip(g.chunks_exact(dim)).enumerate() {
        let mut rng = agent_rng(coins, j);
        let s = sign.sign(value.hash_words(v.words()), j as u64);
        for xi in x {
            let z: f64 = StandardNormal.sample(&mut rng);
            y.push(s * xi + noise.sigma * z);
        }
    }
    oracle.storage = Storage::Reports(y);
    Ok(oracle)
}

/// `SO(v)/HG(v)`, or `None` when the clamped count is zero.
pub fn noisy_average(h: &SuccinctHistogram, o: &SumOracle, v: &Value) -> Option<Vec<f64>> {
    let count = h.query(v);
    if count <= 0.0 {
        return None;
    }
    Some(o.query(v).into_iter().map(|s| s / count).collect())
}

/// Error bound on a noisy average for a value held by `true_count` agents:
/// `(SO_E + HG_E·‖S_v/n_v‖)/(n_v − HG_E)`; infinite when `n_v ≤ HG_E`.
pub fn noisy_average_bound(sum_error: f64, count_error: f64, true_count: f64, true_mean_norm: f64) -> f64 {
    if true_count <= count_error {
        return f64::INFINITY;
    }
    (sum_error + count_error * true_mean_norm) / (true_count - count_error)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::freq::histogram::bitstogram_scan;
    use crate::protocol::{NoiseMode, Session};

    fn session(n: usize, mode: NoiseMode) -> Session {
        Session::new(n, PrivacyBudget::new(1e13, 0.5).unwrap(), mode, 21)
    }

    #[test]
    fn rejects_unbounded_g() {
        let mut s = session(1, NoiseMode::Private);
        let r = heavy_sums_round(&mut s.begin_round(), "s", &[Value::zeros(4)], &[2.0, 0.0], 2, 1.0, 1.0, 1e-5);
        assert_eq!(r, Err(Error::Unbounded));
    }

    #[test]
    fn noise_free_report_carries_the_sign() {
        // a single agent: the query on its own value undoes its sign
        let mut s = session(1, NoiseMode::Private);
        let v = Value::from_u64(3, 4);
        let o = heavy_sums_round(&mut s.begin_round(), "s", &[v.clone()], &[0.5, -0.25], 2, 1.0, 1e12, 0.4).unwrap();
        let q = o.query(&v);
        assert!((q[0] - 0.5).abs() < 1e-9 && (q[1] + 0.25).abs() < 1e-9);
        let Storage::Reports(y) = &o.storage else { panic!() };
        let (value, sign) = o.keys();
        let z = sign.sign(value.hash_words(v.words()), 0);
        assert!((y[0] - z * 0.5).abs() < 1e-9);
    }

    #[test]
    fn noise_std_matches_sigma() {
        let n = 10_000;
        let vals = vec![Value::from_u64(1, 4); n];
        let g = vec![0.0; n];
        let mut s = session(n, NoiseMode::Private);
        let o = heavy_sums_round(&mut s.begin_round(), "s", &vals, &g, 1, 1.0, 1.0, 1e-5).unwrap();
        let Storage::Reports(y) = &o.storage else { panic!() };
        let sd = libm::sqrt(y.iter().map(|x| x * x).sum::<f64>() / n as f64);
        assert!((sd / o.noise.sigma - 1.0).abs() < 0.03);
    }

    #[test]
    fn noiseless_sums_and_average() {
        let vals: Vec<Value> = [0, 0, 1].iter().map(|x| Value::from_u64(*x, 2)).collect();
        let g = [1.0, 0.0, 0.0, 1.0, 0.5, 0.5];
        let mut s = session(3, NoiseMode::Noiseless);
        let mut r = s.begin_round();
        let o = heavy_sums_round(&mut r, "s", &vals, &g, 2, 1.0, 1.0, 1e-5).unwrap();
        let h = bitstogram_scan(&mut r, "h", &vals, &vals[..], 1.0, 0.1).unwrap();
        assert_eq!(o.query(&vals[0]), [1.0, 1.0]);
        assert_eq!(noisy_average(&h, &o, &vals[0]).unwrap(), [0.5, 0.5]);
        assert_eq!(noisy_average(&h, &o, &Value::from_u64(3, 2)), None);
        assert_eq!(o.query(&Value::from_u64(3, 2)), [0.0, 0.0]);
    }

    #[test]
    fn zero_function_sums_to_noise_only() {
        let n = 5_000;
        let v = Value::from_u64(2, 4);
        let vals = vec![v.clone(); n];
        let mut s = session(n, NoiseMode::Private);
        let o = heavy_sums_round(&mut s.begin_round(), "s", &vals, &vec![0.0; 2 * n], 2, 1.0, 1.0, 1e-5).unwrap();
        assert!(crate::geometry::norm(&o.query(&v)) <= o.error_bound(0.05));
    }
}
