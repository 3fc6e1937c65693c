//! Empirical check of the frozen constants inside the error bounds.
//!
//! Each probe plants a known input, runs the randomizer many times and
//! reports how the observed error compares with the analytic bound. A
//! `worst_ratio` at most 1 means the frozen constant is conservative on the
//! probe.

use anyhow::Result;
use ldpkm_core::freq::{bitstogram_round, bitstogram_scan, heavy_sums_round, Value};
use ldpkm_core::lsh::{floor_p1, tune_t, DEFAULT_T_MAX, FLOOR_P1_CONSTANT};
use ldpkm_core::prf::derive;
use ldpkm_core::protocol::Session;
use ldpkm_core::{NoiseMode, PrivacyBudget};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub name: String,
    pub trials: usize,
    /// Largest observed error divided by its bound.
    pub worst_ratio: f64,
    /// Trials in which every guarantee of the probe held.
    pub held: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub e_scale: f64,
    pub m_scale: f64,
    pub floor_p1_constant: f64,
    pub probes: Vec<Probe>,
}

/// Planted values at the given frequencies, the rest spread uniformly.
fn planted(n: usize, bits: u32, freqs: &[f64], seed: u64) -> (Vec<Value>, Vec<(Value, usize)>) {
    let mut values = Vec::with_capacity(n);
    let mut truth = Vec::new();
    for (i, f) in freqs.iter().enumerate() {
        let v = Value::from_u64(derive(seed, i as u64) & ((1u64 << bits) - 1), bits);
        let c = (f * n as f64) as usize;
        values.extend(std::iter::repeat_n(v.clone(), c));
        truth.push((v, c));
    }
    let mut j = 1_000;
    while values.len() < n {
        values.push(Value::from_u64(derive(seed, j) & ((1u64 << bits) - 1), bits));
        j += 1;
    }
    (values, truth)
}

fn exact_count(values: &[Value], v: &Value) -> f64 {
    values.iter().filter(|x| *x == v).count() as f64
}

pub fn probe_hashed(n: usize, bits: u32, epsilon: f64, beta: f64, trials: usize) -> Result<Probe> {
    let mut worst: f64 = 0.0;
    let mut held = 0;
    for t in 0..trials {
        let (values, truth) = planted(n, bits, &[0.3, 0.2, 0.05], t as u64);
        let mut s = Session::new(n, PrivacyBudget::pure(epsilon), NoiseMode::Private, derive(7, t as u64));
        let h = bitstogram_round(&mut s.begin_round(), "probe", &values, bits, epsilon, beta)?;
        let mut ok = true;
        for (v, est) in h.entries() {
            let r = (est - exact_count(&values, v)).abs() / h.error_bound;
            worst = worst.max(r);
            ok &= r <= 1.0;
        }
        for (v, c) in &truth {
            if *c as f64 >= h.omission_threshold {
                ok &= h.raw(v).is_some();
            }
        }
        held += ok as usize;
    }
    Ok(Probe {
        name: format!("hashed n={n} bits={bits} eps={epsilon}"),
        trials,
        worst_ratio: worst,
        held,
    })
}

pub fn probe_scan(n: usize, candidates: usize, epsilon: f64, beta: f64, trials: usize) -> Result<Probe> {
    let bits = 20;
    let mut worst: f64 = 0.0;
    let mut held = 0;
    for t in 0..trials {
        let (values, truth) = planted(n, bits, &[0.3, 0.2, 0.05], t as u64);
        let mut cands: Vec<Value> = truth.iter().map(|(v, _)| v.clone()).collect();
        cands.extend((0..candidates.saturating_sub(cands.len())).map(|i| Value::from_u64(derive(99, i as u64) & 0xfffff, bits)));
        let mut s = Session::new(n, PrivacyBudget::pure(epsilon), NoiseMode::Private, derive(8, t as u64));
        let h = bitstogram_scan(&mut s.begin_round(), "probe", &values, &cands, epsilon, beta)?;
        let mut ok = true;
        for (v, est) in h.entries() {
            let r = (est - exact_count(&values, v)).abs() / h.error_bound;
            worst = worst.max(r);
            ok &= r <= 1.0;
        }
        held += ok as usize;
    }
    Ok(Probe {
        name: format!("scan n={n} candidates={candidates} eps={epsilon}"),
        trials,
        worst_ratio: worst,
        held,
    })
}

pub fn probe_sums(n: usize, dim: usize, epsilon: f64, delta: f64, beta: f64, trials: usize) -> Result<Probe> {
    let mut worst: f64 = 0.0;
    let mut held = 0;
    let bits = 16;
    for t in 0..trials {
        let hot = Value::from_u64(1, bits);
        let values: Vec<Value> = (0..n).map(|i| if i % 2 == 0 { hot.clone() } else { Value::from_u64(2 + i as u64 % 1000, bits) }).collect();
        let mut g = vec![0.0; n * dim];
        for i in 0..n {
            g[i * dim + i % dim] = if i % 3 == 0 { 1.0 } else { 0.5 };
        }
        let mut s = Session::new(n, PrivacyBudget::new(epsilon, delta)?, NoiseMode::Private, derive(9, t as u64));
        let o = heavy_sums_round(&mut s.begin_round(), "probe", &values, &g, dim, 1.0, epsilon, delta)?;
        let mut exact = vec![0.0; dim];
        for i in (0..n).step_by(2) {
            exact.iter_mut().zip(&g[i * dim..(i + 1) * dim]).for_each(|(e, x)| *e += x);
        }
        let got = o.query(&hot);
        let err = got.iter().zip(&exact).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let r = err / o.error_bound(beta);
        worst = worst.max(r);
        held += (r <= 1.0) as usize;
    }
    Ok(Probe {
        name: format!("sums n={n} d={dim} eps={epsilon}"),
        trials,
        worst_ratio: worst,
        held,
    })
}

/// `floor_p1(B, c)/p(1)` over a small grid of targets; at most 1 means the
/// tuner always clears the floor.
pub fn probe_lsh_floor() -> Result<Probe> {
    let mut worst: f64 = 0.0;
    let mut held = 0;
    let mut trials = 0;
    for c in [2.0, 3.0, 4.0] {
        for b in [2.0, 10.0, 100.0, 1000.0] {
            let (_, prof) = tune_t(b, c, DEFAULT_T_MAX)?;
            let r = floor_p1(b, c) / prof.p1;
            worst = worst.max(r);
            held += (r <= 1.0) as usize;
            trials += 1;
        }
    }
    Ok(Probe {
        name: "lsh p1 floor".into(),
        trials,
        worst_ratio: worst,
        held,
    })
}

pub fn calibrate(trials: usize) -> Result<CalibrationReport> {
    Ok(CalibrationReport {
        e_scale: ldpkm_core::freq::histogram::E_SCALE,
        m_scale: ldpkm_core::freq::histogram::M_SCALE,
        floor_p1_constant: FLOOR_P1_CONSTANT,
        probes: vec![
            probe_hashed(20_000, 20, 2.0, 0.05, trials)?,
            probe_hashed(20_000, 48, 1.0, 0.05, trials)?,
            probe_scan(10_000, 64, 1.0, 0.05, trials)?,
            probe_sums(10_000, 4, 1.0, 1e-5, 0.05, trials)?,
            probe_lsh_floor()?,
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_calibration_is_conservative() {
        let p = probe_hashed(5_000, 16, 2.0, 0.05, 3).unwrap();
        assert_eq!(p.held, 3, "{p:?}");
        let p = probe_sums(2_000, 3, 1.0, 1e-5, 0.05, 3).unwrap();
        assert_eq!(p.held, 3, "{p:?}");
        let p = probe_lsh_floor().unwrap();
        assert_eq!(p.held, p.trials);
    }
}
