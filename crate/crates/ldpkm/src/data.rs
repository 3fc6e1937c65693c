//! Synthetic benchmark data and point files.

use std::path::Path;

use anyhow::{Context, Result};
use ldpkm_core::geometry::{norm, squared_distance};
use ldpkm_core::Dataset;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

/// A planted mixture with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Mixture {
    pub data: Dataset,
    pub means: Dataset,
    pub labels: Vec<usize>,
}

/// Means at pairwise distance `separation`: scaled basis vectors when
/// `k ≤ d′`, otherwise rejection sampling in the ball of radius 1/2.
fn plant_means<R: Rng + ?Sized>(d_prime: usize, k: usize, separation: f64, rng: &mut R) -> Dataset {
    let mut means = Dataset::empty(d_prime);
    if k <= d_prime {
        for j in 0..k {
            let mut m = vec![0.0; d_prime];
            m[j] = separation / std::f64::consts::SQRT_2;
            means.push(&m);
        }
        return means;
    }
    let mut gap = separation * separation;
    while means.len() < k {
        let mut placed = false;
        for _ in 0..10_000 {
            let v: Vec<f64> = (0..d_prime).map(|_| StandardNormal.sample(rng)).collect();
            let r = 0.5 * rng.random::<f64>().powf(1.0 / d_prime as f64) / norm(&v).max(1e-300);
            let cand: Vec<f64> = v.iter().map(|x| x * r).collect();
            if means.iter().all(|m| squared_distance(m, &cand) >= gap) {
                means.push(&cand);
                placed = true;
                break;
            }
        }
        if !placed {
            gap *= 0.9;
        }
    }
    means
}

/// `n` points, component `i mod k`, Gaussian noise of the given standard
/// deviation; points leaving the unit ball are pulled back onto its surface.
pub fn gen_gaussian_mixture<R: Rng + ?Sized>(n: usize, d_prime: usize, k: usize, separation: f64, stddev: f64, rng: &mut R) -> Mixture {
    let means = plant_means(d_prime, k, separation, rng);
    let noise = Normal::new(0.0, stddev).expect("nonnegative stddev");
    let mut data = Dataset::empty(d_prime);
    let mut labels = Vec::with_capacity(n);
    let mut p = vec![0.0; d_prime];
    for i in 0..n {
        let j = i % k;
        for (x, m) in p.iter_mut().zip(means.point(j)) {
            *x = m + noise.sample(rng);
        }
        let r = norm(&p);
        if r > 1.0 {
            p.iter_mut().for_each(|x| *x /= r);
        }
        data.push(&p);
        labels.push(j);
    }
    Mixture { data, means, labels }
}

/// Points from a headerless CSV, one agent per row.
pub fn load_points(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: row {}", path.display(), i + 1))?;
        let row: Vec<f64> = rec.iter().map(|s| s.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().with_context(|| format!("{}: row {}", path.display(), i + 1))?;
        rows.push(row);
    }
    Dataset::from_rows(rows).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}

pub fn save_points(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for p in data.iter() {
        w.write_record(p.iter().map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
