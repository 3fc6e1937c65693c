//! Non-private weighted k-means: k-means++ seeding, Lloyd iterations,
//! best-of-restarts, and an exhaustive oracle for tiny instances.

use alloc::vec;
use alloc::vec::Vec;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{clustering_cost, nearest, squared_distance, CenterSet, Dataset};
use crate::prf::derive;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iterations: usize,
    /// Lloyd stops once the relative cost improvement drops below this.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iterations: 100,
            tolerance: 1e-9,
            seed: 0,
        }
    }
}

impl KMeansConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

fn weight(weights: Option<&[f64]>, i: usize) -> f64 {
    weights.map_or(1.0, |w| w[i])
}

fn check(data: &Dataset, weights: Option<&[f64]>, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1"));
    }
    if let Some(w) = weights {
        if w.len() != data.len() {
            return Err(Error::DimensionMismatch {
                expected: data.len(),
                got: w.len(),
            });
        }
        if w.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidParameter("weights must be finite and nonnegative"));
        }
    }
    let total: f64 = (0..data.len()).map(|i| weight(weights, i)).sum();
    if !(total > 0.0) {
        return Err(Error::InvalidParameter("k-means needs positive total weight"));
    }
    Ok(())
}

/// k-means++ seeding by weighted squared-distance sampling. When every
/// remaining point already coincides with a center, further centers are
/// drawn by weight alone, so duplicates appear.
pub fn kmeanspp_seed<R: Rng + ?Sized>(data: &Dataset, weights: Option<&[f64]>, k: usize, rng: &mut R) -> Result<CenterSet> {
    check(data, weights, k)?;
    let n = data.len();
    let by_weight = WeightedIndex::new((0..n).map(|i| weight(weights, i))).map_err(|_| Error::InvalidParameter("bad weights"))?;
    let mut centers = Dataset::empty(data.dim());
    centers.push(data.point(by_weight.sample(rng)));
    let mut d2: Vec<f64> = (0..n).map(|i| squared_distance(data.point(i), centers.point(0))).collect();
    while centers.len() < k {
        let scores: Vec<f64> = (0..n).map(|i| weight(weights, i) * d2[i]).collect();
        let pick = match WeightedIndex::new(&scores) {
            Ok(dist) => dist.sample(rng),
            Err(_) => by_weight.sample(rng),
        };
        centers.push(data.point(pick));
        let c = centers.point(centers.len() - 1);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(squared_distance(data.point(i), c));
        }
    }
    Ok(CenterSet::new(centers))
}

/// One Lloyd step: assign, then move each center to its cluster's weighted
/// mean. Empty clusters keep their center.
fn lloyd_step(data: &Dataset, weights: Option<&[f64]>, centers: &Dataset) -> Dataset {
    let (k, dim) = (centers.len(), data.dim());
    let mut sums = vec![0.0; k * dim];
    let mut mass = vec![0.0; k];
    for (i, p) in data.iter().enumerate() {
        let w = weight(weights, i);
        if w == 0.0 {
            continue;
        }
        let (j, _) = nearest(p, centers);
        mass[j] += w;
        for (s, x) in sums[j * dim..(j + 1) * dim].iter_mut().zip(p) {
            *s += w * x;
        }
    }
    let mut out = centers.clone();
    for j in 0..k {
        if mass[j] > 0.0 {
            for (o, s) in out.point_mut(j).iter_mut().zip(&sums[j * dim..(j + 1) * dim]) {
                *o = s / mass[j];
            }
        }
    }
    out
}

/// Lloyd iterations from `centers`; returns the final centers and the cost
/// after every step (the first entry is the starting cost).
pub fn lloyd_trace(data: &Dataset, weights: Option<&[f64]>, centers: &CenterSet, config: &KMeansConfig) -> (CenterSet, Vec<f64>) {
    let mut current = centers.points().clone();
    let mut costs = vec![clustering_cost(data, weights, &current)];
    for _ in 0..config.max_iterations {
        let next = lloyd_step(data, weights, &current);
        let cost = clustering_cost(data, weights, &next);
        let prev = *costs.last().unwrap();
        if cost > prev {
            // rounding only; keep the better set
            break;
        }
        current = next;
        costs.push(cost);
        if prev - cost <= config.tolerance * prev {
            break;
        }
    }
    (CenterSet::new(current), costs)
}

pub fn lloyd(data: &Dataset, weights: Option<&[f64]>, centers: &CenterSet, config: &KMeansConfig) -> CenterSet {
    lloyd_trace(data, weights, centers, config).0
}

/// Result of [`standard_kmeans_runs`].
#[derive(Clone, Debug, PartialEq)]
pub struct KMeansOutcome {
    pub centers: CenterSet,
    pub cost: f64,
    pub restart_costs: Vec<f64>,
}

/// Every restart of seeding plus Lloyd, keeping the cheapest.
pub fn standard_kmeans_runs(data: &Dataset, weights: Option<&[f64]>, k: usize, config: &KMeansConfig) -> Result<KMeansOutcome> {
    if config.restarts == 0 {
        return Err(Error::InvalidParameter("restarts must be at least 1"));
    }
    let mut best: Option<(CenterSet, f64)> = None;
    let mut restart_costs = Vec::with_capacity(config.restarts);
    for r in 0..config.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(derive(config.seed, r as u64));
        let seeded = kmeanspp_seed(data, weights, k, &mut rng)?;
        let (centers, costs) = lloyd_trace(data, weights, &seeded, config);
        let cost = *costs.last().unwrap();
        restart_costs.push(cost);
        if best.as_ref().is_none_or(|(_, c)| cost < *c) {
            best = Some((centers, cost));
        }
    }
    let (centers, cost) = best.unwrap();
    Ok(KMeansOutcome {
        centers,
        cost,
        restart_costs,
    })
}

pub fn standard_kmeans(data: &Dataset, weights: Option<&[f64]>, k: usize, config: &KMeansConfig) -> Result<CenterSet> {
    standard_kmeans_runs(data, weights, k, config).map(|o| o.centers)
}

pub const BRUTE_FORCE_MAX_N: usize = 14;
pub const BRUTE_FORCE_MAX_K: usize = 3;

/// Exact optimum by enumerating every partition into at most `k` parts.
pub fn brute_force_kmeans(data: &Dataset, k: usize) -> Result<(CenterSet, f64)> {
    let (n, dim) = (data.len(), data.dim());
    if n > BRUTE_FORCE_MAX_N || k > BRUTE_FORCE_MAX_K {
        return Err(Error::TooLarge { n, k });
    }
    if k == 0 || n == 0 {
        return Err(Error::InvalidParameter("brute force needs n, k ≥ 1"));
    }
    let sq_total: f64 = data.coords().iter().map(|x| x * x).sum();
    // restricted growth strings: label[i] ≤ 1 + max(label[..i]) and < k
    let mut label = vec![0usize; n];
    let mut best = (f64::INFINITY, label.clone());
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    loop {
        sums.iter_mut().for_each(|s| *s = 0.0);
        counts.iter_mut().for_each(|c| *c = 0);
        for (i, p) in data.iter().enumerate() {
            counts[label[i]] += 1;
            for (s, x) in sums[label[i] * dim..(label[i] + 1) * dim].iter_mut().zip(p) {
                *s += x;
            }
        }
        let explained: f64 = (0..k)
            .filter(|j| counts[*j] > 0)
            .map(|j| sums[j * dim..(j + 1) * dim].iter().map(|s| s * s).sum::<f64>() / counts[j] as f64)
            .sum();
        let cost = (sq_total - explained).max(0.0);
        if cost < best.0 {
            best = (cost, label.clone());
        }
        // next string
        let mut i = n;
        loop {
            if i == 1 {
                return Ok(finish(data, k, &best.1));
            }
            i -= 1;
            let cap = label[..i].iter().max().unwrap() + 1;
            if label[i] < cap && label[i] + 1 < k {
                label[i] += 1;
                label[i + 1..].iter_mut().for_each(|x| *x = 0);
                break;
            }
        }
    }
}

fn finish(data: &Dataset, k: usize, label: &[usize]) -> (CenterSet, f64) {
    let dim = data.dim();
    let mut centers = Dataset::empty(dim);
    for j in 0..k {
        let members: Vec<&[f64]> = data.iter().zip(label).filter(|(_, l)| **l == j).map(|(p, _)| p).collect();
        if members.is_empty() {
            // fewer parts than k: pad with a data point
            centers.push(data.point(0));
            continue;
        }
        let mut mean = vec![0.0; dim];
        for p in &members {
            mean.iter_mut().zip(*p).for_each(|(m, x)| *m += x);
        }
        mean.iter_mut().for_each(|m| *m /= members.len() as f64);
        centers.push(&mean);
    }
    let cost = clustering_cost(data, None, &centers);
    (CenterSet::new(centers), cost)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(xs: &[f64]) -> Dataset {
        Dataset::new(1, xs.to_vec()).unwrap()
    }

    #[test]
    fn brute_force_examples() {
        let (c, cost) = brute_force_kmeans(&line(&[0.0, 1.0, 9.0, 10.0]), 2).unwrap();
        assert!((cost - 1.0).abs() < 1e-12);
        let mut xs: Vec<f64> = c.points().coords().to_vec();
        xs.sort_by(f64::total_cmp);
        assert_eq!(xs, [0.5, 9.5]);
        assert_eq!(brute_force_kmeans(&line(&[1.0, 5.0, 7.0]), 3).unwrap().1, 0.0);
        // k = 1: n times the variance
        let (_, one) = brute_force_kmeans(&line(&[1.0, 2.0, 6.0]), 1).unwrap();
        assert!((one - 14.0).abs() < 1e-12);
        assert!(matches!(brute_force_kmeans(&line(&[0.0; 15]), 2), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn seeding_k_equals_n_hits_every_point() {
        let data = line(&[0.0, 3.0, 8.0, 20.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = kmeanspp_seed(&data, None, 4, &mut rng).unwrap();
        assert_eq!(clustering_cost(&data, None, c.points()), 0.0);
        // duplicates once every point is covered
        assert_eq!(kmeanspp_seed(&data, None, 6, &mut rng).unwrap().len(), 6);
    }

    #[test]
    fn one_center_moves_to_weighted_mean() {
        let data = line(&[0.0, 1.0, 5.0]);
        let w = [1.0, 1.0, 2.0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let seeded = kmeanspp_seed(&data, Some(&w), 1, &mut rng).unwrap();
        assert!(data.iter().any(|p| p == seeded.center(0)));
        let cfg = KMeansConfig { max_iterations: 1, ..KMeansConfig::default() };
        assert_eq!(lloyd(&data, Some(&w), &seeded, &cfg).center(0), [2.75]);
    }

    #[test]
    fn two_blobs_split_under_every_seed() {
        let mut rows = Vec::new();
        for i in 0..20 {
            rows.push(vec![i as f64 * 0.01, 0.0]);
            rows.push(vec![10.0 + i as f64 * 0.01, 5.0]);
        }
        let data = Dataset::from_rows(rows).unwrap();
        for seed in 0..20 {
            let cfg = KMeansConfig { restarts: 20, seed, ..KMeansConfig::default() };
            let c = standard_kmeans(&data, None, 2, &cfg).unwrap();
            let mut xs: Vec<f64> = (0..2).map(|j| c.center(j)[0]).collect();
            xs.sort_by(f64::total_cmp);
            assert!(xs[0] < 1.0 && xs[1] > 9.0);
        }
    }

    #[test]
    fn optimal_centers_are_a_fixed_point() {
        let data = line(&[0.0, 1.0, 9.0, 10.0]);
        let (opt, _) = brute_force_kmeans(&data, 2).unwrap();
        let after = lloyd(&data, None, &opt, &KMeansConfig::default());
        assert_eq!(after.points(), opt.points());
    }

    #[test]
    fn zero_weight_is_rejected() {
        let data = line(&[1.0, 2.0]);
        assert!(standard_kmeans(&data, Some(&[0.0, 0.0]), 1, &KMeansConfig::default()).is_err());
    }

    fn instance() -> impl Strategy<Value = (Dataset, usize)> {
        (3usize..=10, 1usize..=3, 1usize..=3).prop_flat_map(|(n, d, k)| {
            (proptest::collection::vec(-1.0f64..1.0, n * d).prop_map(move |c| Dataset::new(d, c).unwrap()), Just(k))
        })
    }

    /// Minimum over all `k^n` labelings, with per-label means.
    fn naive_optimum(data: &Dataset, k: usize) -> f64 {
        let n = data.len();
        let mut best = f64::INFINITY;
        for code in 0..k.pow(n as u32) {
            let label: Vec<usize> = (0..n).map(|i| code / k.pow(i as u32) % k).collect();
            let mut centers = Dataset::empty(data.dim());
            for j in 0..k {
                let members: Vec<&[f64]> = data.iter().zip(&label).filter(|(_, l)| **l == j).map(|(p, _)| p).collect();
                let mut mean = vec![0.0; data.dim()];
                for p in &members {
                    mean.iter_mut().zip(*p).for_each(|(m, x)| *m += x / members.len() as f64);
                }
                centers.push(if members.is_empty() { data.point(0) } else { &mean });
            }
            best = best.min(clustering_cost(data, None, &centers));
        }
        best
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn brute_force_matches_naive_labelings((data, k) in instance()) {
            let (_, opt) = brute_force_kmeans(&data, k).unwrap();
            prop_assert!((opt - naive_optimum(&data, k)).abs() <= 1e-9);
        }

        #[test]
        fn lloyd_cost_never_increases((data, k) in instance(), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let start = kmeanspp_seed(&data, None, k, &mut rng).unwrap();
            let (_, costs) = lloyd_trace(&data, None, &start, &KMeansConfig::default());
            prop_assert!(costs.windows(2).all(|w| w[1] <= w[0]));
        }

        #[test]
        fn best_restart_is_reported((data, k) in instance(), seed in any::<u64>()) {
            let cfg = KMeansConfig { restarts: 5, seed, ..KMeansConfig::default() };
            let out = standard_kmeans_runs(&data, None, k, &cfg).unwrap();
            prop_assert!(out.restart_costs.iter().all(|c| out.cost <= *c));
            prop_assert!((clustering_cost(&data, None, out.centers.points()) - out.cost).abs() <= 1e-12);
        }

        #[test]
        fn brute_force_is_a_lower_bound((data, k) in instance(), seed in any::<u64>()) {
            let (c, opt) = brute_force_kmeans(&data, k).unwrap();
            prop_assert!((clustering_cost(&data, None, c.points()) - opt).abs() <= 1e-9);
            let cfg = KMeansConfig { restarts: 3, seed, ..KMeansConfig::default() };
            let out = standard_kmeans_runs(&data, None, k, &cfg).unwrap();
            prop_assert!(out.cost >= opt - 1e-9);
        }
    }
}
