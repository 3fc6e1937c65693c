//! Points, datasets, center sets and the k-means objective.
//!
//! Points are plain `&[f64]` slices. A [`Dataset`] stores its rows in one
//! flat buffer so agents and centers share one layout.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::privacy::PrivacyBudget;

/// Above this many terms, cost sums switch to compensated summation.
pub const COMPENSATED_THRESHOLD: usize = 100_000;

/// Denominator floor used for multiplicative ratios.
pub const RATIO_FLOOR: f64 = 1e-12;

/// Ordered multiset of points of one dimension; row `i` belongs to agent `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    dim: usize,
    coords: Vec<f64>,
}

impl Dataset {
    /// Build from a flat row-major buffer.
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive"));
        }
        if coords.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: coords.len() % dim,
            });
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("coordinates must be finite"));
        }
        Ok(Self { dim, coords })
    }

    /// An empty dataset of the given dimension.
    pub fn empty(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Self {
            dim,
            coords: Vec::new(),
        }
    }

    pub fn from_rows<I, R>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = R>,
        R: AsRef<[f64]>,
    {
        let mut dim = 0;
        let mut coords = Vec::new();
        for row in rows {
            let row = row.as_ref();
            if dim == 0 {
                dim = row.len();
            } else if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            coords.extend_from_slice(row);
        }
        Self::new(dim, coords)
    }

    pub fn push(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.dim, "dimension mismatch");
        self.coords.extend_from_slice(p);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn point_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> core::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }
}

/// Centers, optionally weighted (a proxy dataset is a weighted center set).
///
/// A center flagged as a sentinel stands for a cluster that received no mass;
/// it sits at the origin so indices stay stable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterSet {
    centers: Dataset,
    weights: Option<Vec<f64>>,
    sentinel: Vec<bool>,
}

impl CenterSet {
    pub fn new(centers: Dataset) -> Self {
        let n = centers.len();
        Self {
            centers,
            weights: None,
            sentinel: vec![false; n],
        }
    }

    pub fn weighted(centers: Dataset, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != centers.len() {
            return Err(Error::DimensionMismatch {
                expected: centers.len(),
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter("weights must be finite and nonnegative"));
        }
        let n = centers.len();
        Ok(Self {
            centers,
            weights: Some(weights),
            sentinel: vec![false; n],
        })
    }

    pub(crate) fn with_sentinels(mut self, sentinel: Vec<bool>) -> Self {
        assert_eq!(sentinel.len(), self.centers.len());
        self.sentinel = sentinel;
        self
    }

    pub fn points(&self) -> &Dataset {
        &self.centers
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn center(&self, i: usize) -> &[f64] {
        self.centers.point(i)
    }

    pub fn is_sentinel(&self, i: usize) -> bool {
        self.sentinel[i]
    }

    pub fn sentinel_count(&self) -> usize {
        self.sentinel.iter().filter(|s| **s).count()
    }

    pub fn total_weight(&self) -> f64 {
        match &self.weights {
            Some(w) => w.iter().sum(),
            None => self.len() as f64,
        }
    }
}

/// Per-point index of the serving center.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
}

/// Cost of a private run next to the non-private baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub private_cost: f64,
    pub baseline_cost: f64,
    pub opt_estimate: f64,
    pub additive_gap: f64,
    pub mult_ratio: f64,
    pub runtime_secs: f64,
    pub budget_spent: PrivacyBudget,
}

impl CostReport {
    /// `opt_estimate` is the best non-private cost available (usually the
    /// baseline itself).
    pub fn new(
        private_cost: f64,
        baseline_cost: f64,
        opt_estimate: f64,
        runtime_secs: f64,
        budget_spent: PrivacyBudget,
    ) -> Self {
        Self {
            private_cost,
            baseline_cost,
            opt_estimate,
            additive_gap: private_cost - baseline_cost,
            mult_ratio: private_cost / baseline_cost.max(RATIO_FLOOR),
            runtime_secs,
            budget_spent,
        }
    }

    pub fn gap_over_opt(&self) -> f64 {
        self.additive_gap / self.opt_estimate.max(RATIO_FLOOR)
    }
}

/// `z(p, q) = ‖p − q‖²`.
///
/// # Panics
/// If the dimensions differ.
#[inline]
pub fn squared_distance(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "dimension mismatch");
    p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[inline]
pub fn norm(p: &[f64]) -> f64 {
    libm::sqrt(p.iter().map(|a| a * a).sum())
}

/// Nearest center and its squared distance; ties go to the lowest index.
///
/// # Panics
/// If `centers` is empty.
pub fn nearest(p: &[f64], centers: &Dataset) -> (usize, f64) {
    assert!(!centers.is_empty(), "empty center set");
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = squared_distance(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if libm::fabs(self.sum) >= libm::fabs(x) {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

fn accumulate<I: Iterator<Item = f64>>(n: usize, terms: I) -> f64 {
    if n >= COMPENSATED_THRESHOLD {
        let mut acc = CompensatedSum::default();
        terms.for_each(|t| acc.add(t));
        acc.value()
    } else {
        terms.sum()
    }
}

/// `Σ_p w_p · min_s z(p, s)`; unweighted points count once.
///
/// # Panics
/// If `centers` is empty, dimensions differ, or the weights have the wrong
/// length.
pub fn clustering_cost(data: &Dataset, weights: Option<&[f64]>, centers: &Dataset) -> f64 {
    assert!(!centers.is_empty(), "empty center set");
    assert_eq!(data.dim(), centers.dim(), "dimension mismatch");
    if let Some(w) = weights {
        assert_eq!(w.len(), data.len(), "weight length mismatch");
    }
    let terms = data.iter().enumerate().map(|(i, p)| {
        let w = weights.map_or(1.0, |w| w[i]);
        if w == 0.0 {
            0.0
        } else {
            w * nearest(p, centers).1
        }
    });
    accumulate(data.len(), terms)
}

/// Cost of a fixed assignment (each point charged to its labelled center).
pub fn assignment_cost(data: &Dataset, weights: Option<&[f64]>, assignment: &ClusterAssignment, centers: &Dataset) -> f64 {
    let terms = data.iter().enumerate().map(|(i, p)| {
        let w = weights.map_or(1.0, |w| w[i]);
        w * squared_distance(p, centers.point(assignment.labels[i]))
    });
    accumulate(data.len(), terms)
}

pub fn assign(data: &Dataset, centers: &Dataset) -> ClusterAssignment {
    ClusterAssignment {
        labels: data.iter().map(|p| nearest(p, centers).0).collect(),
    }
}

/// Weighted per-label means. Clusters with no mass get the origin and are
/// flagged as sentinels.
pub fn cluster_means(
    data: &Dataset,
    weights: Option<&[f64]>,
    assignment: &ClusterAssignment,
    num_centers: usize,
) -> CenterSet {
    let dim = data.dim();
    let mut sums = vec![0.0; num_centers * dim];
    let mut mass = vec![0.0; num_centers];
    for (i, p) in data.iter().enumerate() {
        let label = assignment.labels[i];
        assert!(label < num_centers, "label out of range");
        let w = weights.map_or(1.0, |w| w[i]);
        mass[label] += w;
        for (s, x) in sums[label * dim..(label + 1) * dim].iter_mut().zip(p) {
            *s += w * x;
        }
    }
    let mut sentinel = vec![false; num_centers];
    for j in 0..num_centers {
        let row = &mut sums[j * dim..(j + 1) * dim];
        if mass[j] > 0.0 {
            row.iter_mut().for_each(|s| *s /= mass[j]);
        } else {
            row.iter_mut().for_each(|s| *s = 0.0);
            sentinel[j] = true;
        }
    }
    let centers = Dataset::new(dim, sums).expect("means are finite");
    CenterSet::new(centers).with_sentinels(sentinel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ds(rows: &[&[f64]]) -> Dataset {
        Dataset::from_rows(rows.iter().copied()).unwrap()
    }

    #[test]
    fn squared_distance_examples() {
        assert_eq!(squared_distance(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(squared_distance(&[1.0, 0.0], &[0.0, 1.0]), 2.0);
        assert!((squared_distance(&[0.3, 0.4], &[0.0, 0.0]) - 0.25).abs() < 1e-15);
    }

    #[test]
    #[should_panic(expected = "dimension mismatch")]
    fn squared_distance_rejects_mismatch() {
        squared_distance(&[0.0], &[0.0, 1.0]);
    }

    #[test]
    fn cost_examples() {
        let d = ds(&[&[0.0, 0.0], &[1.0, 0.0]]);
        assert_eq!(clustering_cost(&d, None, &ds(&[&[0.0, 0.0]])), 1.0);
        assert_eq!(clustering_cost(&d, None, &d), 0.0);
        let d = ds(&[&[0.0, 0.0], &[2.0, 0.0], &[10.0, 0.0]]);
        let s = ds(&[&[1.0, 0.0], &[10.0, 0.0]]);
        assert_eq!(clustering_cost(&d, None, &s), 2.0);
        assert_eq!(clustering_cost(&d, Some(&[2.0, 0.0, 5.0]), &s), 2.0);
    }

    #[test]
    #[should_panic(expected = "empty center set")]
    fn cost_rejects_empty_centers() {
        clustering_cost(&ds(&[&[0.0]]), None, &Dataset::empty(1));
    }

    #[test]
    fn assign_examples() {
        let s = ds(&[&[0.0], &[1.0]]);
        assert_eq!(assign(&ds(&[&[0.0], &[1.0]]), &s).labels, [0, 1]);
        assert_eq!(assign(&ds(&[&[0.5]]), &s).labels, [0]);
        assert_eq!(assign(&ds(&[&[0.0], &[0.4], &[1.0]]), &s).labels, [0, 0, 1]);
    }

    #[test]
    fn means_examples() {
        let d = ds(&[&[0.0], &[2.0]]);
        let m = cluster_means(&d, None, &ClusterAssignment { labels: vec![0, 0] }, 1);
        assert_eq!(m.center(0), &[1.0]);
        let m = cluster_means(&d, None, &ClusterAssignment { labels: vec![0, 1] }, 2);
        assert_eq!(m.points(), &d);
        let d = ds(&[&[0.0], &[4.0], &[9.0]]);
        let m = cluster_means(&d, None, &ClusterAssignment { labels: vec![0, 0, 1] }, 2);
        assert_eq!(m.points(), &ds(&[&[2.0], &[9.0]]));
        let m = cluster_means(&d, None, &ClusterAssignment { labels: vec![0, 0, 0] }, 2);
        assert!(m.is_sentinel(1) && !m.is_sentinel(0));
        assert_eq!(m.center(1), &[0.0]);
    }

    #[test]
    fn compensated_sum_keeps_small_terms() {
        let mut acc = CompensatedSum::default();
        acc.add(1e16);
        for _ in 0..1000 {
            acc.add(1.0);
        }
        acc.add(-1e16);
        assert_eq!(acc.value(), 1000.0);
    }

    fn points(n: usize, dim: usize) -> impl Strategy<Value = Dataset> {
        proptest::collection::vec(-1.0f64..1.0, n * dim).prop_map(move |c| Dataset::new(dim, c).unwrap())
    }

    proptest! {
        #[test]
        fn lloyd_step_never_increases_cost(d in points(30, 3), s in points(4, 3)) {
            let a = assign(&d, &s);
            let means = cluster_means(&d, None, &a, s.len());
            // sentinel clusters had no points, so keeping the old center is a no-op
            let mut next = s.clone();
            for j in 0..s.len() {
                if !means.is_sentinel(j) {
                    next.point_mut(j).copy_from_slice(means.center(j));
                }
            }
            prop_assert!(clustering_cost(&d, None, &next) <= clustering_cost(&d, None, &s) + 1e-12);
        }

        #[test]
        fn weak_triangle(p in points(1, 4), q in points(1, 4), r in points(1, 4)) {
            let (p, q, r) = (p.point(0), q.point(0), r.point(0));
            prop_assert!(squared_distance(p, r) <= 2.0 * squared_distance(p, q) + 2.0 * squared_distance(q, r) + 1e-12);
        }

        #[test]
        fn perturbed_mean_identity(d in points(12, 3), delta in points(1, 3)) {
            // f({μ̂}) = f({μ}) + |C|·‖μ − μ̂‖², so the bound holds with equality
            let a = ClusterAssignment { labels: vec![0; d.len()] };
            let mu = cluster_means(&d, None, &a, 1);
            let mut hat = mu.points().clone();
            for (h, e) in hat.point_mut(0).iter_mut().zip(delta.point(0)) {
                *h += 0.1 * e;
            }
            let lhs = clustering_cost(&d, None, &hat);
            let rhs = clustering_cost(&d, None, mu.points())
                + d.len() as f64 * squared_distance(mu.center(0), hat.point(0));
            prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.max(1e-300));
        }
    }
}
