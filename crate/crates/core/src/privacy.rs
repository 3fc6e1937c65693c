//! Budgets, basic composition, the Gaussian mechanism and the per-agent
//! ledger that every local randomizer charges.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack used when comparing composed budgets.
pub const BUDGET_TOLERANCE: f64 = 1e-12;

/// Relative margin that puts `c_G` strictly above its lower bound.
pub const GAUSSIAN_MARGIN: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter("epsilon must be finite and nonnegative"));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::InvalidParameter("delta must lie in [0, 1)"));
        }
        Ok(Self { epsilon, delta })
    }

    pub const fn pure(epsilon: f64) -> Self {
        Self { epsilon, delta: 0.0 }
    }

    pub fn scale(self, factor: f64) -> Self {
        Self {
            epsilon: self.epsilon * factor,
            delta: self.delta * factor,
        }
    }

    /// `self ≤ other` in both coordinates, up to [`BUDGET_TOLERANCE`].
    pub fn within(&self, other: &PrivacyBudget) -> bool {
        le_tol(self.epsilon, other.epsilon) && le_tol(self.delta, other.delta)
    }

    /// Equal in both coordinates up to [`BUDGET_TOLERANCE`].
    pub fn matches(&self, other: &PrivacyBudget) -> bool {
        self.within(other) && other.within(self)
    }
}

fn le_tol(a: f64, b: f64) -> bool {
    a <= b + BUDGET_TOLERANCE * libm::fabs(b).max(1e-300)
}

/// Basic composition: `(Σ ε_i, Σ δ_i)`.
pub fn compose<'a, I: IntoIterator<Item = &'a PrivacyBudget>>(budgets: I) -> PrivacyBudget {
    budgets.into_iter().fold(PrivacyBudget::default(), |acc, b| PrivacyBudget {
        epsilon: acc.epsilon + b.epsilon,
        delta: acc.delta + b.delta,
    })
}

/// Calibration of the Gaussian mechanism.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianNoiseSpec {
    pub sigma: f64,
    pub sensitivity: f64,
    pub c_g: f64,
    pub epsilon: f64,
    pub delta: f64,
}

impl GaussianNoiseSpec {
    /// A spec whose noise is exactly zero. Only for noiseless test runs.
    pub fn silent() -> Self {
        Self {
            sigma: 0.0,
            sensitivity: 0.0,
            c_g: 0.0,
            epsilon: f64::INFINITY,
            delta: 0.0,
        }
    }
}

/// `c_G = √(2 ln(1.25/δ))·(1 + margin)` and `σ = c_G·Δ₂/ε`.
pub fn gaussian_constant(delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::ZeroDelta);
    }
    if delta >= 1.0 {
        return Err(Error::InvalidParameter("delta must be below 1"));
    }
    Ok(libm::sqrt(2.0 * libm::log(1.25 / delta)) * (1.0 + GAUSSIAN_MARGIN))
}

pub fn gaussian_spec(epsilon: f64, delta: f64, sensitivity: f64) -> Result<GaussianNoiseSpec> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter("epsilon must be positive"));
    }
    if !(sensitivity > 0.0) || !sensitivity.is_finite() {
        return Err(Error::InvalidParameter("sensitivity must be positive"));
    }
    let c_g = gaussian_constant(delta)?;
    Ok(GaussianNoiseSpec {
        sigma: c_g * sensitivity / epsilon,
        sensitivity,
        c_g,
        epsilon,
        delta,
    })
}

/// `v + N(0, σ² I)`.
pub fn gaussian_perturb<R: Rng + ?Sized>(v: &[f64], spec: &GaussianNoiseSpec, rng: &mut R) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let z: f64 = StandardNormal.sample(rng);
            x + spec.sigma * z
        })
        .collect()
}

/// One named slice of a total budget, split evenly over `calls` invocations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Share {
    pub name: String,
    pub epsilon_fraction: f64,
    pub delta_fraction: f64,
    pub calls: u64,
}

impl Share {
    pub fn new(name: &str, epsilon_fraction: f64, delta_fraction: f64, calls: u64) -> Self {
        Self {
            name: name.into(),
            epsilon_fraction,
            delta_fraction,
            calls,
        }
    }
}

/// Per-call budgets keyed by share name.
pub type Allocation = BTreeMap<String, PrivacyBudget>;

/// Split `total` by named fractional shares; each share's per-call budget is
/// its fraction divided by its call count.
pub fn split_budget(total: PrivacyBudget, scheme: &[Share]) -> Result<Allocation> {
    let eps: f64 = scheme.iter().map(|s| s.epsilon_fraction).sum();
    let del: f64 = scheme.iter().map(|s| s.delta_fraction).sum();
    if !le_tol(eps, 1.0) || !le_tol(del, 1.0) || scheme.iter().any(|s| s.epsilon_fraction < 0.0 || s.delta_fraction < 0.0) {
        return Err(Error::InfeasibleScheme { epsilon: eps, delta: del });
    }
    let mut out = Allocation::new();
    for s in scheme {
        if s.calls == 0 {
            return Err(Error::InvalidParameter("a share needs at least one call"));
        }
        let c = s.calls as f64;
        out.insert(
            s.name.clone(),
            PrivacyBudget {
                epsilon: total.epsilon * s.epsilon_fraction / c,
                delta: total.delta * s.delta_fraction / c,
            },
        );
    }
    Ok(out)
}

/// Histogram calls take half of ε; sum-oracle calls take the other half and
/// all of δ. Each family has `levels` calls.
pub fn one_round_scheme(levels: u64) -> Vec<Share> {
    alloc::vec![
        Share::new(labels::HISTOGRAM, 0.5, 0.0, levels),
        Share::new(labels::SUMS, 0.5, 1.0, levels),
    ]
}

/// Quarter of ε per round; δ split between the bucket sum oracles and the
/// final Gaussian release. `bucket_calls` is the number of (histogram, sum
/// oracle) pairs in round two.
pub fn four_round_scheme(cell_levels: u64, bucket_calls: u64) -> Vec<Share> {
    alloc::vec![
        Share::new(labels::CELLS, 0.25, 0.0, cell_levels),
        Share::new(labels::BUCKETS, 0.125, 0.0, bucket_calls),
        Share::new(labels::BUCKET_SUMS, 0.125, 0.5, bucket_calls),
        Share::new(labels::CANDIDATES, 0.25, 0.0, 1),
        Share::new(labels::RECOVERY, 0.125, 0.5, 1),
        Share::new(labels::CLUSTER_SIZES, 0.125, 0.0, 1),
    ]
}

/// Share and ledger labels.
pub mod labels {
    pub const HISTOGRAM: &str = "grid-histogram";
    pub const SUMS: &str = "grid-sums";
    pub const CELLS: &str = "cell-histogram";
    pub const BUCKETS: &str = "bucket-histogram";
    pub const BUCKET_SUMS: &str = "bucket-sums";
    pub const CANDIDATES: &str = "candidate-histogram";
    pub const RECOVERY: &str = "recovery-gaussian";
    pub const CLUSTER_SIZES: &str = "cluster-histogram";
}

/// One ledger line: `count` identical charges of `budget`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Charge {
    pub round: u32,
    pub label: String,
    pub budget: PrivacyBudget,
    pub count: u64,
}

/// Per-agent record of every randomizer invocation.
///
/// Charging past the cap fails before anything is recorded, so an aborted run
/// never leaves an overspent entry behind.
#[derive(Clone, Debug)]
pub struct Ledger {
    cap: PrivacyBudget,
    charges: Vec<Vec<Charge>>,
    totals: Vec<PrivacyBudget>,
}

impl Ledger {
    pub fn new(agents: usize, cap: PrivacyBudget) -> Self {
        Self {
            cap,
            charges: alloc::vec![Vec::new(); agents],
            totals: alloc::vec![PrivacyBudget::default(); agents],
        }
    }

    pub fn cap(&self) -> PrivacyBudget {
        self.cap
    }

    pub fn agents(&self) -> usize {
        self.charges.len()
    }

    pub fn charge(&mut self, agent: usize, round: u32, label: &str, budget: PrivacyBudget, count: u64) -> Result<()> {
        let added = budget.scale(count as f64);
        let next = compose([&self.totals[agent], &added]);
        if !next.within(&self.cap) {
            return Err(Error::BudgetExceeded {
                agent,
                round,
                epsilon: next.epsilon,
                delta: next.delta,
            });
        }
        self.totals[agent] = next;
        let list = &mut self.charges[agent];
        match list.last_mut() {
            Some(c) if c.round == round && c.label == label && c.budget == budget => c.count += count,
            _ => list.push(Charge {
                round,
                label: label.into(),
                budget,
                count,
            }),
        }
        Ok(())
    }

    /// Charge every agent identically.
    pub fn charge_all(&mut self, round: u32, label: &str, budget: PrivacyBudget, count: u64) -> Result<()> {
        // Everyone carries the same charges, so one check covers all agents.
        for agent in 0..self.agents() {
            self.charge(agent, round, label, budget, count)?;
        }
        Ok(())
    }

    pub fn charges(&self, agent: usize) -> &[Charge] {
        &self.charges[agent]
    }

    /// Composition of every charge on the agent's ledger.
    pub fn spent(&self, agent: usize) -> PrivacyBudget {
        let parts: Vec<PrivacyBudget> = self.charges[agent].iter().map(|c| c.budget.scale(c.count as f64)).collect();
        compose(&parts)
    }

    /// Number of invocations on the agent's ledger.
    pub fn invocations(&self, agent: usize) -> u64 {
        self.charges[agent].iter().map(|c| c.count).sum()
    }

    /// Distinct rounds the agent took part in, in order.
    pub fn rounds(&self, agent: usize) -> Vec<u32> {
        let mut out: Vec<u32> = Vec::new();
        for c in &self.charges[agent] {
            if out.last() != Some(&c.round) {
                out.push(c.round);
            }
        }
        out
    }

    /// Largest spend over all agents.
    pub fn max_spent(&self) -> PrivacyBudget {
        (0..self.agents()).map(|a| self.spent(a)).fold(PrivacyBudget::default(), |acc, b| PrivacyBudget {
            epsilon: acc.epsilon.max(b.epsilon),
            delta: acc.delta.max(b.delta),
        })
    }

    /// Every agent's composed spend equals the cap.
    pub fn verify_exact(&self) -> Result<()> {
        for agent in 0..self.agents() {
            let s = self.spent(agent);
            if !s.matches(&self.cap) {
                return Err(Error::LedgerMismatch {
                    agent,
                    epsilon: s.epsilon,
                    delta: s.delta,
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn b(e: f64, d: f64) -> PrivacyBudget {
        PrivacyBudget::new(e, d).unwrap()
    }

    #[test]
    fn compose_examples() {
        assert_eq!(compose(&[]), b(0.0, 0.0));
        assert_eq!(compose(&[b(1.0, 0.0), b(1.0, 0.0)]), b(2.0, 0.0));
        let c = compose(&[b(0.5, 1e-6), b(0.25, 1e-6), b(0.25, 0.0)]);
        assert!(c.matches(&b(1.0, 2e-6)));
    }

    #[test]
    fn budget_validation() {
        assert!(PrivacyBudget::new(-1.0, 0.0).is_err());
        assert!(PrivacyBudget::new(1.0, 1.0).is_err());
        assert!(PrivacyBudget::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn gaussian_examples() {
        let s = gaussian_spec(1.0, 1e-5, 1.0).unwrap();
        assert!((s.c_g - 4.845).abs() < 1e-3, "{}", s.c_g);
        assert!((s.sigma - s.c_g).abs() < 1e-12);
        let half = gaussian_spec(2.0, 1e-5, 1.0).unwrap();
        assert!((half.sigma - s.sigma / 2.0).abs() < 1e-12);
        let big = gaussian_spec(1.0, 1e-5, core::f64::consts::SQRT_2).unwrap();
        let small = gaussian_spec(1.0, 1e-5, core::f64::consts::SQRT_2 / 2.0).unwrap();
        assert!((big.sigma / small.sigma - 2.0).abs() < 1e-12);
        assert_eq!(gaussian_spec(1.0, 0.0, 1.0), Err(Error::ZeroDelta));
    }

    #[test]
    fn perturb_with_zero_sigma_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = [0.5, -0.25];
        assert_eq!(gaussian_perturb(&v, &GaussianNoiseSpec::silent(), &mut rng), v);
    }

    #[test]
    fn perturb_moments() {
        let spec = gaussian_spec(1.0, 1e-5, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let x = gaussian_perturb(&[0.0], &spec, &mut rng)[0];
            s1 += x;
            s2 += x * x;
        }
        let mean = s1 / n as f64;
        let sd = libm::sqrt(s2 / n as f64 - mean * mean);
        assert!((sd / spec.sigma - 1.0).abs() < 0.02);
        assert!(mean.abs() < 4.0 * spec.sigma / libm::sqrt(n as f64));
    }

    #[test]
    fn split_examples() {
        let a = split_budget(b(1.0, 1e-6), &one_round_scheme(10)).unwrap();
        assert!((a[labels::HISTOGRAM].epsilon - 0.05).abs() < 1e-15);
        assert!((a[labels::SUMS].epsilon - 0.05).abs() < 1e-15);
        let a = split_budget(b(1.0, 1e-6), &four_round_scheme(9, 100)).unwrap();
        let round2 = a[labels::BUCKETS].epsilon * 100.0 + a[labels::BUCKET_SUMS].epsilon * 100.0;
        let round4 = a[labels::RECOVERY].epsilon + a[labels::CLUSTER_SIZES].epsilon;
        for share in [a[labels::CELLS].epsilon * 9.0, round2, a[labels::CANDIDATES].epsilon, round4] {
            assert!((share - 0.25).abs() < 1e-12);
        }
        let err = split_budget(b(1.0, 0.0), &[Share::new("x", 1.0, 0.0, 1), Share::new("y", 1.0, 0.0, 1)]);
        assert_eq!(err, Err(Error::InfeasibleScheme { epsilon: 2.0, delta: 0.0 }));
    }

    #[test]
    fn ledger_aborts_on_overflow() {
        let mut l = Ledger::new(2, b(1.0, 0.0));
        l.charge_all(1, "a", b(0.5, 0.0), 2).unwrap();
        assert!(l.verify_exact().is_ok());
        assert!(matches!(l.charge(1, 2, "a", b(0.1, 0.0), 1), Err(Error::BudgetExceeded { agent: 1, round: 2, .. })));
        assert_eq!(l.invocations(1), 2);
        assert_eq!(l.rounds(0), [1]);
    }

    fn budgets() -> impl Strategy<Value = Vec<PrivacyBudget>> {
        proptest::collection::vec((0.0f64..3.0, 0.0f64..1e-3), 0..12)
            .prop_map(|v| v.into_iter().map(|(e, d)| PrivacyBudget { epsilon: e, delta: d }).collect())
    }

    proptest! {
        #[test]
        fn c_g_strictly_above_bound(eps in 1e-3f64..10.0, delta in 1e-12f64..0.5) {
            let s = gaussian_spec(eps, delta, 1.0).unwrap();
            prop_assert!(s.c_g * s.c_g > 2.0 * libm::log(1.25 / delta));
        }

        #[test]
        fn compose_commutes_and_associates(mut v in budgets(), split in 0usize..12) {
            let whole = compose(&v);
            let k = split.min(v.len());
            let left = compose(&v[..k]);
            let right = compose(&v[k..]);
            prop_assert!(compose(&[left, right]).matches(&whole));
            v.reverse();
            prop_assert!(compose(&v).matches(&whole));
        }
    }
}
