//! Public dimension reduction `Q = P ∘ S ∘ T`.
//!
//! `T` is a Gaussian Johnson–Lindenstrauss map (the identity when the target
//! dimension is not smaller than the input), `S` a uniform scaling and `P` a
//! radial projection onto a ball. The four-round protocol then translates by
//! a random `γ ∈ [−1/2, 1/2]^d`, halves, and offsets by `1/2`, so every image
//! lands in `[0, 1)^d` and the shift spans a full cell period at every level
//! below the root.
//!
//! Maps are fully determined by their [`DomainMapSpec`] (parameters plus a
//! seed) so agents and analyzer can rebuild them from public data.

use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::norm;
use crate::prf::derive;

/// `⌈c_dim · ln(k/(αβ)) / α²⌉`.
pub fn target_dim(k: usize, alpha: f64, beta: f64, c_dim: f64) -> usize {
    let d = c_dim * libm::log(k as f64 / (alpha * beta)) / (alpha * alpha);
    (libm::ceil(d) as usize).max(1)
}

/// Random linear map `R^{d′} → R^d` with i.i.d. `N(0, 1/d)` entries.
#[derive(Clone, Debug, PartialEq)]
pub struct JlMap {
    d_prime: usize,
    d: usize,
    seed: u64,
    matrix: Option<Vec<f64>>,
}

/// Sample a map; `d ≥ d′` yields the identity on `R^{d′}`.
pub fn sample_jl(d_prime: usize, d: usize, seed: u64) -> JlMap {
    if d >= d_prime {
        return JlMap {
            d_prime,
            d: d_prime,
            seed,
            matrix: None,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / libm::sqrt(d as f64);
    let matrix = (0..d * d_prime)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        })
        .collect();
    JlMap {
        d_prime,
        d,
        seed,
        matrix: Some(matrix),
    }
}

impl JlMap {
    pub fn is_identity(&self) -> bool {
        self.matrix.is_none()
    }

    pub fn input_dim(&self) -> usize {
        self.d_prime
    }

    pub fn output_dim(&self) -> usize {
        self.d
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.d_prime, "dimension mismatch");
        match &self.matrix {
            None => x.to_vec(),
            Some(m) => m.chunks_exact(self.d_prime).map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapKind {
    /// Project onto `B(0, 1)`.
    OneRound,
    /// Project onto `B(0, 1/2)`, shift, and fold into `[0, 1)^d`.
    LowError,
}

/// Public description of a domain map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainMapSpec {
    pub kind: MapKind,
    pub d_prime: usize,
    pub target_dim: usize,
    pub seed: u64,
    pub scale: f64,
    pub radius: f64,
    pub shift: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DomainMap {
    spec: DomainMapSpec,
    jl: JlMap,
}

/// Largest double below one.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

impl DomainMap {
    pub fn from_spec(spec: DomainMapSpec) -> Result<Self> {
        let jl = sample_jl(spec.d_prime, spec.target_dim, derive(spec.seed, 1));
        if spec.shift.len() != jl.output_dim() && !spec.shift.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: jl.output_dim(),
                got: spec.shift.len(),
            });
        }
        Ok(Self { spec, jl })
    }

    pub fn spec(&self) -> &DomainMapSpec {
        &self.spec
    }

    pub fn jl(&self) -> &JlMap {
        &self.jl
    }

    /// Dimension of the images.
    pub fn dim(&self) -> usize {
        self.jl.output_dim()
    }

    /// Overall Lipschitz factor after `T`: images of `p` and `q` are at most
    /// this times `‖T(p − q)‖` apart.
    pub fn lipschitz(&self) -> f64 {
        match self.spec.kind {
            MapKind::OneRound => self.spec.scale,
            MapKind::LowError => self.spec.scale / 2.0,
        }
    }

    /// Image of `p` before projection; `None` would mean no projection needed.
    pub fn needs_projection(&self, p: &[f64]) -> bool {
        let u = self.jl.apply(p);
        norm(&u) * self.spec.scale > self.spec.radius
    }

    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        let mut u = self.jl.apply(p);
        u.iter_mut().for_each(|x| *x *= self.spec.scale);
        let r = norm(&u);
        if r > self.spec.radius {
            let f = self.spec.radius / r;
            u.iter_mut().for_each(|x| *x *= f);
        }
        if self.spec.kind == MapKind::LowError {
            for (x, g) in u.iter_mut().zip(&self.spec.shift) {
                *x = ((*x + g) / 2.0 + 0.5).clamp(0.0, BELOW_ONE);
            }
        }
        u
    }
}

/// Free-function form of [`DomainMap::apply`].
pub fn apply_map(q: &DomainMap, p: &[f64]) -> Vec<f64> {
    q.apply(p)
}

/// Map for the one-round protocol: scale `c_s/(α√ln(n/β))`, radius 1.
pub fn make_domain_map_alg1(d_prime: usize, k: usize, alpha: f64, beta: f64, n: usize, c_dim: f64, c_s: f64, seed: u64) -> Result<DomainMap> {
    check_ranges(alpha, beta)?;
    let d = target_dim(k, alpha, beta, c_dim);
    let scale = c_s / (alpha * libm::sqrt(libm::log(n as f64 / beta)));
    DomainMap::from_spec(DomainMapSpec {
        kind: MapKind::OneRound,
        d_prime,
        target_dim: d,
        seed,
        scale,
        radius: 1.0,
        shift: Vec::new(),
    })
}

/// Map for the four-round protocol: scale `1/(2(1+α))`, radius `1/2`,
/// uniform shift `γ ∈ [−1/2, 1/2]^d`.
pub fn make_domain_map_alg2(d_prime: usize, k: usize, alpha: f64, beta: f64, c_dim: f64, seed: u64) -> Result<DomainMap> {
    check_ranges(alpha, beta)?;
    let d = target_dim(k, alpha, beta, c_dim).min(d_prime);
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, 2));
    let shift = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
    DomainMap::from_spec(DomainMapSpec {
        kind: MapKind::LowError,
        d_prime,
        target_dim: d,
        seed,
        scale: 1.0 / (2.0 * (1.0 + alpha)),
        radius: 0.5,
        shift,
    })
}

/// Same map with the shift replaced (tests pin `γ`).
pub fn with_shift(map: &DomainMap, shift: Vec<f64>) -> Result<DomainMap> {
    let mut spec = map.spec.clone();
    spec.shift = shift;
    DomainMap::from_spec(spec)
}

fn check_ranges(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::InvalidParameter("alpha must lie in (0, 1/2)"));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidParameter("beta must lie in (0, 1)"));
    }
    Ok(())
}

/// Apply a map to every row.
pub fn map_rows(q: &DomainMap, rows: impl Iterator<Item = impl AsRef<[f64]>>) -> Vec<Vec<f64>> {
    rows.map(|p| q.apply(p.as_ref())).collect()
}

/// Zero vector of the map's output dimension.
pub fn origin(q: &DomainMap) -> Vec<f64> {
    vec![0.0; q.dim()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::squared_distance;

    fn unit_ball_point(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let r = norm(&v);
        let radius = libm::pow(rng.random::<f64>(), 1.0 / d as f64);
        v.iter_mut().for_each(|x| *x *= radius / r);
        v
    }

    #[test]
    fn target_dim_examples() {
        assert_eq!(target_dim(5, 0.5, 0.1, 1.0), 19);
        let a = target_dim(5, 0.2, 0.1, 1.0) as f64;
        let b = target_dim(5, 0.1, 0.1, 1.0) as f64;
        assert!((b / a - 4.0).abs() < 0.5);
        assert!(target_dim(5, 0.3, 0.01, 1.0) >= target_dim(5, 0.3, 0.2, 1.0));
    }

    #[test]
    fn identity_when_not_reducing() {
        let t = sample_jl(4, 9, 1);
        assert!(t.is_identity());
        assert_eq!(t.apply(&[1.0, 2.0, 3.0, 4.0]), [1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn isometry_in_expectation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = unit_ball_point(&mut rng, 40);
        let nx = norm(&x) * norm(&x);
        let trials = 10_000;
        let mean: f64 = (0..trials)
            .map(|s| {
                let t = sample_jl(40, 10, s);
                let y = t.apply(&x);
                norm(&y) * norm(&y)
            })
            .sum::<f64>()
            / trials as f64;
        assert!((mean / nx - 1.0).abs() < 0.03);
    }

    #[test]
    fn one_round_map_contract() {
        let q = make_domain_map_alg1(6, 5, 0.3, 0.05, 10_000, 1.0, 1.0, 3).unwrap();
        assert_eq!(q.apply(&[0.0; 6]), [0.0; 6]);
        // an input far outside the ball is projected to the sphere
        let far = q.apply(&[100.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!((norm(&far) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn low_error_map_lands_in_unit_cube() {
        let q = make_domain_map_alg2(12, 5, 0.3, 0.05, 1.0, 5).unwrap();
        let centered = with_shift(&q, vec![0.0; q.dim()]).unwrap();
        assert!(centered.apply(&[0.0; 12]).iter().all(|x| *x == 0.5));
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100_000 {
            let p = unit_ball_point(&mut rng, 12);
            assert!(q.apply(&p).iter().all(|x| (0.0..1.0).contains(x)));
        }
    }

    #[test]
    fn lipschitz_and_determinism() {
        let q = make_domain_map_alg1(30, 5, 0.3, 0.05, 1000, 0.8, 1.0, 9).unwrap();
        assert!(!q.jl().is_identity() || q.dim() == 30);
        let again = make_domain_map_alg1(30, 5, 0.3, 0.05, 1000, 0.8, 1.0, 9).unwrap();
        assert_eq!(q, again);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..1000 {
            let p = unit_ball_point(&mut rng, 30);
            let r = unit_ball_point(&mut rng, 30);
            let diff: Vec<f64> = p.iter().zip(&r).map(|(a, b)| a - b).collect();
            let bound = q.lipschitz() * norm(&q.jl().apply(&diff));
            assert!(libm::sqrt(squared_distance(&q.apply(&p), &q.apply(&r))) <= bound + 1e-12);
        }
    }
}
