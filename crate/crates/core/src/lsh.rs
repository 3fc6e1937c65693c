//! Euclidean LSH over the synthetic space of heavy ancestor cells.
//!
//! An atom is a quantized random projection `⌊(⟨a, x⟩/r + b)/w⌋` with
//! `a ~ N(0, I)` and `b ~ U[0, w)`; a function concatenates `t` atoms. The
//! synthetic space embeds each ancestor cell as its own block: a point `p`
//! becomes `(λ·e_A, p − o(A))` where `A = Anc*(C_l(p))`. The one-hot part of
//! `a` is drawn lazily per cell from a keyed PRF, so the (possibly long)
//! block list never has to be materialized per atom.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::cells::{anc_star, anc_star_shift, ancestor, cell_center, cell_of, CellId, CellLabels};
use crate::error::{Error, Result};
use crate::freq::{Value, ValueWriter};
use crate::prf::{derive, Prf};

/// Bits per atom in a bucket id.
pub const ATOM_BITS: u32 = 16;
const ATOM_BIAS: i64 = 1 << (ATOM_BITS - 1);
const ATOM_MAX: i64 = (1 << ATOM_BITS) - 2;

/// Candidate bucket widths searched by [`tune_t`].
pub fn width_grid() -> impl Iterator<Item = f64> {
    (0..31).map(|i| 0.5 + 0.25 * i as f64)
}

pub const DEFAULT_T_MAX: usize = 256;

/// Frozen constant of the `p(1)` floor.
pub const FLOOR_P1_CONSTANT: f64 = 1e-3;

fn normal_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x / core::f64::consts::SQRT_2)
}

/// Probability that one atom of width `w` puts two points at distance `s`
/// (in units of `r`) into the same bucket.
pub fn atom_collision_prob(w: f64, s: f64) -> f64 {
    if s <= 0.0 {
        return 1.0;
    }
    let x = w / s;
    let p = 1.0 - 2.0 * normal_tail(x) - 2.0 / (libm::sqrt(core::f64::consts::TAU) * x) * (1.0 - libm::exp(-x * x / 2.0));
    p.clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionProfile {
    pub width: f64,
    pub t: usize,
    /// `p(1)` of the concatenated function.
    pub p1: f64,
    /// `p(c)` of the concatenated function.
    pub pc: f64,
    pub ratio: f64,
    /// `log₂` of the bucket-id universe.
    pub log_buckets: u32,
}

impl CollisionProfile {
    pub fn new(width: f64, t: usize, c: f64) -> Self {
        let (a1, ac) = (atom_collision_prob(width, 1.0), atom_collision_prob(width, c));
        let p1 = libm::pow(a1, t as f64);
        let pc = libm::pow(ac, t as f64);
        Self {
            width,
            t,
            p1,
            pc,
            ratio: libm::pow(a1 * a1 / ac, t as f64),
            log_buckets: ATOM_BITS * t as u32,
        }
    }
}

/// `constant·B^{−1/c′}/max(1, ln B)` with `c′ = c²/8 − 1/4`.
pub fn floor_p1(b: f64, c: f64) -> f64 {
    let cp = c * c / 8.0 - 0.25;
    FLOOR_P1_CONSTANT * libm::pow(b, -1.0 / cp) / libm::log(b).max(1.0)
}

/// Smallest `t` (over the width grid) whose ratio `p(1)²/p(c)` reaches `b`;
/// among widths with that `t`, the one with the largest `p(1)`.
pub fn tune_t(b: f64, c: f64, t_max: usize) -> Result<(usize, CollisionProfile)> {
    if !(c > core::f64::consts::SQRT_2) || !(b > 1.0) {
        return Err(Error::InvalidParameter("tuning needs c > sqrt(2) and B > 1"));
    }
    let mut best: Option<CollisionProfile> = None;
    let mut best_ratio = (0usize, 0.0f64);
    for w in width_grid() {
        let (a1, ac) = (atom_collision_prob(w, 1.0), atom_collision_prob(w, c));
        let rho = a1 * a1 / ac;
        if !(rho > 1.0) {
            continue;
        }
        let t = (libm::ceil(libm::log(b) / libm::log(rho) - 1e-12) as usize).max(1);
        if t > t_max {
            let r = libm::pow(rho, t_max as f64);
            if r > best_ratio.1 {
                best_ratio = (t_max, r);
            }
            continue;
        }
        let prof = CollisionProfile::new(w, t, c);
        // guard against the ceiling landing a hair short
        let prof = if prof.ratio < b { CollisionProfile::new(w, t + 1, c) } else { prof };
        if prof.t > t_max {
            continue;
        }
        if best.as_ref().is_none_or(|q| (prof.t, -prof.p1) < (q.t, -q.p1)) {
            best = Some(prof);
        }
    }
    match best {
        Some(p) => Ok((p.t, p)),
        None => Err(Error::LshUnreachable {
            target: b,
            t_max,
            best_t: best_ratio.0,
            best_ratio: best_ratio.1,
        }),
    }
}

/// Ordered ancestor cells of one level, the blocks of `Λ_l`.
///
/// The blocks are the `Anc*` cells of every child of a heavy level-`(l−1)`
/// cell, which covers both the heavy and the medium cells of level `l`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpace {
    pub level: u32,
    pub dim: usize,
    pub lambda: f64,
    ancestors: Vec<CellId>,
}

/// `λ_l = (14c + 5)·t_l·√d`.
pub fn separation(c: f64, l: u32, d: usize) -> f64 {
    (14.0 * c + 5.0) * crate::cells::cell_side(l) * libm::sqrt(d as f64)
}

fn children(c: &CellId) -> Vec<CellId> {
    let d = c.dim();
    (0..1u64 << d)
        .map(|mask| CellId {
            level: c.level + 1,
            coords: c.coords.iter().enumerate().map(|(e, j)| 2 * j + ((mask >> e) & 1)).collect(),
        })
        .collect()
}

impl SyntheticSpace {
    pub fn new(labels: &CellLabels, l: u32, c: f64) -> Self {
        assert!(l >= 1, "the synthetic space starts at level 1");
        let d = labels.dim;
        let shift = anc_star_shift(d);
        let mut set = BTreeSet::new();
        for parent in labels.heavy(l - 1) {
            if shift == 0 {
                set.extend(children(parent));
            } else {
                set.insert(ancestor(parent, shift - 1));
            }
        }
        Self {
            level: l,
            dim: d,
            lambda: separation(c, l, d),
            ancestors: set.into_iter().collect(),
        }
    }

    pub fn from_ancestors(level: u32, dim: usize, lambda: f64, mut ancestors: Vec<CellId>) -> Self {
        ancestors.sort();
        ancestors.dedup();
        Self {
            level,
            dim,
            lambda,
            ancestors,
        }
    }

    pub fn ancestors(&self) -> &[CellId] {
        &self.ancestors
    }

    pub fn blocks(&self) -> usize {
        self.ancestors.len()
    }

    /// Length of a dense synthetic vector.
    pub fn dense_len(&self) -> usize {
        self.blocks() + self.dim
    }

    pub fn block_of(&self, a: &CellId) -> Option<usize> {
        self.ancestors.binary_search(a).ok()
    }

    /// Side of the ancestor cells.
    pub fn ancestor_side(&self) -> f64 {
        crate::cells::cell_side(self.level.saturating_sub(anc_star_shift(self.dim)))
    }

    /// Norm bound of every image.
    pub fn radius(&self) -> f64 {
        let h = self.ancestor_side() / 2.0;
        libm::sqrt(self.lambda * self.lambda + self.dim as f64 * h * h)
    }
}

/// Sparse synthetic point: block index plus offset from the block anchor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPoint {
    pub block: usize,
    pub offset: Vec<f64>,
}

impl SyntheticPoint {
    pub fn to_dense(&self, space: &SyntheticSpace) -> Vec<f64> {
        let mut v = vec![0.0; space.dense_len()];
        v[self.block] = space.lambda;
        v[space.blocks()..].copy_from_slice(&self.offset);
        v
    }
}

/// `Λ_l(p)`, or `None` (the zero element) outside every ancestor block.
pub fn lambda_map(p: &[f64], space: &SyntheticSpace) -> Option<SyntheticPoint> {
    let a = anc_star(&cell_of(p, space.level));
    let block = space.block_of(&a)?;
    let o = cell_center(&a);
    Some(SyntheticPoint {
        block,
        offset: p.iter().zip(&o).map(|(x, c)| x - c).collect(),
    })
}

/// Squared distance between two images.
pub fn synthetic_distance_sq(x: &SyntheticPoint, y: &SyntheticPoint, space: &SyntheticSpace) -> f64 {
    let off: f64 = x.offset.iter().zip(&y.offset).map(|(a, b)| (a - b) * (a - b)).sum();
    if x.block == y.block {
        off
    } else {
        2.0 * space.lambda * space.lambda + off
    }
}

fn below(x: f64) -> f64 {
    let y = x.next_down();
    if y < x {
        y
    } else {
        x
    }
}

/// Map a dense synthetic vector back to `[0, 1)^d`: pick the block with the
/// largest one-hot coordinate (lowest index on ties, also when all are
/// nonpositive) and clamp the offset into that ancestor cell.
///
/// # Panics
/// If the space has no blocks or `x_hat` has the wrong length.
pub fn project_to_heavy_cells(x_hat: &[f64], space: &SyntheticSpace) -> Vec<f64> {
    assert!(space.blocks() > 0, "projection needs at least one block");
    assert_eq!(x_hat.len(), space.dense_len());
    let (block, _) = x_hat[..space.blocks()]
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if *v > acc.1 { (i, *v) } else { acc });
    let a = &space.ancestors[block];
    let t = a.side();
    x_hat[space.blocks()..]
        .iter()
        .zip(&a.coords)
        .map(|(off, j)| {
            let lo = *j as f64 * t;
            let hi = lo + t;
            let x = lo + t / 2.0 + off;
            if x < lo {
                lo
            } else if x >= hi {
                below(hi)
            } else {
                x
            }
        })
        .collect()
}

/// A sampled function: `t` atoms at scale `r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LshFunction {
    pub r: f64,
    pub c: f64,
    pub t: usize,
    pub width: f64,
    pub seed: u64,
    pub dim: usize,
    directions: Vec<f64>,
    offsets: Vec<f64>,
}

const SALT_DIRECTION: u64 = 41;
const SALT_OFFSET: u64 = 42;
const SALT_BLOCK: u64 = 43;

impl LshFunction {
    pub fn sample(profile: &CollisionProfile, r: f64, c: f64, dim: usize, seed: u64) -> Self {
        let dir = Prf::new(derive(seed, SALT_DIRECTION));
        let off = Prf::new(derive(seed, SALT_OFFSET));
        let t = profile.t;
        Self {
            r,
            c,
            t,
            width: profile.width,
            seed,
            dim,
            directions: (0..t).flat_map(|i| (0..dim).map(move |e| dir.gaussian(i as u64, e as u64))).collect(),
            offsets: (0..t).map(|i| profile.width * off.unit(i as u64, 0)).collect(),
        }
    }

    fn block_prf(&self) -> Prf {
        Prf::new(derive(self.seed, SALT_BLOCK))
    }

    fn cell_digest(cell: &CellId) -> u64 {
        let mut words = Vec::with_capacity(cell.coords.len() + 1);
        words.push(cell.level as u64);
        words.extend_from_slice(&cell.coords);
        Prf::new(0).hash_words(&words)
    }

    fn encode(&self, projections: impl Iterator<Item = f64>) -> Value {
        let mut w = ValueWriter::new(ATOM_BITS * self.t as u32);
        for (i, proj) in projections.enumerate() {
            let atom = libm::floor((proj / self.r + self.offsets[i]) / self.width) as i64;
            w.push((atom + ATOM_BIAS).clamp(0, ATOM_MAX) as u64, ATOM_BITS);
        }
        w.finish()
    }

    /// Bucket of a plain point in `R^dim`.
    pub fn hash_point(&self, x: &[f64]) -> Value {
        let dim = self.dim;
        self.encode((0..self.t).map(|i| self.directions[i * dim..(i + 1) * dim].iter().zip(x).map(|(a, b)| a * b).sum()))
    }

    /// Bucket of a synthetic image; `None` hashes to ⊥.
    pub fn hash(&self, x: Option<&SyntheticPoint>, space: &SyntheticSpace) -> Value {
        let Some(x) = x else {
            return bottom(self.t);
        };
        let digest = Self::cell_digest(&space.ancestors[x.block]);
        let blocks = self.block_prf();
        let dim = self.dim;
        self.encode((0..self.t).map(|i| {
            let a = &self.directions[i * dim..(i + 1) * dim];
            space.lambda * blocks.gaussian(i as u64, digest) + a.iter().zip(&x.offset).map(|(a, b)| a * b).sum::<f64>()
        }))
    }
}

/// The reserved non-participation bucket.
pub fn bottom(t: usize) -> Value {
    Value::ones(ATOM_BITS * t as u32)
}

pub fn is_bottom(v: &Value) -> bool {
    *v == Value::ones(v.len())
}

/// `(f, l, m, r)` prefix of a bucket's text key.
pub fn bucket_key(f: usize, l: u32, m: u32, rep: usize, bucket: &Value) -> alloc::string::String {
    if is_bottom(bucket) {
        return alloc::format!("({f},{l},{m},{rep}):⊥");
    }
    let mut s = alloc::format!("({f},{l},{m},{rep}):");
    let t = bucket.len() / ATOM_BITS;
    for i in 0..t {
        if i > 0 {
            s.push('|');
        }
        let atom = bucket.bits(i * ATOM_BITS, ATOM_BITS) as i64 - ATOM_BIAS;
        s.push_str(&alloc::format!("{atom}"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::{mark_heavy_light, MarkerParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn pair_at<R: Rng>(rng: &mut R, dim: usize, dist: f64) -> (Vec<f64>, Vec<f64>) {
        let x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        let mut u: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = crate::geometry::norm(&u);
        u.iter_mut().for_each(|v| *v *= dist / n);
        let y = x.iter().zip(&u).map(|(a, b)| a + b).collect();
        (x, y)
    }

    fn empirical(profile: &CollisionProfile, dist: f64, trials: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut hits = 0;
        for i in 0..trials {
            let f = LshFunction::sample(profile, 0.5, 2.0, 3, derive(seed, i as u64));
            let (x, y) = pair_at(&mut rng, 3, dist * 0.5);
            if f.hash_point(&x) == f.hash_point(&y) {
                hits += 1;
            }
        }
        hits as f64 / trials as f64
    }

    #[test]
    fn atom_probability_limits_and_monotonicity() {
        assert!((atom_collision_prob(4.0, 1e-9) - 1.0).abs() < 1e-9);
        let ps: Vec<f64> = (1..50).map(|i| atom_collision_prob(2.0, i as f64 * 0.2)).collect();
        assert!(ps.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn atom_probability_matches_monte_carlo() {
        let prof = CollisionProfile::new(4.0, 1, 2.0);
        let emp = empirical(&prof, 1.0, 100_000, 5);
        assert!((emp - atom_collision_prob(4.0, 1.0)).abs() < 0.01, "{emp}");
    }

    #[test]
    fn empirical_rate_is_distance_monotone() {
        let prof = CollisionProfile::new(2.0, 2, 2.0);
        let rates: Vec<f64> = (1..=20).map(|i| empirical(&prof, i as f64 * 0.15, 4000, 9)).collect();
        // rank agreement: few inversions among sorted distances
        let inversions = (0..20).flat_map(|i| (i + 1..20).map(move |j| (i, j))).filter(|(i, j)| rates[*j] > rates[*i] + 0.02).count();
        assert_eq!(inversions, 0, "{rates:?}");
    }

    #[test]
    fn tuner_examples() {
        let (t, _) = tune_t(1.0 + 1e-6, 2.0, DEFAULT_T_MAX).unwrap();
        assert_eq!(t, 1);
        let (_, p) = tune_t(100.0, 2.0, DEFAULT_T_MAX).unwrap();
        let a1 = atom_collision_prob(p.width, 1.0);
        let ac = atom_collision_prob(p.width, 2.0);
        assert!(libm::pow(a1 * a1 / ac, p.t as f64) >= 100.0);
        assert!(p.p1 >= floor_p1(100.0, 2.0));
        for b in [10.0, 100.0, 1000.0] {
            let (t2, _) = tune_t(b, 2.0, DEFAULT_T_MAX).unwrap();
            let (t3, _) = tune_t(b, 3.0, DEFAULT_T_MAX).unwrap();
            let (t4, _) = tune_t(b, 4.0, DEFAULT_T_MAX).unwrap();
            assert!(t3 <= t2 && t4 <= t3);
        }
        assert!(matches!(tune_t(1e9, 2.0, 8), Err(Error::LshUnreachable { .. })));
        assert!(tune_t(10.0, 1.2, 8).is_err());
    }

    fn space_fixture() -> (CellLabels, SyntheticSpace) {
        // two heavy cells at level 1 in d = 2 (Anc* shift 2)
        use crate::freq::bitstogram_round;
        use crate::privacy::PrivacyBudget;
        use crate::protocol::{NoiseMode, Session};
        let pts = [[0.1, 0.1], [0.9, 0.9]];
        let n = 200;
        let params = MarkerParams { levels: 6, dim: 2, d_power: 0.0 };
        let mut s = Session::new(n, PrivacyBudget::new(1e9, 0.5).unwrap(), NoiseMode::Noiseless, 1);
        let mut r = s.begin_round();
        let mut ch = vec![None];
        for l in 1..6 {
            let v: Vec<Value> = (0..n).map(|i| crate::cells::encode_cell(&cell_of(&pts[i % 2], l))).collect();
            ch.push(Some(bitstogram_round(&mut r, "ch", &v, crate::cells::cell_value_bits(l, 2), 1.0, 0.1).unwrap()));
        }
        let labels = mark_heavy_light(&ch, 1.0, 2, 0.1, &params).unwrap();
        let space = SyntheticSpace::new(&labels, 3, 2.0);
        (labels, space)
    }

    #[test]
    fn lambda_map_blocks_and_distances() {
        let (labels, space) = space_fixture();
        assert!(labels.heavy(2).len() == 2);
        // Anc* of level 3 is level 1: the two occupied quadrants
        assert_eq!(space.blocks(), 2);
        assert!(lambda_map(&[0.9, 0.1], &space).is_none());
        let a = lambda_map(&[0.1, 0.2], &space).unwrap();
        let b = lambda_map(&[0.2, 0.05], &space).unwrap();
        let c = lambda_map(&[0.8, 0.7], &space).unwrap();
        let plain = crate::geometry::squared_distance(&[0.1, 0.2], &[0.2, 0.05]);
        assert!((synthetic_distance_sq(&a, &b, &space) - plain).abs() < 1e-15);
        let dense = crate::geometry::squared_distance(&a.to_dense(&space), &c.to_dense(&space));
        assert!((synthetic_distance_sq(&a, &c, &space) - dense).abs() < 1e-12);
        assert!(libm::sqrt(dense) >= space.lambda * core::f64::consts::SQRT_2);
        assert!(crate::geometry::norm(&a.to_dense(&space)) <= space.radius());
    }

    #[test]
    fn projection_examples() {
        let (_, space) = space_fixture();
        let p = [0.1, 0.2];
        let img = lambda_map(&p, &space).unwrap().to_dense(&space);
        let back = project_to_heavy_cells(&img, &space);
        assert!((back[0] - p[0]).abs() < 1e-15 && (back[1] - p[1]).abs() < 1e-15);
        // push the offset past the right face of quadrant [0, 0.5)
        let mut off = img.clone();
        off[2] += 0.6;
        let q = project_to_heavy_cells(&off, &space);
        assert!(q[0] < 0.5 && q[0] > 0.5 - 1e-12 && (q[1] - 0.2).abs() < 1e-15);
        let again = lambda_map(&q, &space).unwrap().to_dense(&space);
        assert_eq!(project_to_heavy_cells(&again, &space), q);
        // noisy average of in-cell images stays in the cell
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let noisy: Vec<f64> = img.iter().map(|x| x + (rng.random::<f64>() - 0.5) * space.lambda * 0.9).collect();
            let q = project_to_heavy_cells(&noisy, &space);
            assert!(q[0] < 0.5 && q[1] < 0.5);
        }
    }

    #[test]
    fn hashing_is_deterministic_and_bottom_is_reserved() {
        let (_, space) = space_fixture();
        let (_, prof) = tune_t(10.0, 3.0, DEFAULT_T_MAX).unwrap();
        let f = LshFunction::sample(&prof, 0.01, 3.0, 2, 77);
        let x = lambda_map(&[0.1, 0.2], &space).unwrap();
        assert_eq!(f.hash(Some(&x), &space), f.hash(Some(&x), &space));
        assert!(is_bottom(&f.hash(None, &space)));
        assert!(!is_bottom(&f.hash(Some(&x), &space)));
        assert!(bucket_key(0, 3, 1, 2, &f.hash(None, &space)).ends_with('⊥'));
    }

    #[test]
    fn synthetic_collisions_track_distance() {
        let (_, space) = space_fixture();
        let (_, prof) = tune_t(10.0, 3.0, DEFAULT_T_MAX).unwrap();
        let r = 0.02;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let trials = 10_000;
        let (mut near, mut far) = (0, 0);
        for i in 0..trials {
            let f = LshFunction::sample(&prof, r, 3.0, 2, i as u64);
            let base = [0.1 + 0.2 * rng.random::<f64>(), 0.1 + 0.2 * rng.random::<f64>()];
            let theta = rng.random::<f64>() * core::f64::consts::TAU;
            let at = |s: f64| [base[0] + s * libm::cos(theta), base[1] + s * libm::sin(theta)];
            let x = lambda_map(&base, &space).unwrap();
            if f.hash(Some(&x), &space) == f.hash(lambda_map(&at(r), &space).as_ref(), &space) {
                near += 1;
            }
            if f.hash(Some(&x), &space) == f.hash(lambda_map(&at(3.0 * r), &space).as_ref(), &space) {
                far += 1;
            }
        }
        let (pn, pf) = (near as f64 / trials as f64, far as f64 / trials as f64);
        assert!((pn / prof.p1 - 1.0).abs() < 0.2, "{pn} vs {}", prof.p1);
        assert!(pf <= 1.5 * prof.pc, "{pf} vs {}", prof.pc);
    }
}
