//! Succinct histograms from one round of ε-LDP reports.
//!
//! Hashed mode (large universes): agents are split by a public assignment
//! into a frequency-oracle half and `g` chunk groups. Values are hashed into
//! `T ≈ √n` buckets. Chunk group `i` reports `(bucket, i-th chunk of the
//! value)` through Hadamard response; the analyzer decodes the heaviest chunk
//! per bucket, reassembles one candidate per bucket, keeps it only if it
//! hashes back to its bucket, and estimates its frequency from the oracle
//! half, where agents send randomized response on a public sign of their
//! value.
//!
//! Scan mode (enumerable candidates): every agent feeds the frequency oracle
//! and each listed candidate is estimated.
//!
//! Both modes return the error bound `E` (every stored estimate is within `E`
//! of the truth) and the omission threshold `M` (every value at least that
//! frequent is stored). Both are Bernstein bounds with a union over the
//! estimates the analyzer forms; the hashed `M` additionally assumes the
//! other mass sharing a heavy value's bucket stays below `2n/T`.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::hadamard::{entry, fwht};
use super::value::Value;
use crate::error::{Error, Result};
use crate::prf::{agent_rng, derive, Prf};
use crate::privacy::PrivacyBudget;
use crate::protocol::Round;

/// Multiplier on the error bound `E`, frozen after calibration.
pub const E_SCALE: f64 = 1.0;
/// Multiplier on the omission threshold `M`, frozen after calibration.
pub const M_SCALE: f64 = 1.0;

const SALT_VALUE: u64 = 1;
const SALT_SIGN: u64 = 2;
const SALT_GROUP: u64 = 3;
const SALT_ROW: u64 = 4;
const SALT_COINS: u64 = 5;
const SALT_BUCKET: u64 = 6;

/// `(e^ε + 1)/(e^ε − 1)`: the debiasing factor of binary randomized response.
pub fn rr_scale(epsilon: f64) -> f64 {
    let e = libm::exp(epsilon);
    (e + 1.0) / (e - 1.0)
}

/// Two-sided Bernstein deviation for a sum with variance proxy `v` and
/// per-term bound `b`, at log-failure level `lg`.
pub fn bernstein(v: f64, b: f64, lg: f64) -> f64 {
    let a = b / 3.0 * lg;
    a + libm::sqrt(a * a + 2.0 * v * lg)
}

/// Shape of the hashed construction for `n` agents and `bits`-bit values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashedLayout {
    pub buckets: u64,
    pub chunk_bits: u32,
    pub chunks: u32,
    pub domain: u64,
}

impl HashedLayout {
    pub fn new(n: usize, bits: u32) -> Self {
        let buckets = (libm::ceil(libm::sqrt(n as f64)) as u64).max(2).next_power_of_two();
        let k_max = ((4 * n as u64).next_power_of_two()).clamp(1 << 10, 1 << 20);
        let room = (k_max / buckets).max(2).trailing_zeros();
        let chunk_bits = room.min(bits.max(1));
        let chunks = bits.max(1).div_ceil(chunk_bits);
        Self {
            buckets,
            chunk_bits,
            chunks,
            domain: buckets << chunk_bits,
        }
    }

    /// `(E, M)` for `n` agents at `epsilon` with failure probability `beta`.
    pub fn bounds(&self, n: usize, epsilon: f64, beta: f64) -> (f64, f64) {
        let c = rr_scale(epsilon);
        let n = n as f64;
        let g = self.chunks as f64;
        let e = bernstein(2.0 * n * c * c, 2.0 * c + 1.0, libm::log(2.0 * self.buckets as f64 / beta));
        let dev = bernstein(
            2.0 * g * n * c * c,
            2.0 * g * c + 1.0,
            libm::log(2.0 * g * self.domain as f64 / beta),
        );
        let e = E_SCALE * e;
        let m = M_SCALE * (2.0 * dev + 2.0 * n / self.buckets as f64).max(e);
        (e, m)
    }
}

/// `(E, M)` of scan mode over `candidates` values.
pub fn scan_bounds(n: usize, epsilon: f64, beta: f64, candidates: usize) -> (f64, f64) {
    let c = rr_scale(epsilon);
    let e = E_SCALE * bernstein(n as f64 * c * c, c + 1.0, libm::log(2.0 * candidates.max(1) as f64 / beta));
    (e, e)
}

/// List of (value, estimated frequency) pairs with explicit error bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccinctHistogram {
    entries: Vec<(Value, f64)>,
    pub error_bound: f64,
    pub omission_threshold: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub noiseless: bool,
}

impl SuccinctHistogram {
    fn from_map(map: BTreeMap<Value, f64>, error_bound: f64, omission_threshold: f64, beta: f64, epsilon: f64, seed: u64, noiseless: bool) -> Self {
        Self {
            entries: map.into_iter().collect(),
            error_bound,
            omission_threshold,
            beta,
            epsilon,
            seed,
            noiseless,
        }
    }

    /// Stored entries with raw (unclamped) estimates, sorted by value.
    pub fn entries(&self) -> &[(Value, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Raw stored estimate, if the value is stored.
    pub fn raw(&self, v: &Value) -> Option<f64> {
        self.entries.binary_search_by(|(k, _)| k.cmp(v)).ok().map(|i| self.entries[i].1)
    }

    /// Stored estimate clamped at zero; absent values read as zero.
    pub fn query(&self, v: &Value) -> f64 {
        self.raw(v).map_or(0.0, |x| x.max(0.0))
    }

    /// Drop a value (the analyzer discards the non-participation token).
    pub fn remove(&mut self, v: &Value) {
        if let Ok(i) = self.entries.binary_search_by(|(k, _)| k.cmp(v)) {
            self.entries.remove(i);
        }
    }
}

/// Free-function form of [`SuccinctHistogram::query`].
pub fn histogram_query(h: &SuccinctHistogram, v: &Value) -> f64 {
    h.query(v)
}

fn check_inputs(values: &[Value], bits: u32, epsilon: f64, beta: f64) -> Result<()> {
    if bits == 0 {
        return Err(Error::Unbounded);
    }
    if !(epsilon > 0.0) || !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidParameter("histogram needs epsilon > 0 and beta in (0, 1)"));
    }
    if let Some(v) = values.iter().find(|v| v.len() != bits) {
        return Err(Error::DimensionMismatch {
            expected: bits as usize,
            got: v.len() as usize,
        });
    }
    Ok(())
}

fn exact_counts<'a, I: Iterator<Item = &'a Value>>(values: I) -> BTreeMap<Value, f64> {
    let mut map = BTreeMap::new();
    for v in values {
        *map.entry(v.clone()).or_insert(0.0) += 1.0;
    }
    map
}

struct Keys {
    value: Prf,
    sign: Prf,
}

impl Keys {
    fn new(seed: u64) -> Self {
        Self {
            value: Prf::new(derive(seed, SALT_VALUE)),
            sign: Prf::new(derive(seed, SALT_SIGN)),
        }
    }

    fn digest(&self, v: &Value) -> u64 {
        self.value.hash_words(v.words())
    }
}

/// Randomized response on `x ∈ {±1}`.
fn respond<R: Rng>(x: f64, keep: f64, rng: &mut R) -> f64 {
    if rng.random::<f64>() < keep {
        x
    } else {
        -x
    }
}

/// Sum `Σ y_j·sign(v, j)` over oracle reports `(j, y_j)`.
fn oracle_sum(keys: &Keys, reports: &[(u64, f64)], v: &Value) -> f64 {
    let row = keys.sign.row(keys.digest(v));
    reports.iter().map(|(j, y)| y * row.sign(*j)).sum()
}

/// One histogram over a `bits`-bit universe (hashed mode).
pub fn bitstogram_round(round: &mut Round<'_>, label: &str, values: &[Value], bits: u32, epsilon: f64, beta: f64) -> Result<SuccinctHistogram> {
    check_inputs(values, bits, epsilon, beta)?;
    round.charge_all(label, PrivacyBudget::pure(epsilon), 1)?;
    let seed = round.fresh_seed();
    let n = values.len();
    if round.mode().is_noiseless() {
        return Ok(SuccinctHistogram::from_map(exact_counts(values.iter()), 0.0, 0.0, beta, epsilon, seed, true));
    }
    let layout = HashedLayout::new(n, bits);
    let (e, m) = layout.bounds(n, epsilon, beta);
    let keys = Keys::new(seed);
    let bucket_prf = Prf::new(derive(seed, SALT_BUCKET));
    let group_prf = Prf::new(derive(seed, SALT_GROUP));
    let row_prf = Prf::new(derive(seed, SALT_ROW));
    let coins = derive(seed, SALT_COINS);
    let keep = {
        let x = libm::exp(epsilon);
        x / (x + 1.0)
    };
    let c = rr_scale(epsilon);
    let g = layout.chunks;
    let mask = layout.buckets - 1;
    let bucket_of = |d: u64| bucket_prf.eval(d) & mask;

    let mut oracle: Vec<(u64, f64)> = Vec::with_capacity(n / 2 + 1);
    let mut acc = vec![vec![0.0; layout.domain as usize]; g as usize];
    for (j, v) in values.iter().enumerate() {
        let mut rng = agent_rng(coins, j);
        let u = group_prf.unit(j as u64, 0);
        let d = keys.digest(v);
        if u < 0.5 {
            let x = keys.sign.sign(d, j as u64);
            oracle.push((j as u64, respond(x, keep, &mut rng)));
        } else {
            let i = (((u - 0.5) * 2.0 * g as f64) as u32).min(g - 1);
            let chunk = v.bits(i * layout.chunk_bits, layout.chunk_bits);
            let x = (bucket_of(d) << layout.chunk_bits) | chunk;
            let r = row_prf.eval2(j as u64, i as u64) & (layout.domain - 1);
            acc[i as usize][r as usize] += respond(entry(r, x), keep, &mut rng);
        }
    }
    for a in acc.iter_mut() {
        fwht(a);
    }

    let mut map = BTreeMap::new();
    for b in 0..layout.buckets {
        let mut cand = Value::zeros(bits);
        for i in 0..g {
            let off = i * layout.chunk_bits;
            let width = layout.chunk_bits.min(bits - off);
            let base = (b << layout.chunk_bits) as usize;
            let row = &acc[i as usize][base..base + (1usize << width)];
            // first maximum wins ties
            let best = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (x, w)| if *w > acc.1 { (x, *w) } else { acc });
            cand.set_bits(off, width, best.0 as u64);
        }
        if bucket_of(keys.digest(&cand)) == b {
            let est = 2.0 * c * oracle_sum(&keys, &oracle, &cand);
            map.insert(cand, est);
        }
    }
    Ok(SuccinctHistogram::from_map(map, e, m, beta, epsilon, seed, false))
}

/// One histogram restricted to an explicit candidate list (scan mode).
pub fn bitstogram_scan(round: &mut Round<'_>, label: &str, values: &[Value], candidates: &[Value], epsilon: f64, beta: f64) -> Result<SuccinctHistogram> {
    let bits = values.first().or(candidates.first()).map_or(1, |v| v.len());
    check_inputs(values, bits, epsilon, beta)?;
    round.charge_all(label, PrivacyBudget::pure(epsilon), 1)?;
    let seed = round.fresh_seed();
    let n = values.len();
    if round.mode().is_noiseless() {
        let mut map = exact_counts(values.iter());
        map.retain(|k, _| candidates.contains(k));
        return Ok(SuccinctHistogram::from_map(map, 0.0, 0.0, beta, epsilon, seed, true));
    }
    let (e, m) = scan_bounds(n, epsilon, beta, candidates.len());
    let keys = Keys::new(seed);
    let coins = derive(seed, SALT_COINS);
    let keep = {
        let x = libm::exp(epsilon);
        x / (x + 1.0)
    };
    let c = rr_scale(epsilon);
    let reports: Vec<(u64, f64)> = values
        .iter()
        .enumerate()
        .map(|(j, v)| {
            let mut rng = agent_rng(coins, j);
            let x = keys.sign.sign(keys.digest(v), j as u64);
            (j as u64, respond(x, keep, &mut rng))
        })
        .collect();
    let map = candidates.iter().map(|v| (v.clone(), c * oracle_sum(&keys, &reports, v))).collect();
    Ok(SuccinctHistogram::from_map(map, e, m, beta, epsilon, seed, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{NoiseMode, Session};

    fn session(n: usize, mode: NoiseMode, seed: u64) -> Session {
        Session::new(n, PrivacyBudget::pure(10.0), mode, seed)
    }

    #[test]
    fn layout_fits_domain_cap() {
        let l = HashedLayout::new(50_000, 20);
        assert_eq!(l.buckets, 256);
        assert_eq!(l.chunk_bits, 10);
        assert_eq!(l.chunks, 2);
        assert_eq!(l.domain, 1 << 18);
        let (e, m) = l.bounds(50_000, 2.0, 0.05);
        assert!(e <= m);
        assert!((e - 1795.0).abs() < 5.0, "{e}");
        let tiny = HashedLayout::new(10, 3);
        assert_eq!(tiny.chunks, 1);
        assert_eq!(tiny.chunk_bits, 3);
    }

    #[test]
    fn bernstein_solves_its_quadratic() {
        let (v, b, lg) = (100.0, 3.0, 2.0);
        let t = bernstein(v, b, lg);
        assert!((t * t / (2.0 * (v + b * t / 3.0)) - lg).abs() < 1e-9);
    }

    #[test]
    fn query_conventions() {
        let h = SuccinctHistogram::from_map(
            [(Value::from_u64(1, 4), 412.3), (Value::from_u64(2, 4), -3.1)].into_iter().collect(),
            1.0,
            1.0,
            0.1,
            1.0,
            0,
            false,
        );
        assert_eq!(h.query(&Value::from_u64(1, 4)), 412.3);
        assert_eq!(h.query(&Value::from_u64(2, 4)), 0.0);
        assert_eq!(h.raw(&Value::from_u64(2, 4)), Some(-3.1));
        assert_eq!(h.query(&Value::from_u64(3, 4)), 0.0);
    }

    #[test]
    fn noiseless_counts_exactly() {
        let vals: Vec<Value> = [1, 1, 2, 5, 1].iter().map(|x| Value::from_u64(*x, 8)).collect();
        let mut s = session(vals.len(), NoiseMode::Noiseless, 0);
        let h = bitstogram_round(&mut s.begin_round(), "h", &vals, 8, 1.0, 0.1).unwrap();
        assert_eq!(h.query(&Value::from_u64(1, 8)), 3.0);
        assert_eq!(h.query(&Value::from_u64(9, 8)), 0.0);
        assert_eq!((h.error_bound, h.omission_threshold), (0.0, 0.0));
    }

    #[test]
    fn rejects_missing_universe() {
        let mut s = session(1, NoiseMode::Private, 0);
        let r = bitstogram_round(&mut s.begin_round(), "h", &[Value::zeros(0)], 0, 1.0, 0.1);
        assert_eq!(r, Err(Error::Unbounded));
    }

    #[test]
    fn single_value_population_is_found() {
        let n = 50_000;
        let v = Value::from_u64(0xabcde, 20);
        let vals = vec![v.clone(); n];
        let mut s = session(n, NoiseMode::Private, 3);
        let h = bitstogram_round(&mut s.begin_round(), "h", &vals, 20, 1.0, 0.05).unwrap();
        let est = h.raw(&v).expect("the only value is recovered");
        assert!((est - n as f64).abs() <= h.omission_threshold);
        assert!((est - n as f64).abs() <= h.error_bound);
    }

    #[test]
    fn scan_mode_estimates_each_candidate() {
        let n = 20_000;
        let cands: Vec<Value> = (0..4).map(|x| Value::from_u64(x, 3)).collect();
        let vals: Vec<Value> = (0..n).map(|j| cands[if j % 10 < 6 { 0 } else { 1 }].clone()).collect();
        let mut s = session(n, NoiseMode::Private, 4);
        let h = bitstogram_scan(&mut s.begin_round(), "h", &vals, &cands, 1.0, 0.05).unwrap();
        assert_eq!(h.len(), 4);
        for (v, truth) in cands.iter().zip([12_000.0, 8_000.0, 0.0, 0.0]) {
            assert!((h.raw(v).unwrap() - truth).abs() <= h.error_bound);
        }
    }
}
