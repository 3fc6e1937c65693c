//! Four-round private k-means with low additive error.
//!
//! 1. Cell histograms on every level of the dyadic hierarchy.
//! 2. Per OPT guess, level, scale and repetition: agents in medium cells hash
//!    their synthetic image; bucket histograms and bucket sums are released.
//!    Heavy cell centers plus projected averages of heavy buckets form the
//!    bi-criteria candidate set `S`.
//! 3. Agents report their nearest candidate; the weighted candidates are
//!    clustered into `S*`.
//! 4. Agents release their original point in the block of their nearest
//!    `S*` center, plus a histogram of those labels; averages give `S′`.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::cells::{cell_center, cell_of, cell_side, cell_value_bits, encode_cell, heavy_cap, mark_heavy_light, CellId, CellLabels, MarkerParams};
use crate::dimred::{make_domain_map_alg2, DomainMap};
use crate::error::{Error, Result};
use crate::freq::{bits_for, bitstogram_round, bitstogram_scan, heavy_sums_round, HashedLayout, SuccinctHistogram, Value};
use crate::geometry::{clustering_cost, nearest, norm, CenterSet, Dataset};
use crate::kmeans::{standard_kmeans, KMeansConfig};
use crate::lsh::{bottom, is_bottom, lambda_map, project_to_heavy_cells, tune_t, CollisionProfile, LshFunction, SyntheticSpace, ATOM_BITS, DEFAULT_T_MAX};
use crate::prf::{agent_rng, derive, mix64};
use crate::privacy::{four_round_scheme, gaussian_constant, gaussian_perturb, gaussian_spec, labels, split_budget, Allocation, PrivacyBudget};
use crate::protocol::{NoiseMode, Population, Round, Session};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alg2Params {
    pub k: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub beta: f64,
    /// LSH approximation factor, `> √2`.
    pub c: f64,
    pub n: usize,
    /// `L = ⌈lg n⌉`.
    pub levels: u32,
    /// Accuracy of the dimension reduction.
    pub alpha: f64,
    pub c_dim: f64,
    /// Constant of the LSH ratio target.
    pub c_b: f64,
    /// Constant of the repetition count.
    pub c_r: f64,
    pub max_repetitions: usize,
    pub t_max: usize,
    /// Exponent of `d` in the heavy threshold.
    pub d_power: f64,
    /// Constant of the per-level heavy-cell cap `c·k·L/β`.
    pub heavy_cap_constant: f64,
    pub kmeans: KMeansConfig,
    pub mode: NoiseMode,
    pub seed: u64,
}

impl Alg2Params {
    pub fn new(n: usize, k: usize, epsilon: f64, delta: f64, beta: f64, c: f64) -> Self {
        Self {
            k,
            epsilon,
            delta,
            beta,
            c,
            n,
            levels: crate::one_round::levels_for(n),
            alpha: 0.3,
            c_dim: 1.0,
            c_b: 1e-6,
            c_r: 4.0,
            max_repetitions: 10_000,
            t_max: DEFAULT_T_MAX,
            d_power: 0.0,
            heavy_cap_constant: 1.0,
            kmeans: KMeansConfig::default(),
            mode: NoiseMode::Private,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n < self.k {
            return Err(Error::InvalidParameter("need n >= k >= 1"));
        }
        if !(self.c > core::f64::consts::SQRT_2) {
            return Err(Error::InvalidParameter("c must exceed sqrt(2)"));
        }
        if self.levels < 3 {
            return Err(Error::InvalidParameter("need at least three levels"));
        }
        if self.max_repetitions == 0 {
            return Err(Error::InvalidParameter("need at least one repetition"));
        }
        PrivacyBudget::new(self.epsilon, self.delta)?;
        Ok(())
    }
}

/// `k√n·2^f` for `f = 0..=F`, `F = ⌈log₂(√n/k)⌉`; a single guess `n` when
/// `√n ≤ k`.
pub fn opt_guesses(n: usize, k: usize) -> Vec<f64> {
    let root = libm::sqrt(n as f64);
    let ratio = root / k as f64;
    if ratio <= 1.0 {
        return vec![n as f64];
    }
    let f_max = libm::ceil(libm::log2(ratio) - 1e-12) as i32;
    (0..=f_max).map(|f| k as f64 * root * libm::ldexp(1.0, f)).collect()
}

/// `M = 1 + ⌈log₂(d^{3/2}√L)⌉`.
pub fn scale_count(d: usize, levels: u32) -> u32 {
    1 + libm::ceil(libm::log2(libm::pow(d as f64, 1.5) * libm::sqrt(levels as f64)) - 1e-12).max(0.0) as u32
}

/// `r_{l,m} = 2^m·t_l/(d√L)`.
pub fn lsh_scale(l: u32, m: u32, d: usize, levels: u32) -> f64 {
    libm::ldexp(cell_side(l), m as i32) / (d as f64 * libm::sqrt(levels as f64))
}

/// `B = c_B·k·L³/(ε_CH·β²)`.
pub fn ratio_target(c_b: f64, k: usize, levels: u32, eps_ch: f64, beta: f64) -> f64 {
    let l = levels as f64;
    (c_b * k as f64 * l * l * l / (eps_ch * beta * beta)).max(1.0 + 1e-9)
}

/// `R = ⌈c_R·ln(k L² M F/β)/p(1)⌉`, capped.
pub fn repetitions(c_r: f64, k: usize, levels: u32, scales: u32, guesses: usize, beta: f64, p1: f64, cap: usize) -> usize {
    let l = levels as f64;
    let inner = k as f64 * l * l * scales as f64 * guesses as f64 / beta;
    let r = libm::ceil(c_r * libm::log(inner.max(core::f64::consts::E)) / p1);
    if r.is_finite() && r < cap as f64 {
        (r as usize).max(1)
    } else {
        cap
    }
}

/// Everything fixed before round two.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LshPlan {
    pub guesses: Vec<f64>,
    pub scales: u32,
    pub repetitions: usize,
    pub ratio_target: f64,
    pub profile: CollisionProfile,
    /// `F·(L−1)·M·R`.
    pub calls: u64,
}

pub fn plan_lsh(params: &Alg2Params, d: usize) -> Result<LshPlan> {
    let guesses = opt_guesses(params.n, params.k);
    let scales = scale_count(d, params.levels);
    let eps_ch = params.epsilon * 0.25 / (params.levels - 1) as f64;
    let b = ratio_target(params.c_b, params.k, params.levels, eps_ch, params.beta);
    let (_, profile) = tune_t(b, params.c, params.t_max)?;
    let reps = repetitions(params.c_r, params.k, params.levels, scales, guesses.len(), params.beta, profile.p1, params.max_repetitions);
    let calls = guesses.len() as u64 * (params.levels - 1) as u64 * scales as u64 * reps as u64;
    Ok(LshPlan {
        guesses,
        scales,
        repetitions: reps,
        ratio_target: b,
        profile,
        calls,
    })
}

/// Round one: `CH^l` for `l = 1..L−1` (index `l`; index 0 unused).
pub fn round1_cell_histograms(round: &mut Round<'_>, images: &[Vec<f64>], levels: u32, eps_ch: f64, beta: f64) -> Result<Vec<Option<SuccinctHistogram>>> {
    let d = images.first().map_or(1, Vec::len);
    let mut out = vec![None];
    for l in 1..levels {
        let values: Vec<Value> = images.iter().map(|p| encode_cell(&cell_of(p, l))).collect();
        out.push(Some(bitstogram_round(round, labels::CELLS, &values, cell_value_bits(l, d), eps_ch, beta / levels as f64)?));
    }
    Ok(out)
}

/// Inputs of the bucket threshold that do not depend on the level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdInputs {
    pub p1: f64,
    pub beta: f64,
    pub k: usize,
    pub levels: u32,
    pub dim: usize,
    pub n: usize,
    /// `BH_M`.
    pub bh_m: f64,
    /// `BH_E`.
    pub bh_e: f64,
    pub c_g: f64,
    pub eps_bso: f64,
    pub noiseless: bool,
}

/// `T_l = (p(1)/2)·max(βOPT/(t_l²kL²d), 4BH_M/p(1), c_G√(nL²/β)/ε_BSO)`;
/// the noise branches vanish in noiseless mode.
pub fn bucket_threshold(inp: &ThresholdInputs, l: u32, opt_guess: f64) -> f64 {
    let t = cell_side(l);
    let ll = inp.levels as f64;
    let signal = inp.beta * opt_guess / (t * t * inp.k as f64 * ll * ll * inp.dim as f64);
    if inp.noiseless {
        return inp.p1 / 2.0 * signal;
    }
    let count = 4.0 * inp.bh_m / inp.p1;
    let sums = inp.c_g * libm::sqrt(inp.n as f64 * ll * ll / inp.beta) / inp.eps_bso;
    inp.p1 / 2.0 * signal.max(count).max(sums)
}

/// Labels for one OPT guess.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuessContext {
    pub f: usize,
    pub opt_guess: f64,
    pub labels: CellLabels,
    /// `T_l` at index `l`.
    pub thresholds: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum CandidateSource {
    HeavyCell { level: u32 },
    Bucket { f: usize, level: u32, scale: u32, repetition: usize, cell: CellId },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub point: Vec<f64>,
    pub source: CandidateSource,
}

/// A heavy bucket found in round two, with its noisy count and sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketReport {
    pub f: usize,
    pub level: u32,
    pub scale: u32,
    pub repetition: usize,
    pub count: f64,
    pub sum: Vec<f64>,
}

/// Round-two bookkeeping.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Round2Stats {
    pub active_calls: u64,
    pub skipped_calls: u64,
    pub queried_buckets: u64,
}

fn call_seed(seed: u64, f: usize, l: u32, m: u32, rep: usize) -> u64 {
    derive(seed, mix64(((f as u64) << 48) ^ ((l as u64) << 40) ^ ((m as u64) << 32) ^ rep as u64))
}

/// Round two. Agents whose level-`l` cell is medium for guess `f` hash their
/// synthetic image, everyone else reports ⊥. Buckets whose estimate reaches
/// `T_l` are averaged through the sum oracle and projected.
pub fn round2_lsh(
    round: &mut Round<'_>,
    images: &[Vec<f64>],
    contexts: &[GuessContext],
    plan: &LshPlan,
    params: &Alg2Params,
    alloc: &Allocation,
    public_seed: u64,
) -> Result<(Vec<Vec<(BucketReport, Candidate)>>, Round2Stats)> {
    let n = images.len();
    let d = images.first().map_or(1, Vec::len);
    let (bh, bso) = (alloc[labels::BUCKETS], alloc[labels::BUCKET_SUMS]);
    let per_level = plan.scales as u64 * plan.repetitions as u64;
    let bits = ATOM_BITS * plan.profile.t as u32;
    let none = bottom(plan.profile.t);
    let mut stats = Round2Stats::default();
    // (f, level, participants) for every level worth running
    let mut active: Vec<(usize, u32, Vec<usize>)> = Vec::new();
    for ctx in contexts {
        let mut by_level: Vec<Vec<usize>> = vec![Vec::new(); params.levels as usize];
        for (i, p) in images.iter().enumerate() {
            let l = ctx.labels.transition_level(p);
            if (l as usize) < by_level.len() {
                by_level[l as usize].push(i);
            }
        }
        for l in 1..params.levels {
            let members = core::mem::take(&mut by_level[l as usize]);
            if members.is_empty() || ctx.thresholds[l as usize] > n as f64 {
                stats.skipped_calls += per_level;
            } else {
                stats.active_calls += per_level;
                active.push((ctx.f, l, members));
            }
        }
    }
    if stats.skipped_calls > 0 {
        round.charge_all(labels::BUCKETS, bh, stats.skipped_calls)?;
    }
    // histograms first; keep only the qualifying buckets per call
    let mut pending: Vec<(usize, u32, u32, usize, Vec<(Value, f64)>)> = Vec::new();
    let mut spaces: Vec<SyntheticSpace> = Vec::with_capacity(active.len());
    for (f, l, members) in &active {
        let ctx = &contexts[*f];
        let space = SyntheticSpace::new(&ctx.labels, *l, params.c);
        let synth: Vec<_> = members.iter().map(|i| lambda_map(&images[*i], &space)).collect();
        let t_l = ctx.thresholds[*l as usize];
        for m in 1..=plan.scales {
            let r = lsh_scale(*l, m, d, params.levels);
            for rep in 0..plan.repetitions {
                let func = LshFunction::sample(&plan.profile, r, params.c, d, call_seed(public_seed, *f, *l, m, rep));
                let mut values = vec![none.clone(); n];
                for (i, x) in members.iter().zip(&synth) {
                    values[*i] = func.hash(x.as_ref(), &space);
                }
                let mut h = bitstogram_round(round, labels::BUCKETS, &values, bits, bh.epsilon, params.beta)?;
                h.remove(&none);
                let heavy: Vec<(Value, f64)> = h.entries().iter().filter(|(v, c)| *c >= t_l && !is_bottom(v)).cloned().collect();
                if !heavy.is_empty() {
                    pending.push((spaces.len(), m, rep as u32, rep, heavy));
                }
            }
        }
        spaces.push(space);
    }
    let unqueried = plan.calls - pending.len() as u64;
    if unqueried > 0 {
        round.charge_all(labels::BUCKET_SUMS, bso, unqueried)?;
    }
    let mut found: Vec<Vec<(BucketReport, Candidate)>> = vec![Vec::new(); contexts.len()];
    for (idx, m, _, rep, heavy) in pending {
        let (f, l, members) = &active[idx];
        let space = &spaces[idx];
        let r = lsh_scale(*l, m, d, params.levels);
        let func = LshFunction::sample(&plan.profile, r, params.c, d, call_seed(public_seed, *f, *l, m, rep));
        let dense = space.dense_len();
        let mut values = vec![none.clone(); n];
        let mut g = vec![0.0; n * dense];
        for i in members {
            let x = lambda_map(&images[*i], space);
            values[*i] = func.hash(x.as_ref(), space);
            if let Some(x) = x {
                g[i * dense..(i + 1) * dense].copy_from_slice(&x.to_dense(space));
            }
        }
        let oracle = heavy_sums_round(round, labels::BUCKET_SUMS, &values, &g, dense, space.radius() * (1.0 + 1e-9), bso.epsilon, bso.delta)?;
        for (b, count) in heavy {
            stats.queried_buckets += 1;
            let sum = oracle.query(&b);
            let avg: Vec<f64> = sum.iter().map(|s| s / count).collect();
            let point = project_to_heavy_cells(&avg, space);
            let cell = crate::cells::anc_star(&cell_of(&point, *l));
            found[*f].push((
                BucketReport {
                    f: *f,
                    level: *l,
                    scale: m,
                    repetition: rep,
                    count,
                    sum,
                },
                Candidate {
                    point,
                    source: CandidateSource::Bucket {
                        f: *f,
                        level: *l,
                        scale: m,
                        repetition: rep,
                        cell,
                    },
                },
            ));
        }
    }
    Ok((found, stats))
}

/// `S^f`: centers of every heavy cell plus the bucket candidates.
pub fn candidate_centers(ctx: &GuessContext, buckets: &[(BucketReport, Candidate)]) -> Vec<Candidate> {
    let mut out = Vec::new();
    for l in 0..=ctx.labels.levels {
        for c in ctx.labels.heavy(l) {
            out.push(Candidate {
                point: cell_center(c),
                source: CandidateSource::HeavyCell { level: l },
            });
        }
    }
    out.extend(buckets.iter().map(|(_, c)| c.clone()));
    out
}

/// The union `S = ∪_f S^f`, exact duplicates removed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiCriteriaSolution {
    pub candidates: Vec<Candidate>,
}

impl BiCriteriaSolution {
    pub fn from_guesses(per_guess: Vec<Vec<Candidate>>) -> Self {
        let mut seen: BTreeSet<Vec<u64>> = BTreeSet::new();
        let mut candidates = Vec::new();
        for c in per_guess.into_iter().flatten() {
            if seen.insert(c.point.iter().map(|x| x.to_bits()).collect()) {
                candidates.push(c);
            }
        }
        Self { candidates }
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn points(&self, dim: usize) -> Dataset {
        let mut d = Dataset::empty(dim);
        for c in &self.candidates {
            d.push(&c.point);
        }
        d
    }
}

/// Candidate-count audit: `|S| ≤ Σ_f (|S_H^f| + Σ_l M·R·⌊n/(T_l − BH_E)⌋)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateAudit {
    pub total: usize,
    pub cap: u64,
    /// Per guess: heavy-cell centers and the per-level bucket caps.
    pub per_guess: Vec<(usize, Vec<u64>)>,
    /// Levels whose heavy count exceeded `c·k·L/β`, per guess.
    pub heavy_over_cap: Vec<Vec<u32>>,
}

impl CandidateAudit {
    pub fn holds(&self) -> bool {
        self.total as u64 <= self.cap
    }
}

pub fn audit_candidates(contexts: &[GuessContext], plan: &LshPlan, params: &Alg2Params, bh_e: f64, total: usize) -> CandidateAudit {
    let n = params.n as f64;
    let per_call_factor = plan.scales as u64 * plan.repetitions as u64;
    let cap_heavy = heavy_cap(params.k, params.levels, params.beta, params.heavy_cap_constant);
    let mut cap = 0u64;
    let mut per_guess = Vec::new();
    let mut over = Vec::new();
    for ctx in contexts {
        let heavy: usize = ctx.labels.heavy_counts().iter().sum();
        let levels: Vec<u64> = (1..params.levels)
            .map(|l| {
                let slack = ctx.thresholds[l as usize] - bh_e;
                if slack <= 0.0 {
                    u64::MAX
                } else {
                    per_call_factor.saturating_mul(libm::floor(n / slack) as u64)
                }
            })
            .collect();
        cap = levels.iter().fold(cap.saturating_add(heavy as u64), |a, b| a.saturating_add(*b));
        per_guess.push((heavy, levels));
        over.push(ctx.labels.over_cap(cap_heavy));
    }
    CandidateAudit {
        total,
        cap,
        per_guess,
        heavy_over_cap: over,
    }
}

/// Round three: nearest-candidate histogram, proxy `D*`, and `S*`.
pub fn round3_proxy(round: &mut Round<'_>, images: &[Vec<f64>], s: &BiCriteriaSolution, eps: f64, beta: f64, config: &KMeansConfig, k: usize) -> Result<(SuccinctHistogram, CenterSet, CenterSet)> {
    if s.is_empty() {
        return Err(Error::InvalidParameter("empty candidate set"));
    }
    let d = images.first().map_or(1, Vec::len);
    let points = s.points(d);
    let bits = bits_for(s.len() as u64);
    let values: Vec<Value> = images.iter().map(|p| Value::from_u64(nearest(p, &points).0 as u64, bits)).collect();
    let candidates: Vec<Value> = (0..s.len()).map(|i| Value::from_u64(i as u64, bits)).collect();
    let cch = bitstogram_scan(round, labels::CANDIDATES, &values, &candidates, eps, beta)?;
    let weights: Vec<f64> = candidates.iter().map(|v| cch.query(v)).collect();
    let proxy = CenterSet::weighted(points, weights)?;
    let reduced = if proxy.total_weight() > 0.0 {
        standard_kmeans(proxy.points(), proxy.weights(), k, config)?
    } else {
        let mid = Dataset::new(d, vec![0.5; k * d])?;
        CenterSet::new(mid).with_sentinels(vec![true; k])
    };
    Ok((cch, proxy, reduced))
}

/// Round four: Gaussian release of the one-hot block vectors and a histogram
/// of nearest-`S*` labels; `μ̂_j = v̂_j / SH(j)`.
pub fn round4_recover(round: &mut Round<'_>, originals: &Dataset, images: &[Vec<f64>], reduced: &CenterSet, release: PrivacyBudget, eps_sh: f64, beta: f64) -> Result<(CenterSet, Vec<f64>)> {
    let k = reduced.len();
    let dp = originals.dim();
    let labels_of: Vec<usize> = images.iter().map(|p| nearest(p, reduced.points()).0).collect();
    let bits = bits_for(k as u64);
    let values: Vec<Value> = labels_of.iter().map(|j| Value::from_u64(*j as u64, bits)).collect();
    let all: Vec<Value> = (0..k).map(|j| Value::from_u64(j as u64, bits)).collect();
    round.charge_all(labels::RECOVERY, release, 1)?;
    let noise_seed = round.fresh_seed();
    let noiseless = round.mode().is_noiseless();
    let spec = gaussian_spec(release.epsilon, release.delta, core::f64::consts::SQRT_2)?;
    let mut total = vec![0.0; k * dp];
    for (i, p) in originals.iter().enumerate() {
        let j = labels_of[i];
        if noiseless {
            total[j * dp..(j + 1) * dp].iter_mut().zip(p).for_each(|(t, x)| *t += x);
            continue;
        }
        let mut v = vec![0.0; k * dp];
        v[j * dp..(j + 1) * dp].copy_from_slice(p);
        let mut rng = agent_rng(noise_seed, i);
        let y = gaussian_perturb(&v, &spec, &mut rng);
        total.iter_mut().zip(&y).for_each(|(t, x)| *t += x);
    }
    let sh = bitstogram_scan(round, labels::CLUSTER_SIZES, &values, &all, eps_sh, beta)?;
    let counts: Vec<f64> = all.iter().map(|v| sh.query(v)).collect();
    let mut sentinel = vec![false; k];
    for j in 0..k {
        let row = &mut total[j * dp..(j + 1) * dp];
        if counts[j] > 0.0 {
            row.iter_mut().for_each(|x| *x /= counts[j]);
        } else {
            row.iter_mut().for_each(|x| *x = 0.0);
            sentinel[j] = true;
        }
    }
    Ok((CenterSet::new(Dataset::new(dp, total)?).with_sentinels(sentinel), counts))
}

/// Result of a full run.
#[derive(Debug)]
pub struct LowErrorOutput {
    pub centers: CenterSet,
    pub candidates: BiCriteriaSolution,
    pub contexts: Vec<GuessContext>,
    pub cell_histograms: Vec<Option<SuccinctHistogram>>,
    pub plan: LshPlan,
    pub round2: Round2Stats,
    pub buckets: Vec<Vec<BucketReport>>,
    pub audit: CandidateAudit,
    pub proxy: CenterSet,
    pub reduced: CenterSet,
    pub cluster_counts: Vec<f64>,
    pub session: Session,
    pub map: DomainMap,
    /// `f_{D′}(S′)`.
    pub cost: f64,
}

/// Full pipeline on the agents' points (rows must lie in the unit ball).
pub fn low_error_kmeans(data: &Dataset, params: &Alg2Params) -> Result<LowErrorOutput> {
    let q = make_domain_map_alg2(data.dim(), params.k, params.alpha, params.beta, params.c_dim, derive(params.seed, 1))?;
    low_error_kmeans_with_map(data, params, q)
}

/// As [`low_error_kmeans`] with a caller-supplied map (tests pin the shift).
pub fn low_error_kmeans_with_map(data: &Dataset, params: &Alg2Params, q: DomainMap) -> Result<LowErrorOutput> {
    params.validate()?;
    if data.len() != params.n {
        return Err(Error::DimensionMismatch {
            expected: params.n,
            got: data.len(),
        });
    }
    if data.iter().any(|p| norm(p) > 1.0 + 1e-9) {
        return Err(Error::Unbounded);
    }
    let d = q.dim();
    let levels = params.levels;
    let plan = plan_lsh(params, d)?;
    let total = PrivacyBudget::new(params.epsilon, params.delta)?;
    let alloc = split_budget(total, &four_round_scheme((levels - 1) as u64, plan.calls))?;
    let mut session = Session::new(data.len(), total, params.mode, derive(params.seed, 2));
    let agents = Population::new(data.clone());
    let images = agents.local(|a| q.apply(a.point));
    let noiseless = params.mode.is_noiseless();

    // round 1
    let eps_ch = alloc[labels::CELLS].epsilon;
    let ch = round1_cell_histograms(&mut session.begin_round(), &images, levels, eps_ch, params.beta)?;
    let marker = MarkerParams {
        levels,
        dim: d,
        d_power: params.d_power,
    };
    let (bh, bso) = (alloc[labels::BUCKETS], alloc[labels::BUCKET_SUMS]);
    let bits = ATOM_BITS * plan.profile.t as u32;
    let (bh_e, bh_m) = if noiseless { (0.0, 0.0) } else { HashedLayout::new(data.len(), bits).bounds(data.len(), bh.epsilon, params.beta) };
    let inputs = ThresholdInputs {
        p1: plan.profile.p1,
        beta: params.beta,
        k: params.k,
        levels,
        dim: d,
        n: data.len(),
        bh_m,
        bh_e,
        c_g: if noiseless { 0.0 } else { gaussian_constant(bso.delta)? },
        eps_bso: bso.epsilon,
        noiseless,
    };
    let mut contexts = Vec::with_capacity(plan.guesses.len());
    for (f, opt) in plan.guesses.iter().enumerate() {
        let labels = mark_heavy_light(&ch, *opt, params.k, params.beta, &marker)?;
        let mut thresholds = vec![f64::INFINITY; levels as usize];
        for l in 1..levels {
            thresholds[l as usize] = bucket_threshold(&inputs, l, *opt);
        }
        contexts.push(GuessContext {
            f,
            opt_guess: *opt,
            labels,
            thresholds,
        });
    }

    // round 2
    let (found, round2) = round2_lsh(&mut session.begin_round(), &images, &contexts, &plan, params, &alloc, derive(params.seed, 3))?;
    let per_guess: Vec<Vec<Candidate>> = contexts.iter().zip(&found).map(|(ctx, b)| candidate_centers(ctx, b)).collect();
    let candidates = BiCriteriaSolution::from_guesses(per_guess);
    let audit = audit_candidates(&contexts, &plan, params, bh_e, candidates.len());
    if !audit.holds() {
        return Err(Error::CandidateOverflow {
            total: audit.total,
            cap: audit.cap,
        });
    }

    // round 3
    let (_, proxy, reduced) = round3_proxy(
        &mut session.begin_round(),
        &images,
        &candidates,
        alloc[labels::CANDIDATES].epsilon,
        params.beta,
        &params.kmeans.with_seed(derive(params.seed, 4)),
        params.k,
    )?;

    // round 4
    let (centers, cluster_counts) = round4_recover(
        &mut session.begin_round(),
        data,
        &images,
        &reduced,
        alloc[labels::RECOVERY],
        alloc[labels::CLUSTER_SIZES].epsilon,
        params.beta,
    )?;
    if !noiseless {
        session.ledger().verify_exact()?;
    }
    let cost = clustering_cost(data, None, centers.points());
    Ok(LowErrorOutput {
        centers,
        candidates,
        contexts,
        cell_histograms: ch,
        plan,
        round2,
        buckets: found.into_iter().map(|v| v.into_iter().map(|(b, _)| b).collect()).collect(),
        audit,
        proxy,
        reduced,
        cluster_counts,
        session,
        map: q,
        cost,
    })
}
