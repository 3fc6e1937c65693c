//! One-round private k-means over nested grids.
//!
//! Every agent answers, in a single round, one histogram and one sum-oracle
//! query per grid level. The analyzer then walks the levels from fine to
//! coarse, greedily picking the grid points that cover the most points not
//! yet covered, and recovers centers in the original space from the sums.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::dimred::{make_domain_map_alg1, DomainMap};
use crate::error::{Error, Result};
use crate::freq::{bitstogram_round, heavy_sums_round, SuccinctHistogram, SumOracle, Value};
use crate::geometry::{clustering_cost, nearest, norm, CenterSet, Dataset};
use crate::grids::{coarsen, GridPoint, Grids};
use crate::kmeans::{standard_kmeans, KMeansConfig};
use crate::prf::derive;
use crate::privacy::{labels, one_round_scheme, split_budget, PrivacyBudget};
use crate::protocol::{NoiseMode, Population, Session};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alg1Params {
    pub k: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub n: usize,
    /// `L = ⌈lg n⌉`.
    pub levels: u32,
    /// Cap `N_G` on the cover size.
    pub n_g: usize,
    /// Greedy picks per level, `⌈2·N_G·ln(1/α)⌉`.
    pub picks: usize,
    pub c_dim: f64,
    pub c_s: f64,
    pub kmeans: KMeansConfig,
    pub mode: NoiseMode,
    pub seed: u64,
}

impl Alg1Params {
    pub fn new(n: usize, k: usize, epsilon: f64, delta: f64, alpha: f64, beta: f64) -> Self {
        let n_g = 20 * k;
        Self {
            k,
            epsilon,
            delta,
            alpha,
            beta,
            n,
            levels: levels_for(n),
            n_g,
            picks: pick_count(n_g, alpha),
            c_dim: 1.0,
            c_s: 1.0,
            kmeans: KMeansConfig::default(),
            mode: NoiseMode::Private,
            seed: 0,
        }
    }

    pub fn with_n_g(mut self, n_g: usize) -> Self {
        self.n_g = n_g;
        self.picks = pick_count(n_g, self.alpha);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n < self.k {
            return Err(Error::InvalidParameter("need n >= k >= 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::InvalidParameter("alpha must lie in (0, 1/2)"));
        }
        if self.levels == 0 || self.picks == 0 {
            return Err(Error::InvalidParameter("need at least one level and one pick"));
        }
        PrivacyBudget::new(self.epsilon, self.delta)?;
        Ok(())
    }
}

/// `⌈lg n⌉`, at least 1.
pub fn levels_for(n: usize) -> u32 {
    (libm::ceil(libm::log2(n.max(2) as f64) - 1e-12) as u32).max(1)
}

pub fn pick_count(n_g: usize, alpha: f64) -> usize {
    libm::ceil(2.0 * n_g as f64 * libm::log(1.0 / alpha)) as usize
}

/// Everything the analyzer holds after the interaction round.
#[derive(Clone, Debug)]
pub struct Interaction {
    pub grids: Grids,
    /// `PH^l` at index `l − 1`.
    pub histograms: Vec<SuccinctHistogram>,
    /// `PSO^l` at index `l − 1`.
    pub oracles: Vec<SumOracle>,
    pub original_dim: usize,
}

impl Interaction {
    pub fn histogram(&self, l: u32) -> &SuccinctHistogram {
        &self.histograms[l as usize - 1]
    }

    pub fn oracle(&self, l: u32) -> &SumOracle {
        &self.oracles[l as usize - 1]
    }

    fn raw_count(&self, g: &GridPoint) -> f64 {
        self.histogram(g.level).raw(&self.grids.encode(g)).unwrap_or(0.0)
    }

    fn raw_sum(&self, g: &GridPoint) -> Vec<f64> {
        self.oracle(g.level).query(&self.grids.encode(g))
    }
}

/// Step 1: one round, `L` histograms of grid points in the reduced space and
/// `L` sum oracles of the original points keyed by the same grid points.
pub fn run_interaction(session: &mut Session, agents: &Population, q: &DomainMap, params: &Alg1Params) -> Result<Interaction> {
    params.validate()?;
    let levels = params.levels;
    let alloc = split_budget(PrivacyBudget::new(params.epsilon, params.delta)?, &one_round_scheme(levels as u64))?;
    let (ph, pso) = (alloc[labels::HISTOGRAM], alloc[labels::SUMS]);
    let grids = Grids::new(levels, params.alpha, q.dim());
    let images = agents.local(|a| q.apply(a.point));
    let originals: Vec<f64> = agents.local(|a| a.point.to_vec()).concat();
    let mut round = session.begin_round();
    let mut histograms = Vec::with_capacity(levels as usize);
    let mut oracles = Vec::with_capacity(levels as usize);
    for l in 1..=levels {
        let values: Vec<Value> = images.iter().map(|p| grids.encode(&grids.floor(p, l))).collect();
        histograms.push(bitstogram_round(&mut round, labels::HISTOGRAM, &values, grids.value_bits(l), ph.epsilon, params.beta)?);
    }
    for l in 1..=levels {
        let values: Vec<Value> = images.iter().map(|p| grids.encode(&grids.floor(p, l))).collect();
        oracles.push(heavy_sums_round(&mut round, labels::SUMS, &values, &originals, agents.dim(), 1.0, pso.epsilon, pso.delta)?);
    }
    Ok(Interaction {
        grids,
        histograms,
        oracles,
        original_dim: agents.dim(),
    })
}

/// One greedy pick with its adjusted count and sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pick {
    pub point: GridPoint,
    pub count: f64,
    pub sum: Vec<f64>,
}

/// Bookkeeping of one level of the proxy construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelState {
    pub level: u32,
    /// `G*_l`.
    pub picks: Vec<Pick>,
    /// `M*_l`.
    pub maximal: BTreeSet<GridPoint>,
    /// Adjusted `Count` over every grid point the level knows about.
    pub counts: BTreeMap<GridPoint, f64>,
}

impl LevelState {
    /// Total adjusted count over the level's domain.
    pub fn count_mass(&self) -> f64 {
        self.counts.values().sum()
    }
}

/// Step 2: greedy cover with maximal-set subtraction; returns the per-level
/// state and the proxy `D*` (picks weighted by their clamped counts).
pub fn build_proxy(inter: &Interaction, params: &Alg1Params) -> (Vec<LevelState>, CenterSet) {
    let grids = &inter.grids;
    let mut states: Vec<LevelState> = Vec::with_capacity(params.levels as usize);
    let mut maximal: BTreeSet<GridPoint> = BTreeSet::new();
    // raw PH/PSO of every pick, queried once at pick time
    let mut raw: BTreeMap<GridPoint, (f64, Vec<f64>)> = BTreeMap::new();
    let mut proxy = Dataset::empty(grids.dim);
    let mut weights = Vec::new();
    for l in 1..=params.levels {
        let h = inter.histogram(l);
        let mut counts: BTreeMap<GridPoint, f64> = h.entries().iter().map(|(v, c)| (grids.decode_value(v, l), *c)).collect();
        let mut covered: BTreeMap<GridPoint, Vec<&GridPoint>> = BTreeMap::new();
        for g in &maximal {
            let up = coarsen(g, l);
            *counts.entry(up.clone()).or_insert(0.0) -= raw[g].0;
            covered.entry(up).or_default().push(g);
        }
        let mut order: Vec<(&GridPoint, f64)> = counts.iter().map(|(g, c)| (g, *c)).collect();
        order.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let picked: Vec<GridPoint> = order.into_iter().take(params.picks).map(|(g, _)| g.clone()).collect();
        let mut picks = Vec::with_capacity(picked.len());
        for g in picked {
            let raw_sum = inter.raw_sum(&g);
            let mut sum = raw_sum.clone();
            for sub in covered.get(&g).into_iter().flatten() {
                sum.iter_mut().zip(&raw[*sub].1).for_each(|(s, x)| *s -= x);
            }
            let count = counts[&g];
            raw.insert(g.clone(), (inter.raw_count(&g), raw_sum));
            proxy.push(&grids.decode(&g));
            weights.push(count.max(0.0));
            picks.push(Pick { point: g, count, sum });
        }
        let picked_set: BTreeSet<&GridPoint> = picks.iter().map(|p| &p.point).collect();
        maximal.retain(|g| !picked_set.contains(&coarsen(g, l)));
        maximal.extend(picks.iter().map(|p| p.point.clone()));
        states.push(LevelState {
            level: l,
            picks,
            maximal: maximal.clone(),
            counts,
        });
    }
    let proxy = CenterSet::weighted(proxy, weights).expect("clamped weights are valid");
    (states, proxy)
}

/// Output of step 3.
#[derive(Clone, Debug, PartialEq)]
pub struct Recovery {
    /// `S′` in the original space; zero-count clusters are origin sentinels.
    pub centers: CenterSet,
    /// `S*` in the reduced space.
    pub reduced: Option<CenterSet>,
    /// Aggregated `Count` per center.
    pub counts: Vec<f64>,
}

fn sentinels(k: usize, dim: usize) -> CenterSet {
    CenterSet::new(Dataset::new(dim, vec![0.0; k * dim]).expect("zeros")).with_sentinels(vec![true; k])
}

/// Step 3: cluster the proxy, then average the original-space sums over the
/// picks nearest to each reduced center.
pub fn recover_centers(proxy: &CenterSet, states: &[LevelState], k: usize, config: &KMeansConfig, original_dim: usize) -> Result<Recovery> {
    if !(proxy.total_weight() > 0.0) {
        return Ok(Recovery {
            centers: sentinels(k, original_dim),
            reduced: None,
            counts: vec![0.0; k],
        });
    }
    let reduced = standard_kmeans(proxy.points(), proxy.weights(), k, config)?;
    let mut sums = vec![0.0; k * original_dim];
    let mut counts = vec![0.0; k];
    let mut offset = 0;
    for state in states {
        for pick in &state.picks {
            let (j, _) = nearest(proxy.center(offset), reduced.points());
            offset += 1;
            counts[j] += pick.count;
            sums[j * original_dim..(j + 1) * original_dim].iter_mut().zip(&pick.sum).for_each(|(s, x)| *s += x);
        }
    }
    debug_assert_eq!(offset, proxy.len());
    let mut sentinel = vec![false; k];
    for j in 0..k {
        let row = &mut sums[j * original_dim..(j + 1) * original_dim];
        if counts[j] > 0.0 {
            row.iter_mut().for_each(|s| *s /= counts[j]);
        } else {
            row.iter_mut().for_each(|s| *s = 0.0);
            sentinel[j] = true;
        }
    }
    Ok(Recovery {
        centers: CenterSet::new(Dataset::new(original_dim, sums)?).with_sentinels(sentinel),
        reduced: Some(reduced),
        counts,
    })
}

/// Per-level diagnostics of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelDiagnostics {
    pub level: u32,
    pub picked: usize,
    pub positive_picks: usize,
    pub count_mass: f64,
    pub maximal: usize,
    pub histogram_entries: usize,
    pub error_bound: f64,
}

/// Result of a full run.
#[derive(Debug)]
pub struct OneRoundOutput {
    pub centers: CenterSet,
    pub proxy: CenterSet,
    pub recovery: Recovery,
    pub states: Vec<LevelState>,
    pub levels: Vec<LevelDiagnostics>,
    /// `PH^l` at index `l − 1`.
    pub histograms: Vec<SuccinctHistogram>,
    pub session: Session,
    pub map: DomainMap,
    pub reduced_dim: usize,
    /// `f_{D′}(S′)`.
    pub cost: f64,
}

/// Full pipeline on the agents' points (rows must lie in the unit ball).
pub fn one_round_kmeans(data: &Dataset, params: &Alg1Params) -> Result<OneRoundOutput> {
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
    let q = make_domain_map_alg1(data.dim(), params.k, params.alpha, params.beta, params.n, params.c_dim, params.c_s, derive(params.seed, 1))?;
    let cap = PrivacyBudget::new(params.epsilon, params.delta)?;
    let mut session = Session::new(data.len(), cap, params.mode, derive(params.seed, 2));
    let agents = Population::new(data.clone());
    let inter = run_interaction(&mut session, &agents, &q, params)?;
    if !params.mode.is_noiseless() {
        session.ledger().verify_exact()?;
    }
    let (states, proxy) = build_proxy(&inter, params);
    let recovery = recover_centers(&proxy, &states, params.k, &params.kmeans.with_seed(derive(params.seed, 3)), data.dim())?;
    let levels = states
        .iter()
        .map(|s| LevelDiagnostics {
            level: s.level,
            picked: s.picks.len(),
            positive_picks: s.picks.iter().filter(|p| p.count > 0.0).count(),
            count_mass: s.count_mass(),
            maximal: s.maximal.len(),
            histogram_entries: inter.histogram(s.level).len(),
            error_bound: inter.histogram(s.level).error_bound,
        })
        .collect();
    let cost = clustering_cost(data, None, recovery.centers.points());
    Ok(OneRoundOutput {
        centers: recovery.centers.clone(),
        proxy,
        recovery,
        states,
        levels,
        histograms: inter.histograms,
        session,
        reduced_dim: q.dim(),
        map: q,
        cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::squared_distance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noiseless(n: usize, k: usize) -> Alg1Params {
        let mut p = Alg1Params::new(n, k, 1.0, 1e-6, 0.3, 0.1).with_n_g(2);
        p.mode = NoiseMode::Noiseless;
        p
    }

    fn blobs(n: usize, centers: &[[f64; 2]], spread: f64, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let c = centers[i % centers.len()];
                vec![c[0] + spread * (rng.random::<f64>() - 0.5), c[1] + spread * (rng.random::<f64>() - 0.5)]
            })
            .collect();
        Dataset::from_rows(rows).unwrap()
    }

    #[test]
    fn single_location_is_recovered_exactly() {
        let data = Dataset::from_rows(vec![vec![0.3, -0.2]; 50]).unwrap();
        let params = noiseless(50, 1);
        let out = one_round_kmeans(&data, &params).unwrap();
        assert!(squared_distance(out.centers.center(0), &[0.3, -0.2]) < 1e-20);
        assert_eq!(out.centers.sentinel_count(), 0);
        // picked at level 1; coarser ancestors carry no new mass
        assert_eq!(out.levels[0].positive_picks, 1);
        assert!(out.levels[1..].iter().all(|d| d.positive_picks == 0));
    }

    #[test]
    fn two_clusters_noiseless() {
        let data = blobs(400, &[[0.5, 0.5], [-0.5, -0.4]], 0.05, 3);
        let params = noiseless(400, 2);
        let out = one_round_kmeans(&data, &params).unwrap();
        let mut truth = [[0.0; 2]; 2];
        for (i, p) in data.iter().enumerate() {
            truth[i % 2][0] += p[0] / 200.0;
            truth[i % 2][1] += p[1] / 200.0;
        }
        for t in &truth {
            let (_, d) = nearest(t, out.centers.points());
            assert!(d < 1e-3, "{d}");
        }
        assert!(out.levels.iter().all(|l| l.maximal <= l.level as usize * params.picks));
    }

    #[test]
    fn ledger_charges_two_families_per_level() {
        let data = blobs(500, &[[0.2, 0.1]], 0.1, 1);
        let params = Alg1Params::new(500, 1, 1.0, 1e-6, 0.3, 0.1);
        let out = one_round_kmeans(&data, &params).unwrap();
        let ledger = out.session.ledger();
        assert_eq!(ledger.invocations(0), 2 * params.levels as u64);
        assert!(ledger.spent(7).matches(&PrivacyBudget::new(1.0, 1e-6).unwrap()));
        assert_eq!(out.session.transcript(3).len(), 1);
    }

    #[test]
    fn empty_proxy_gives_sentinels() {
        let r = recover_centers(&CenterSet::weighted(Dataset::empty(2), vec![]).unwrap(), &[], 3, &KMeansConfig::default(), 4).unwrap();
        assert_eq!(r.centers.sentinel_count(), 3);
        assert_eq!(r.centers.center(2), [0.0; 4]);
    }

    #[test]
    fn rejects_points_outside_the_ball() {
        let data = Dataset::from_rows(vec![vec![1.5, 0.0]; 4]).unwrap();
        assert_eq!(one_round_kmeans(&data, &noiseless(4, 1)).err(), Some(Error::Unbounded));
    }
}
