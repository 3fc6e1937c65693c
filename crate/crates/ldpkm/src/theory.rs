//! Exact, data-reading counterparts of quantities the protocols only see
//! through noisy reports. Compiled only with the `theory` feature, which the
//! test suites enable; the command-line binary refuses to start with it.

use std::collections::{BTreeMap, BTreeSet};

use ldpkm_core::cells::{cell_of, CellId, MarkerParams};
use ldpkm_core::geometry::nearest;
use ldpkm_core::grids::{GridPoint, Grids};
use ldpkm_core::kmeans::brute_force_kmeans;
use ldpkm_core::one_round::{pick_count, LevelState};
use ldpkm_core::{Dataset, Result};

/// Exact access to the (reduced) points of one instance.
#[derive(Clone, Debug)]
pub struct TheoryOracle<'a> {
    pub images: &'a [Vec<f64>],
}

/// Sizes of `o_l`, `a_l` and their suffix sums `O_l`, `A_l` (index `l − 1`).
#[derive(Clone, Debug, PartialEq)]
pub struct Layers {
    pub o: Vec<usize>,
    pub a: Vec<usize>,
    pub big_o: Vec<usize>,
    pub big_a: Vec<usize>,
}

/// Outcome of the greedy-cover check on one set family.
#[derive(Clone, Debug, PartialEq)]
pub struct GreedyCheck {
    pub universe: usize,
    /// Smallest subfamily covering the universe, by exhaustive search.
    pub min_cover: usize,
    pub picks: usize,
    pub covered_greedy: usize,
    pub covered_half_greedy: usize,
    pub holds: bool,
}

pub fn suffix_sums(sizes: &[usize]) -> Vec<usize> {
    let mut out = vec![0; sizes.len()];
    let mut acc = 0;
    for i in (0..sizes.len()).rev() {
        acc += sizes[i];
        out[i] = acc;
    }
    out
}

/// `(Σ_l A_l (r_l − r_{l−1}), Σ_l |a_l| r_l)` with `r_0 = 0`.
pub fn abel_sides(a: &[usize], radii: &[f64]) -> (f64, f64) {
    let big_a = suffix_sums(a);
    let mut lhs = 0.0;
    let mut prev = 0.0;
    for (al, r) in big_a.iter().zip(radii) {
        lhs += *al as f64 * (r - prev);
        prev = *r;
    }
    let rhs = a.iter().zip(radii).map(|(x, r)| *x as f64 * r).sum();
    (lhs, rhs)
}

/// Squared cell diameters `d·t_l²`, one per level.
pub fn grid_radii(grids: &Grids) -> Vec<f64> {
    (1..=grids.levels).map(|l| grids.dim as f64 * grids.unit(l).powi(2)).collect()
}

impl<'a> TheoryOracle<'a> {
    pub fn new(images: &'a [Vec<f64>]) -> Self {
        Self { images }
    }

    pub fn dataset(&self) -> Dataset {
        Dataset::from_rows(self.images.iter().cloned()).expect("rectangular")
    }

    /// Optimal centers of a tiny instance.
    pub fn s_opt(&self, k: usize) -> Result<Dataset> {
        Ok(brute_force_kmeans(&self.dataset(), k)?.0.points().clone())
    }

    /// `|o_l|`: points whose squared distance to `s_opt` lies in
    /// `[r_l, r_{l+1})`; the first layer also takes `[0, r_1)` and the last
    /// everything beyond `r_L`.
    pub fn o_sizes(&self, s_opt: &Dataset, radii: &[f64]) -> Vec<usize> {
        let mut o = vec![0; radii.len()];
        for p in self.images {
            let (_, z) = nearest(p, s_opt);
            let l = radii.iter().rposition(|r| z >= *r).unwrap_or(0);
            o[l] += 1;
        }
        o
    }

    /// `|a_l|`: points first covered at level `l` by a pick of the proxy
    /// construction.
    pub fn a_sizes(&self, grids: &Grids, states: &[LevelState]) -> Vec<usize> {
        let picked: Vec<BTreeSet<&GridPoint>> = states.iter().map(|s| s.picks.iter().map(|p| &p.point).collect()).collect();
        let mut a = vec![0; states.len()];
        for p in self.images {
            if let Some(i) = states.iter().position(|s| picked[s.level as usize - 1].contains(&grids.floor(p, s.level))) {
                a[i] += 1;
            }
        }
        a
    }

    pub fn layers(&self, s_opt: &Dataset, radii: &[f64], grids: &Grids, states: &[LevelState]) -> Layers {
        let o = self.o_sizes(s_opt, radii);
        let a = self.a_sizes(grids, states);
        Layers {
            big_o: suffix_sums(&o),
            big_a: suffix_sums(&a),
            o,
            a,
        }
    }

    /// Per level, the number of points in each grid point not yet claimed by
    /// the maximal set of the previous level.
    pub fn shadow_counts(&self, grids: &Grids, states: &[LevelState]) -> Vec<BTreeMap<GridPoint, f64>> {
        let mut out = Vec::with_capacity(states.len());
        for (i, s) in states.iter().enumerate() {
            let l = s.level;
            let prev = if i == 0 { None } else { Some(&states[i - 1].maximal) };
            let mut m: BTreeMap<GridPoint, f64> = BTreeMap::new();
            for p in self.images {
                let claimed = prev.is_some_and(|set| (1..l).any(|j| set.contains(&grids.floor(p, j))));
                if !claimed {
                    *m.entry(grids.floor(p, l)).or_insert(0.0) += 1.0;
                }
            }
            out.push(m);
        }
        out
    }

    /// Exact heavy sets from true cell counts (root heavy, levels
    /// `1..=L−2` marked, level `L−1` light).
    pub fn heavy_sets(&self, opt_guess: f64, k: usize, beta: f64, params: &MarkerParams) -> Vec<BTreeSet<CellId>> {
        let levels = params.levels;
        let mut heavy = vec![BTreeSet::new(); levels as usize];
        heavy[0].insert(CellId::root(params.dim));
        for l in 1..levels.saturating_sub(1) {
            let mut counts: BTreeMap<CellId, usize> = BTreeMap::new();
            for p in self.images {
                *counts.entry(cell_of(p, l)).or_insert(0) += 1;
            }
            let thr = params.base_threshold(l, opt_guess, k, beta);
            let set: BTreeSet<CellId> = counts.into_iter().filter(|(c, n)| *n as f64 >= thr && heavy[l as usize - 1].contains(&c.parent())).map(|(c, _)| c).collect();
            heavy[l as usize] = set;
        }
        heavy
    }

    /// Transition level of every point: the first level whose cell is light.
    pub fn transition_levels(&self, opt_guess: f64, k: usize, beta: f64, params: &MarkerParams) -> Vec<u32> {
        let heavy = self.heavy_sets(opt_guess, k, beta, params);
        self.images
            .iter()
            .map(|p| (1..params.levels).find(|l| !heavy[*l as usize].contains(&cell_of(p, *l))).unwrap_or(params.levels))
            .collect()
    }

    /// `|D_l|` for `l = 0..=L`.
    pub fn d_sizes(&self, opt_guess: f64, k: usize, beta: f64, params: &MarkerParams) -> Vec<usize> {
        let mut sizes = vec![0; params.levels as usize + 1];
        for l in self.transition_levels(opt_guess, k, beta, params) {
            sizes[l as usize] += 1;
        }
        sizes
    }
}

fn mask(set: &BTreeSet<usize>) -> u32 {
    set.iter().fold(0, |m, x| m | (1 << x))
}

/// Size of the smallest subfamily covering the union, by breadth-first
/// search over covered subsets (universe of at most 20 elements).
pub fn min_cover_size(sets: &[BTreeSet<usize>]) -> usize {
    let masks: Vec<u32> = sets.iter().map(mask).collect();
    let full = masks.iter().fold(0, |a, b| a | b);
    assert!(full < (1 << 20), "universe too large for exhaustive search");
    let mut dist = vec![u8::MAX; 1 << 20];
    dist[0] = 0;
    let mut frontier = vec![0u32];
    let mut depth = 0;
    while dist[full as usize] == u8::MAX {
        depth += 1;
        let mut next = Vec::new();
        for m in &frontier {
            for s in &masks {
                let t = (m | s) as usize;
                if dist[t] == u8::MAX {
                    dist[t] = depth;
                    next.push(t as u32);
                }
            }
        }
        frontier = next;
    }
    dist[full as usize] as usize
}

/// Greedy with the largest marginal gain each step, and an adversarial
/// variant that takes the smallest gain still at least half the largest.
pub fn greedy_cover_check(sets: &[BTreeSet<usize>], alpha: f64) -> GreedyCheck {
    assert!(sets.len() <= 64);
    let universe: BTreeSet<usize> = sets.iter().flatten().copied().collect();
    let min_cover = min_cover_size(sets);
    let picks = pick_count(min_cover, alpha);
    let run = |half: bool| {
        let mut covered: BTreeSet<usize> = BTreeSet::new();
        for _ in 0..picks {
            let gains: Vec<usize> = sets.iter().map(|s| s.difference(&covered).count()).collect();
            let best = *gains.iter().max().unwrap_or(&0);
            if best == 0 {
                break;
            }
            let pick = if half {
                (0..sets.len()).filter(|i| 2 * gains[*i] >= best).min_by_key(|i| gains[*i]).unwrap()
            } else {
                (0..sets.len()).find(|i| gains[*i] == best).unwrap()
            };
            covered.extend(sets[pick].iter().copied());
        }
        covered.len()
    };
    let covered_greedy = run(false);
    let covered_half_greedy = run(true);
    let need = (1.0 - alpha) * universe.len() as f64;
    GreedyCheck {
        universe: universe.len(),
        min_cover,
        picks,
        covered_greedy,
        covered_half_greedy,
        holds: covered_greedy as f64 >= need && covered_half_greedy as f64 >= need,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_data_gives_zero_identities() {
        let images: Vec<Vec<f64>> = Vec::new();
        let o = TheoryOracle::new(&images);
        let s = Dataset::from_rows(vec![vec![0.0, 0.0]]).unwrap();
        assert_eq!(o.o_sizes(&s, &[0.1, 0.2]), [0, 0]);
        assert_eq!(abel_sides(&[0, 0], &[0.1, 0.2]), (0.0, 0.0));
    }

    #[test]
    fn single_cluster_at_its_center_is_layer_one() {
        let images = vec![vec![0.2, 0.2]; 5];
        let o = TheoryOracle::new(&images);
        let s = o.s_opt(1).unwrap();
        assert_eq!(o.o_sizes(&s, &[0.01, 0.1, 1.0]), [5, 0, 0]);
    }

    #[test]
    fn min_cover_examples() {
        let sets: Vec<BTreeSet<usize>> = vec![[0, 1, 2].into(), [2, 3].into(), [3, 4, 5].into(), [0, 5].into(), [1, 4].into()];
        assert_eq!(min_cover_size(&sets), 2);
        let c = greedy_cover_check(&sets, 0.1);
        assert_eq!(c.universe, 6);
        assert!(c.holds);
    }

    #[test]
    fn suffix_sums_and_abel() {
        assert_eq!(suffix_sums(&[1, 2, 3]), [6, 5, 3]);
        let (l, r) = abel_sides(&[1, 2, 3], &[1.0, 2.0, 4.0]);
        assert_eq!(l, r);
        assert_eq!(r, 1.0 + 4.0 + 12.0);
    }
}
