//! Dyadic cells on `[0, 1)^d` and heavy/light marking.
//!
//! A level-`l` cell is a cube of side `2^{−l}` with integer coordinates
//! `j ∈ {0, …, 2^l − 1}^d`. Labels are sparse: only cells that show up in a
//! histogram can be heavy, every other cell is light.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freq::{SuccinctHistogram, Value, ValueReader, ValueWriter};
use crate::geometry::squared_distance;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellId {
    pub level: u32,
    pub coords: Vec<u64>,
}

impl CellId {
    pub fn root(dim: usize) -> Self {
        Self {
            level: 0,
            coords: alloc::vec![0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn side(&self) -> f64 {
        cell_side(self.level)
    }

    pub fn parent(&self) -> Self {
        ancestor(self, 1)
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        let t = self.side();
        p.iter().zip(&self.coords).all(|(x, j)| {
            let lo = *j as f64 * t;
            *x >= lo && *x < lo + t
        })
    }

    /// Squared ℓ2 distance from `p` to the closed cell box.
    pub fn squared_distance_to(&self, p: &[f64]) -> f64 {
        let t = self.side();
        p.iter()
            .zip(&self.coords)
            .map(|(x, j)| {
                let lo = *j as f64 * t;
                let gap = (lo - x).max(x - (lo + t)).max(0.0);
                gap * gap
            })
            .sum()
    }

    /// Text key `"l:j1,j2,…"`.
    pub fn key(&self) -> String {
        let mut s = format!("{}:", self.level);
        for (i, j) in self.coords.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            s.push_str(&format!("{j}"));
        }
        s
    }
}

/// `t_l = 2^{−l}`.
pub fn cell_side(l: u32) -> f64 {
    libm::ldexp(1.0, -(l as i32))
}

/// # Panics
/// If `p` is outside `[0, 1)^d`.
pub fn cell_of(p: &[f64], l: u32) -> CellId {
    let scale = libm::ldexp(1.0, l as i32);
    CellId {
        level: l,
        coords: p
            .iter()
            .map(|x| {
                assert!((0.0..1.0).contains(x), "point outside the unit box");
                libm::floor(x * scale) as u64
            })
            .collect(),
    }
}

/// `Anc_i`: the ancestor `i` levels up, clamped at the root.
pub fn ancestor(c: &CellId, i: u32) -> CellId {
    let i = i.min(c.level);
    CellId {
        level: c.level - i,
        coords: c.coords.iter().map(|j| j >> i).collect(),
    }
}

/// Levels between a cell and its `Anc*`: `⌈1.5·lg d⌉`.
pub fn anc_star_shift(d: usize) -> u32 {
    libm::ceil(1.5 * libm::log2(d.max(1) as f64) - 1e-12).max(0.0) as u32
}

pub fn anc_star(c: &CellId) -> CellId {
    ancestor(c, anc_star_shift(c.dim()))
}

/// `o(C)`.
pub fn cell_center(c: &CellId) -> Vec<f64> {
    let t = c.side();
    c.coords.iter().map(|j| (*j as f64 + 0.5) * t).collect()
}

fn coord_bits(l: u32) -> u32 {
    l.max(1)
}

/// Histogram key of a cell; `d·max(l, 1)` bits.
pub fn cell_value_bits(l: u32, d: usize) -> u32 {
    coord_bits(l) * d as u32
}

pub fn encode_cell(c: &CellId) -> Value {
    let b = coord_bits(c.level);
    let mut w = ValueWriter::new(cell_value_bits(c.level, c.dim()));
    for j in &c.coords {
        w.push(*j, b);
    }
    w.finish()
}

pub fn decode_cell(v: &Value, l: u32, d: usize) -> CellId {
    let b = coord_bits(l);
    let mut r = ValueReader::new(v);
    CellId {
        level: l,
        coords: (0..d).map(|_| r.take(b)).collect(),
    }
}

/// Every level-`l` cell whose box lies within ℓ2 distance `radius` of `p`.
pub fn cells_near(p: &[f64], l: u32, radius: f64) -> Vec<CellId> {
    let home = cell_of(p, l);
    let t = cell_side(l);
    let top = (1u64 << l) - 1;
    // per coordinate: candidate indices and their squared gap
    let options: Vec<Vec<(u64, f64)>> = p
        .iter()
        .zip(&home.coords)
        .map(|(x, j)| {
            let mut o = alloc::vec![(*j, 0.0)];
            let mut i = *j;
            while i > 0 && x - i as f64 * t <= radius {
                let gap = x - i as f64 * t;
                i -= 1;
                o.push((i, gap * gap));
            }
            let mut i = *j;
            while i < top && (i + 1) as f64 * t - x <= radius {
                let gap = (i + 1) as f64 * t - x;
                i += 1;
                o.push((i, gap * gap));
            }
            o
        })
        .collect();
    let r2 = radius * radius;
    let mut out = Vec::new();
    let mut idx = alloc::vec![0usize; p.len()];
    loop {
        let gap: f64 = idx.iter().zip(&options).map(|(i, o)| o[*i].1).sum();
        if gap <= r2 {
            out.push(CellId {
                level: l,
                coords: idx.iter().zip(&options).map(|(i, o)| o[*i].0).collect(),
            });
        }
        let mut e = 0;
        loop {
            if e == idx.len() {
                return out;
            }
            idx[e] += 1;
            if idx[e] < options[e].len() {
                break;
            }
            idx[e] = 0;
            e += 1;
        }
    }
}

/// Tunables of the heavy-cell marker.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkerParams {
    /// `L`: levels run `0..=L`.
    pub levels: u32,
    pub dim: usize,
    /// Exponent of `d` in the threshold numerator.
    pub d_power: f64,
}

impl MarkerParams {
    /// `β·d^p·OPT/(t_l²·k·L·d)` without the histogram error term.
    pub fn base_threshold(&self, l: u32, opt_guess: f64, k: usize, beta: f64) -> f64 {
        let d = self.dim as f64;
        let t = cell_side(l);
        beta * libm::pow(d, self.d_power) * opt_guess / (t * t * k as f64 * self.levels as f64 * d)
    }
}

/// Heavy sets per level; light is the complement, medium is light with a
/// heavy parent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellLabels {
    pub opt_guess: f64,
    pub levels: u32,
    pub dim: usize,
    heavy: Vec<BTreeSet<CellId>>,
    thresholds: Vec<f64>,
}

impl CellLabels {
    pub fn heavy(&self, l: u32) -> &BTreeSet<CellId> {
        &self.heavy[l as usize]
    }

    pub fn is_heavy(&self, c: &CellId) -> bool {
        self.heavy.get(c.level as usize).is_some_and(|h| h.contains(c))
    }

    pub fn is_medium(&self, c: &CellId) -> bool {
        c.level > 0 && !self.is_heavy(c) && self.is_heavy(&c.parent())
    }

    /// Threshold used at level `l` (infinite where nothing can be heavy).
    pub fn threshold(&self, l: u32) -> f64 {
        self.thresholds[l as usize]
    }

    pub fn heavy_counts(&self) -> Vec<usize> {
        self.heavy.iter().map(BTreeSet::len).collect()
    }

    /// Levels whose heavy count exceeds `cap`.
    pub fn over_cap(&self, cap: usize) -> Vec<u32> {
        (0..=self.levels).filter(|l| self.heavy[*l as usize].len() > cap).collect()
    }

    /// First level where the cell containing `p` is light.
    pub fn transition_level(&self, p: &[f64]) -> u32 {
        (1..=self.levels)
            .find(|l| !self.is_heavy(&cell_of(p, *l)))
            .unwrap_or(self.levels)
    }

    /// Sorted `Anc*` cells of the level-`l` heavy set.
    pub fn heavy_ancestors(&self, l: u32) -> Vec<CellId> {
        let set: BTreeSet<CellId> = self.heavy(l).iter().map(anc_star).collect();
        set.into_iter().collect()
    }
}

/// Default cap on heavy cells per level: `c·k·L/β`.
pub fn heavy_cap(k: usize, levels: u32, beta: f64, constant: f64) -> usize {
    libm::ceil(constant * k as f64 * levels as f64 / beta) as usize
}

/// Heavy iff `CH^l(C) ≥ threshold_l + CH^l_E` and the parent is heavy.
///
/// `ch[l]` is the level-`l` histogram for `l = 1..L−1`; index 0 is ignored.
pub fn mark_heavy_light(ch: &[Option<SuccinctHistogram>], opt_guess: f64, k: usize, beta: f64, params: &MarkerParams) -> Result<CellLabels> {
    let levels = params.levels;
    if levels < 2 {
        return Err(Error::InvalidParameter("marking needs at least two levels"));
    }
    let mut heavy = alloc::vec![BTreeSet::new(); levels as usize + 1];
    let mut thresholds = alloc::vec![f64::INFINITY; levels as usize + 1];
    heavy[0].insert(CellId::root(params.dim));
    thresholds[0] = f64::NEG_INFINITY;
    for l in 1..levels - 1 {
        let h = ch.get(l as usize).and_then(Option::as_ref).ok_or(Error::MissingLevel(l as usize))?;
        let threshold = params.base_threshold(l, opt_guess, k, beta) + h.error_bound;
        thresholds[l as usize] = threshold;
        let (above, below) = heavy.split_at_mut(l as usize);
        let parents = &above[l as usize - 1];
        for (v, est) in h.entries() {
            if *est < threshold {
                continue;
            }
            let c = decode_cell(v, l, params.dim);
            if parents.contains(&c.parent()) {
                below[0].insert(c);
            }
        }
    }
    Ok(CellLabels {
        opt_guess,
        levels,
        dim: params.dim,
        heavy,
        thresholds,
    })
}

/// Minimum squared distance from `p` to any of `anchors`.
pub fn nearest_anchor_sq(p: &[f64], anchors: &[Vec<f64>]) -> f64 {
    anchors.iter().map(|a| squared_distance(p, a)).fold(f64::INFINITY, f64::min)
}
