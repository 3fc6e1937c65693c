//! Nested flooring grids `G_1 ⊂ … ⊂ G_L` over the box `[−1, 1]^d`.
//!
//! Level `l` has unit `t_l = 2^{l−L+1}/(α√d)`, so each level doubles the
//! previous unit and flooring is consistent across levels:
//! `coarsen(floor(p, l), m) = floor(p, m)`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::freq::value::{bits_for, Value, ValueReader, ValueWriter};

/// `t_l = 2^{l−L+1}/(α√d)`.
pub fn grid_unit(l: u32, levels: u32, alpha: f64, d: usize) -> f64 {
    libm::ldexp(1.0, l as i32 - levels as i32 + 1) / (alpha * libm::sqrt(d as f64))
}

/// A grid node: level and integer coordinates (decoding to `t_l · coords`).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GridPoint {
    pub level: u32,
    pub coords: Vec<i64>,
}

/// One level of the hierarchy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub level: u32,
    pub levels: u32,
    pub alpha: f64,
    pub dim: usize,
}

impl GridSpec {
    pub fn unit(&self) -> f64 {
        grid_unit(self.level, self.levels, self.alpha, self.dim)
    }
}

/// Coordinate-wise floor onto the grid of `spec`.
pub fn floor_to_grid(p: &[f64], spec: &GridSpec) -> GridPoint {
    let t = spec.unit();
    GridPoint {
        level: spec.level,
        coords: p.iter().map(|x| libm::floor(x / t) as i64).collect(),
    }
}

/// Re-floor `g` into the coarser level `to_level`.
///
/// # Panics
/// If `to_level` is finer than `g`.
pub fn coarsen(g: &GridPoint, to_level: u32) -> GridPoint {
    assert!(to_level >= g.level, "can only coarsen to a coarser level");
    let shift = to_level - g.level;
    GridPoint {
        level: to_level,
        coords: g.coords.iter().map(|c| c >> shift).collect(),
    }
}

/// The whole hierarchy for fixed `L`, `α` and `d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grids {
    pub levels: u32,
    pub alpha: f64,
    pub dim: usize,
}

impl Grids {
    pub fn new(levels: u32, alpha: f64, dim: usize) -> Self {
        Self { levels, alpha, dim }
    }

    pub fn spec(&self, l: u32) -> GridSpec {
        GridSpec {
            level: l,
            levels: self.levels,
            alpha: self.alpha,
            dim: self.dim,
        }
    }

    pub fn unit(&self, l: u32) -> f64 {
        self.spec(l).unit()
    }

    pub fn floor(&self, p: &[f64], l: u32) -> GridPoint {
        floor_to_grid(p, &self.spec(l))
    }

    pub fn decode(&self, g: &GridPoint) -> Vec<f64> {
        let t = self.unit(g.level);
        g.coords.iter().map(|c| *c as f64 * t).collect()
    }

    /// Offset that maps the coordinates of `[−1, 1]^d` at level `l` to
    /// nonnegative integers.
    fn offset(&self, l: u32) -> i64 {
        libm::ceil(1.0 / self.unit(l)) as i64 + 1
    }

    fn coord_bits(&self, l: u32) -> u32 {
        bits_for(2 * self.offset(l) as u64 + 1)
    }

    /// Width of the histogram universe at level `l`.
    pub fn value_bits(&self, l: u32) -> u32 {
        self.coord_bits(l) * self.dim as u32
    }

    /// Histogram key; coordinates outside the box are clamped to its edge.
    pub fn encode(&self, g: &GridPoint) -> Value {
        let (o, b) = (self.offset(g.level), self.coord_bits(g.level));
        let mut w = ValueWriter::new(self.value_bits(g.level));
        for c in &g.coords {
            w.push((c + o).clamp(0, 2 * o) as u64, b);
        }
        w.finish()
    }

    pub fn decode_value(&self, v: &Value, l: u32) -> GridPoint {
        let (o, b) = (self.offset(l), self.coord_bits(l));
        let mut r = ValueReader::new(v);
        GridPoint {
            level: l,
            coords: (0..self.dim).map(|_| r.take(b) as i64 - o).collect(),
        }
    }
}

/// Text key `"l:c1,c2,…"`.
pub fn grid_key(g: &GridPoint) -> String {
    let mut s = format!("{}:", g.level);
    for (i, c) in g.coords.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str(&format!("{c}"));
    }
    s
}
