//! Per-endpoint compactified coordinates and the refinement grids built on them.
//!
//! Each side of the reference point `x0` gets a distance coordinate `d` with
//! `d(x0) = 1` and `d -> 0` at the endpoint:
//!
//! * finite endpoint `e`:   `d = (x - e) / (x0 - e)`
//! * infinite endpoint:     `d = 1 / (1 + |x - x0| / L)`
//!
//! Geometric sequences in `d` therefore approach a finite endpoint
//! geometrically and an infinite one at a geometric rate in `x`.

use crate::diffusion::{IntervalSpec, Side};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SideMap {
    pub side: Side,
    pub endpoint: f64,
    pub x0: f64,
    pub length_scale: f64,
}

impl SideMap {
    pub fn new(interval: &IntervalSpec, x0: f64, side: Side, length_scale: f64) -> Self {
        Self {
            side,
            endpoint: interval.endpoint(side),
            x0,
            length_scale,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.endpoint.is_finite()
    }

    pub fn distance(&self, x: f64) -> f64 {
        if self.is_finite() {
            (x - self.endpoint) / (self.x0 - self.endpoint)
        } else {
            let t = self.side.direction() * (x - self.x0) / self.length_scale;
            if t >= 0.0 {
                1.0 / (1.0 + t)
            } else {
                1.0 - t
            }
        }
    }

    pub fn point(&self, d: f64) -> f64 {
        if self.is_finite() {
            self.endpoint + (self.x0 - self.endpoint) * d
        } else if d <= 1.0 {
            self.x0 + self.side.direction() * self.length_scale * (1.0 / d - 1.0)
        } else {
            self.x0 - self.side.direction() * self.length_scale * (d - 1.0)
        }
    }

    /// Geometric truncation sequence from `from` toward the endpoint, ending
    /// at distance `gap`; `count + 1` points, the first being `from` itself.
    pub fn truncation_points(&self, from: f64, count: usize, gap: f64) -> Vec<f64> {
        let d0 = self.distance(from);
        let end = if d0 > gap { gap } else { d0 * gap };
        let mut pts = Vec::with_capacity(count + 1);
        pts.push(from);
        for k in 1..=count {
            let d = d0 * (end / d0).powf(k as f64 / count as f64);
            pts.push(self.point(d));
        }
        pts
    }
}

/// Parameters of the solver grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Nodes on each side of the reference point (total `2n + 1`).
    pub nodes_per_side: usize,
    /// Smallest compactified distance to a finite endpoint.
    pub finite_gap: f64,
    /// Smallest compactified distance to an infinite endpoint.
    pub infinite_gap: f64,
    /// Length scale `L` of the compactification at infinite endpoints.
    pub length_scale: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            nodes_per_side: 1000,
            finite_gap: 1e-10,
            infinite_gap: 1e-2,
            length_scale: 1.0,
        }
    }
}

impl GridSpec {
    pub fn gap(&self, map: &SideMap) -> f64 {
        if map.is_finite() {
            self.finite_gap
        } else {
            self.infinite_gap
        }
    }

    pub fn side_map(&self, interval: &IntervalSpec, x0: f64, side: Side) -> SideMap {
        SideMap::new(interval, x0, side, self.length_scale)
    }

    /// Strictly increasing interior grid containing `x0`.
    pub fn build(&self, interval: &IntervalSpec, x0: f64) -> Vec<f64> {
        let n = self.nodes_per_side.max(2);
        let side_nodes = |side: Side| -> Vec<f64> {
            let map = self.side_map(interval, x0, side);
            let gap = self.gap(&map);
            (1..=n)
                .map(|k| map.point(gap.powf(k as f64 / n as f64)))
                .filter(|x| interval.contains_interior(*x))
                .collect::<Vec<_>>()
        };
        let mut left = side_nodes(Side::Alpha);
        let right = side_nodes(Side::Beta);
        left.reverse();
        let mut grid = left;
        grid.push(x0);
        grid.extend(right);
        grid.dedup_by(|b, a| *b <= *a);
        grid
    }
}
