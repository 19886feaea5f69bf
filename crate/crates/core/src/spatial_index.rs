//! Uniform-grid neighbour index on the torus.
//!
//! Answers are exact: every query is checked against minimum-image distances,
//! and equal distances are ordered by point id.

use crate::error::{Error, Result};
use crate::geometry::{PointConfiguration, Position, TorusGeometry, MAX_DIM};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    pub distance: f64,
}

#[derive(Debug, Clone)]
pub struct NeighborIndex {
    geometry: TorusGeometry,
    positions: Vec<Position>,
    cells_per_axis: [usize; MAX_DIM],
    cell_size: f64,
    cell_start: Vec<usize>,
    entries: Vec<usize>,
}

/// Default grid spacing: the larger of the mean inter-point spacing and the
/// interaction diameter of the functional being evaluated.
pub fn default_cell_size(geometry: &TorusGeometry, n_points: usize, interaction: f64) -> f64 {
    let density = n_points.max(1) as f64 / geometry.volume();
    let spacing = density.powf(-1.0 / geometry.dimension() as f64);
    spacing.max(interaction).max(f64::MIN_POSITIVE)
}

impl NeighborIndex {
    pub fn build(config: &PointConfiguration, target_cell_size: f64) -> Result<Self> {
        let positions: Vec<Position> = config.points().iter().map(|p| p.position).collect();
        Self::from_positions(*config.geometry(), positions, target_cell_size)
    }

    /// Builds from raw positions, which must already lie in the fundamental domain.
    pub fn from_positions(geometry: TorusGeometry, positions: Vec<Position>, target_cell_size: f64) -> Result<Self> {
        if !(target_cell_size > 0.0) {
            return Err(Error::param(format!("cell size must be positive, got {target_cell_size}")));
        }
        let l = geometry.side_length();
        let per_axis = ((l / target_cell_size).floor() as usize).clamp(1, 1 << 20);
        let mut cells_per_axis = [1; MAX_DIM];
        for c in cells_per_axis.iter_mut().take(geometry.dimension()) {
            *c = per_axis;
        }
        let n_cells: usize = cells_per_axis.iter().product();
        let mut index = Self {
            geometry,
            positions,
            cells_per_axis,
            cell_size: l / per_axis as f64,
            cell_start: vec![0; n_cells + 1],
            entries: Vec::new(),
        };
        let cell_of: Vec<usize> = index.positions.iter().map(|p| index.flat_cell(&index.cell_coords(p))).collect();
        for &c in &cell_of {
            index.cell_start[c + 1] += 1;
        }
        for c in 0..n_cells {
            index.cell_start[c + 1] += index.cell_start[c];
        }
        let mut fill = index.cell_start.clone();
        index.entries = vec![0; cell_of.len()];
        for (id, &c) in cell_of.iter().enumerate() {
            index.entries[fill[c]] = id;
            fill[c] += 1;
        }
        Ok(index)
    }

    pub fn geometry(&self) -> &TorusGeometry {
        &self.geometry
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn n_cells(&self) -> usize {
        self.cell_start.len() - 1
    }

    pub fn position(&self, id: usize) -> &Position {
        &self.positions[id]
    }

    /// Ids stored in each cell; used to check the partition invariant.
    pub fn cell_members(&self, cell: usize) -> &[usize] {
        &self.entries[self.cell_start[cell]..self.cell_start[cell + 1]]
    }

    fn cell_coords(&self, p: &Position) -> [usize; MAX_DIM] {
        let half = self.geometry.half_side();
        let mut c = [0; MAX_DIM];
        for i in 0..self.geometry.dimension() {
            let k = ((p[i] + half) / self.cell_size).floor();
            c[i] = (k.max(0.0) as usize).min(self.cells_per_axis[i] - 1);
        }
        c
    }

    fn flat_cell(&self, c: &[usize; MAX_DIM]) -> usize {
        (c[2] * self.cells_per_axis[1] + c[1]) * self.cells_per_axis[0] + c[0]
    }

    /// Visits every point in cells whose per-axis index offset from `x`'s
    /// cell is at most `reach`. Returns true if the whole torus was covered.
    fn visit_block<F: FnMut(usize)>(&self, x: &Position, reach: usize, mut f: F) -> bool {
        let center = self.cell_coords(x);
        let mut ranges: [(i64, i64); MAX_DIM] = [(0, 0); MAX_DIM];
        let mut full = true;
        for i in 0..MAX_DIM {
            let n = self.cells_per_axis[i];
            if 2 * reach + 1 >= n {
                ranges[i] = (0, n as i64 - 1);
            } else {
                ranges[i] = (center[i] as i64 - reach as i64, center[i] as i64 + reach as i64);
                full = false;
            }
        }
        for a2 in ranges[2].0..=ranges[2].1 {
            let c2 = a2.rem_euclid(self.cells_per_axis[2] as i64) as usize;
            for a1 in ranges[1].0..=ranges[1].1 {
                let c1 = a1.rem_euclid(self.cells_per_axis[1] as i64) as usize;
                for a0 in ranges[0].0..=ranges[0].1 {
                    let c0 = a0.rem_euclid(self.cells_per_axis[0] as i64) as usize;
                    let cell = self.flat_cell(&[c0, c1, c2]);
                    for &id in &self.entries[self.cell_start[cell]..self.cell_start[cell + 1]] {
                        f(id);
                    }
                }
            }
        }
        full
    }

    /// Calls `f(id, distance)` for every point at torus distance `< r`, in no
    /// particular order.
    pub fn for_each_within<F: FnMut(usize, f64)>(&self, x: &Position, r: f64, mut f: F) {
        if !(r > 0.0) || self.positions.is_empty() {
            return;
        }
        let reach = (r / self.cell_size).ceil() as usize;
        let r2 = r * r;
        self.visit_block(x, reach, |id| {
            let d2 = self.geometry.distance_squared(x, &self.positions[id]);
            if d2 < r2 {
                f(id, d2.sqrt());
            }
        });
    }

    /// Points with torus distance `< r`, sorted by (distance, id).
    pub fn within(&self, x: &Position, r: f64) -> Vec<Neighbor> {
        let mut out = Vec::new();
        self.for_each_within(x, r, |id, distance| out.push(Neighbor { id, distance }));
        sort_neighbors(&mut out);
        out
    }

    /// The `k` nearest points to `x` (optionally skipping `exclude`), sorted by
    /// (distance, id).
    pub fn k_nearest(&self, x: &Position, k: usize, exclude: Option<usize>) -> Result<Vec<Neighbor>> {
        if k == 0 {
            return Err(Error::param("k must be at least 1"));
        }
        let available = self.positions.len() - usize::from(exclude.is_some_and(|e| e < self.positions.len()));
        if available < k {
            return Err(Error::InsufficientPoints { needed: k, available });
        }
        let mut cand: Vec<(f64, usize)> = Vec::new();
        let mut reach = 1usize;
        loop {
            cand.clear();
            let full = self.visit_block(x, reach, |id| {
                if Some(id) != exclude {
                    cand.push((self.geometry.distance_squared(x, &self.positions[id]), id));
                }
            });
            if cand.len() >= k {
                cand.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let kth = cand[k - 1].0.sqrt();
                // Every point closer than reach·cell_size lies inside the block.
                if full || kth < reach as f64 * self.cell_size {
                    let mut out: Vec<Neighbor> =
                        cand[..k].iter().map(|&(d2, id)| Neighbor { id, distance: d2.sqrt() }).collect();
                    sort_neighbors(&mut out);
                    return Ok(out);
                }
            }
            reach += 1;
        }
    }
}

pub(crate) fn sort_neighbors(v: &mut [Neighbor]) {
    v.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.id.cmp(&b.id)));
}
