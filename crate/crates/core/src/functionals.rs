//! Stabilizing score functions `ξ(x, σ)`.
//!
//! Each kind can be evaluated in two ways:
//!
//! * on the torus, through [`TorusEvaluator`], which is exact for the periodic
//!   extension of the configuration as long as the torus is larger than the
//!   functional's interaction range;
//! * on a re-centered [`LocalPatch`] via [`eval_patch`] and the per-kind
//!   `eval_*` functions, treating the patch as the whole configuration.
//!
//! Sequential models (packing, birth-growth) order arrivals by time mark, then
//! lexicographic position, then point id.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{lex_cmp, norm, LocalPatch, PointConfiguration, Position, MAX_DIM};
use crate::numeric::unit_ball_volume;
use crate::spatial_index::{default_cell_size, NeighborIndex};

fn one() -> f64 {
    1.0
}

fn default_false() -> bool {
    false
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FunctionalSpec {
    /// Random sequential packing of balls of volume `ball_volume`.
    Packing {
        #[serde(default = "one")]
        ball_volume: f64,
    },
    /// Seeds with initial radius in `(0, initial_radius_bound]` growing at
    /// `speed`, capped at `radius_cutoff`. The seed radius is read from the
    /// aux mark as `initial_radius_bound * (1 - aux / mark_bound)`.
    BirthGrowth {
        initial_radius_bound: f64,
        speed: f64,
        radius_cutoff: f64,
        #[serde(default = "one")]
        mark_bound: f64,
    },
    /// Covered volume of the Voronoi cell, by grid quadrature of spacing
    /// `resolution`. Grain radii are the aux marks.
    GermGrainVolume { grain_radius_bound: f64, resolution: f64 },
    /// 1 iff the nearest neighbour is closer than `threshold`.
    NnThreshold { threshold: f64 },
    /// 1 iff the degree in the k-nearest-neighbour graph equals `target_degree`.
    KnnDegree {
        k: usize,
        target_degree: usize,
        #[serde(default = "default_false")]
        directed: bool,
    },
    /// `ξ ≡ value`; a test functional with stabilization radius zero.
    Constant { value: f64 },
}

/// A deterministic radius bounding the pairwise interactions of a functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteractionRadius(pub f64);

impl FunctionalSpec {
    pub fn label(&self) -> &'static str {
        match self {
            FunctionalSpec::Packing { .. } => "packing",
            FunctionalSpec::BirthGrowth { .. } => "birth-growth",
            FunctionalSpec::GermGrainVolume { .. } => "germ-grain-volume",
            FunctionalSpec::NnThreshold { .. } => "nn-threshold",
            FunctionalSpec::KnnDegree { .. } => "knn-degree",
            FunctionalSpec::Constant { .. } => "constant",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::param(format!("{name} must be positive, got {v}")))
            }
        };
        match *self {
            FunctionalSpec::Packing { ball_volume } => pos("ball_volume", ball_volume),
            FunctionalSpec::BirthGrowth { initial_radius_bound, speed, radius_cutoff, mark_bound } => {
                pos("initial_radius_bound", initial_radius_bound)?;
                pos("mark_bound", mark_bound)?;
                if !(speed.is_finite() && speed >= 0.0) {
                    return Err(Error::param(format!("speed must be >= 0, got {speed}")));
                }
                if !(radius_cutoff.is_finite() && radius_cutoff >= initial_radius_bound) {
                    return Err(Error::param("radius_cutoff must be finite and >= initial_radius_bound"));
                }
                Ok(())
            }
            FunctionalSpec::GermGrainVolume { grain_radius_bound, resolution } => {
                pos("grain_radius_bound", grain_radius_bound)?;
                pos("resolution", resolution)
            }
            FunctionalSpec::NnThreshold { threshold } => pos("threshold", threshold),
            FunctionalSpec::KnnDegree { k, .. } => {
                if k >= 1 {
                    Ok(())
                } else {
                    Err(Error::param("k must be at least 1"))
                }
            }
            FunctionalSpec::Constant { value } => {
                if value.is_finite() {
                    Ok(())
                } else {
                    Err(Error::param("constant value must be finite"))
                }
            }
        }
    }

    /// Ball radius `r_d = (V/κ_d)^{1/d}` of the packing model.
    pub fn packing_radius(ball_volume: f64, d: usize) -> f64 {
        (ball_volume / unit_ball_volume(d)).powf(1.0 / d as f64)
    }

    /// Closed range of values `ξ` can take.
    pub fn value_range(&self, d: usize) -> (f64, f64) {
        match *self {
            FunctionalSpec::GermGrainVolume { grain_radius_bound, .. } => {
                (0.0, unit_ball_volume(d) * grain_radius_bound.powi(d as i32))
            }
            FunctionalSpec::Constant { value } => (value, value),
            _ => (0.0, 1.0),
        }
    }

    /// Largest distance at which two points interact directly. k-NN graphs
    /// have no deterministic range and report zero.
    pub fn interaction_radius(&self, d: usize) -> InteractionRadius {
        InteractionRadius(match *self {
            FunctionalSpec::Packing { ball_volume } => 2.0 * Self::packing_radius(ball_volume, d),
            FunctionalSpec::BirthGrowth { initial_radius_bound, radius_cutoff, .. } => {
                initial_radius_bound + radius_cutoff
            }
            FunctionalSpec::GermGrainVolume { grain_radius_bound, .. } => grain_radius_bound,
            FunctionalSpec::NnThreshold { threshold } => threshold,
            FunctionalSpec::KnnDegree { .. } | FunctionalSpec::Constant { .. } => 0.0,
        })
    }

    /// Checks that torus evaluation equals evaluation on the periodic extension.
    pub fn check_domain(&self, config: &PointConfiguration) -> Result<()> {
        let g = config.geometry();
        let range = self.interaction_radius(g.dimension()).0;
        if range > g.half_side() {
            return Err(Error::Certification {
                point: 0,
                reason: format!(
                    "interaction range {range} exceeds half the torus side {}",
                    g.half_side()
                ),
            });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Sequential acceptance (packing and birth-growth)

#[derive(Debug, Clone, Copy)]
struct Arrival {
    pos: Position,
    time: f64,
    seed_radius: f64,
    id: usize,
}

fn arrival_order(a: &Arrival, b: &Arrival) -> Ordering {
    a.time.total_cmp(&b.time).then(lex_cmp(&a.pos, &b.pos)).then(a.id.cmp(&b.id))
}

#[derive(Debug, Clone, Copy)]
enum SequentialRule {
    /// Rejected iff closer than `contact` to an accepted ball.
    Packing { contact: f64 },
    BirthGrowth { speed: f64, cutoff: f64 },
}

impl SequentialRule {
    fn from_spec(spec: &FunctionalSpec, d: usize) -> Option<Self> {
        match *spec {
            FunctionalSpec::Packing { ball_volume } => {
                Some(SequentialRule::Packing { contact: 2.0 * FunctionalSpec::packing_radius(ball_volume, d) })
            }
            FunctionalSpec::BirthGrowth { speed, radius_cutoff, .. } => {
                Some(SequentialRule::BirthGrowth { speed, cutoff: radius_cutoff })
            }
            _ => None,
        }
    }

    /// Whether accepted `earlier` blocks `later` at distance `dist`.
    #[inline]
    fn blocks(&self, later: &Arrival, earlier: &Arrival, dist: f64) -> bool {
        match *self {
            SequentialRule::Packing { contact } => dist < contact,
            SequentialRule::BirthGrowth { speed, cutoff } => {
                let grown = (earlier.seed_radius + speed * (later.time - earlier.time)).min(cutoff);
                dist <= later.seed_radius + grown
            }
        }
    }
}

fn seed_radius(spec: &FunctionalSpec, aux: f64) -> Result<f64> {
    match *spec {
        FunctionalSpec::BirthGrowth { initial_radius_bound, mark_bound, .. } => {
            if !(0.0..mark_bound).contains(&aux) {
                return Err(Error::Contract(format!("aux mark {aux} outside [0, {mark_bound})")));
            }
            Ok(initial_radius_bound * (1.0 - aux / mark_bound))
        }
        _ => Ok(0.0),
    }
}

/// Runs sequential acceptance on `arrivals` (any order) with brute-force
/// conflict checks; `dist` measures between two arrivals.
fn sequential_accept<F>(rule: SequentialRule, arrivals: &[Arrival], dist: F) -> Vec<bool>
where
    F: Fn(&Arrival, &Arrival) -> f64,
{
    let mut order: Vec<usize> = (0..arrivals.len()).collect();
    order.sort_by(|&a, &b| arrival_order(&arrivals[a], &arrivals[b]));
    let mut accepted = vec![false; arrivals.len()];
    let mut kept: Vec<usize> = Vec::new();
    for &i in &order {
        let a = &arrivals[i];
        let ok = kept.iter().all(|&j| !rule.blocks(a, &arrivals[j], dist(a, &arrivals[j])));
        if ok {
            accepted[i] = true;
            kept.push(i);
        }
    }
    accepted
}

fn patch_arrivals(patch: &LocalPatch, spec: &FunctionalSpec) -> Result<Vec<Arrival>> {
    patch
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            Ok(Arrival { pos: p.offset, time: p.time_mark, seed_radius: seed_radius(spec, p.aux_mark)?, id: i })
        })
        .collect()
}

fn require_origin(patch: &LocalPatch) -> Result<usize> {
    patch.origin().ok_or_else(|| Error::Contract("patch has no point at the origin".into()))
}

fn euclid(a: &Position, b: &Position) -> f64 {
    let mut s = 0.0;
    for i in 0..MAX_DIM {
        let d = a[i] - b[i];
        s += d * d;
    }
    s.sqrt()
}

/// Packing status of the ball at the origin when all patch balls arrive in
/// time order.
pub fn eval_packing(patch: &LocalPatch, spec: &FunctionalSpec) -> Result<f64> {
    let origin = require_origin(patch)?;
    let rule = match spec {
        FunctionalSpec::Packing { .. } => SequentialRule::from_spec(spec, patch.dimension).unwrap(),
        _ => return Err(Error::Contract("eval_packing needs a packing spec".into())),
    };
    let arrivals = patch_arrivals(patch, spec)?;
    let acc = sequential_accept(rule, &arrivals, |a, b| euclid(&a.pos, &b.pos));
    Ok(f64::from(u8::from(acc[origin])))
}

/// Acceptance of the seed at the origin in the capped birth-growth model.
pub fn eval_birth_growth(patch: &LocalPatch, spec: &FunctionalSpec) -> Result<f64> {
    let origin = require_origin(patch)?;
    let rule = match spec {
        FunctionalSpec::BirthGrowth { .. } => SequentialRule::from_spec(spec, patch.dimension).unwrap(),
        _ => return Err(Error::Contract("eval_birth_growth needs a birth-growth spec".into())),
    };
    let arrivals = patch_arrivals(patch, spec)?;
    let acc = sequential_accept(rule, &arrivals, |a, b| euclid(&a.pos, &b.pos));
    Ok(f64::from(u8::from(acc[origin])))
}

/// 1 iff some other patch point lies closer than the threshold.
pub fn eval_nn_threshold(patch: &LocalPatch, spec: &FunctionalSpec) -> Result<f64> {
    let t = match *spec {
        FunctionalSpec::NnThreshold { threshold } => threshold,
        _ => return Err(Error::Contract("eval_nn_threshold needs an nn-threshold spec".into())),
    };
    let origin = require_origin(patch)?;
    if patch.radius < t {
        return Err(Error::PatchTooSmall { radius: patch.radius, required: t });
    }
    let hit = patch.points.iter().enumerate().any(|(i, p)| i != origin && p.distance() < t);
    Ok(f64::from(u8::from(hit)))
}

// ---------------------------------------------------------------------------
// k-nearest-neighbour graphs

/// Direction sectors such that two directions in the same sector are less than
/// 60 degrees apart. If `y` and `z` share a sector and `|y| < |z|`, then
/// `|z - y| < |z|`, so only the k closest points of each sector can have the
/// origin among their k nearest neighbours.
fn sector(offset: &Position, d: usize) -> usize {
    match d {
        1 => usize::from(offset[0] >= 0.0),
        2 => {
            let a = offset[1].atan2(offset[0]) + std::f64::consts::PI;
            ((a / (std::f64::consts::PI / 3.0)).floor() as usize).min(5)
        }
        _ => {
            let (ax, v) = (0..3)
                .map(|i| (i, offset[i]))
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
                .unwrap();
            let m = v.abs();
            let face = 2 * ax + usize::from(v >= 0.0);
            let (u, w) = match ax {
                0 => (offset[1] / m, offset[2] / m),
                1 => (offset[0] / m, offset[2] / m),
                _ => (offset[0] / m, offset[1] / m),
            };
            let cell = |t: f64| (((t + 1.0) * 1.5).floor() as usize).min(2);
            face * 9 + cell(u) * 3 + cell(w)
        }
    }
}

fn n_sectors(d: usize) -> usize {
    match d {
        1 => 2,
        2 => 6,
        _ => 54,
    }
}

fn knn_spec(spec: &FunctionalSpec) -> Result<(usize, usize, bool)> {
    match *spec {
        FunctionalSpec::KnnDegree { k, target_degree, directed } => Ok((k, target_degree, directed)),
        _ => Err(Error::Contract("expected a knn-degree spec".into())),
    }
}

fn degree_value(out: &[usize], inn: &[usize], k: usize, target: usize, directed: bool) -> f64 {
    let degree = if directed {
        k + inn.len()
    } else {
        out.len() + inn.iter().filter(|j| !out.contains(j)).count()
    };
    f64::from(u8::from(degree == target))
}

/// Brute-force k nearest among `pts` of point `me`, ties by index.
fn brute_knn(pts: &[Position], me: usize, k: usize) -> Vec<(f64, usize)> {
    let mut v: Vec<(f64, usize)> =
        (0..pts.len()).filter(|&j| j != me).map(|j| (euclid(&pts[me], &pts[j]), j)).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    v.truncate(k);
    v
}

/// Degree indicator of the origin in the k-NN graph of the patch.
///
/// The patch must be large enough that no outside point can change the
/// origin's edges: every direction sector holds at least `k` patch points and
/// every in-neighbour's k-NN ball lies inside the patch. Otherwise
/// [`Error::PatchTooSmall`] is returned.
pub fn eval_knn_degree(patch: &LocalPatch, spec: &FunctionalSpec) -> Result<f64> {
    let (k, target, directed) = knn_spec(spec)?;
    let origin = require_origin(patch)?;
    let d = patch.dimension;
    if patch.points.len() < k + 1 {
        return Err(Error::InsufficientPoints { needed: k + 1, available: patch.points.len() });
    }
    let pts: Vec<Position> = patch.points.iter().map(|p| p.offset).collect();
    let out_nn = brute_knn(&pts, origin, k);
    let kth = out_nn[k - 1].0;
    if kth >= patch.radius {
        return Err(Error::PatchTooSmall { radius: patch.radius, required: kth });
    }
    let mut per_sector = vec![0usize; n_sectors(d)];
    for (i, p) in pts.iter().enumerate() {
        if i != origin {
            per_sector[sector(p, d)] += 1;
        }
    }
    if per_sector.iter().any(|&c| c < k) {
        return Err(Error::PatchTooSmall { radius: patch.radius, required: 2.0 * patch.radius });
    }
    let out: Vec<usize> = out_nn.iter().map(|&(_, j)| j).collect();
    let mut inn = Vec::new();
    for y in 0..pts.len() {
        if y == origin {
            continue;
        }
        if brute_knn(&pts, y, k).iter().any(|&(_, j)| j == origin) {
            let r = norm(&pts[y]);
            if 2.0 * r >= patch.radius {
                return Err(Error::PatchTooSmall { radius: patch.radius, required: 2.0 * r });
            }
            inn.push(y);
        }
    }
    Ok(degree_value(&out, &inn, k, target, directed))
}

// ---------------------------------------------------------------------------
// Germ-grain

fn grain_spec(spec: &FunctionalSpec) -> Result<(f64, f64)> {
    match *spec {
        FunctionalSpec::GermGrainVolume { grain_radius_bound, resolution } => {
            if !(resolution > 0.0) {
                return Err(Error::param(format!("resolution must be positive, got {resolution}")));
            }
            Ok((grain_radius_bound, resolution))
        }
        _ => Err(Error::Contract("expected a germ-grain spec".into())),
    }
}

/// Patch version of the germ-grain volume: quadrature on a grid of spacing
/// `resolution` whose cell centers sit at `(j + 1/2)·h` relative to the origin.
pub fn eval_germ_grain_patch(patch: &LocalPatch, spec: &FunctionalSpec) -> Result<f64> {
    let (t_max, h) = grain_spec(spec)?;
    let origin = require_origin(patch)?;
    if patch.radius < 2.0 * t_max {
        return Err(Error::PatchTooSmall { radius: patch.radius, required: 2.0 * t_max });
    }
    let d = patch.dimension;
    let m = (t_max / h).ceil() as i64;
    let mut count = 0u64;
    let span = (2 * m) as usize;
    for k in 0..span.pow(d as u32) {
        let mut y = [0.0; MAX_DIM];
        let mut rem = k;
        for c in y.iter_mut().take(d) {
            let j = (rem % span) as i64 - m;
            rem /= span;
            *c = (j as f64 + 0.5) * h;
        }
        if norm(&y) >= t_max {
            continue;
        }
        let nearest = patch
            .points
            .iter()
            .enumerate()
            .min_by(|a, b| euclid(&a.1.offset, &y).total_cmp(&euclid(&b.1.offset, &y)).then(a.1.source.cmp(&b.1.source)))
            .map(|(i, _)| i);
        if nearest != Some(origin) {
            continue;
        }
        if patch.points.iter().any(|p| euclid(&p.offset, &y) < p.aux_mark) {
            count += 1;
        }
    }
    let cap = spec.value_range(d).1;
    Ok((count as f64 * h.powi(d as i32)).min(cap))
}

/// Germ-grain volume at point `x` by quadrature on the global torus grid
/// (spacing `L / ceil(L/h)`), so that values of all points partition the
/// quadrature measure of the covered set.
pub fn eval_germ_grain_volume(
    config: &PointConfiguration,
    index: &NeighborIndex,
    x: usize,
    spec: &FunctionalSpec,
) -> Result<f64> {
    let (t_max, h) = grain_spec(spec)?;
    if config.is_empty() {
        return Err(Error::Contract("germ-grain volume of an empty configuration".into()));
    }
    spec.check_domain(config)?;
    check_grain_marks(config, t_max)?;
    let grid = TorusGrid::new(config, h);
    let d = grid.d;
    let xp = *config.position(x);
    let m = (t_max / grid.h).ceil() as i64 + 1;
    let centre: Vec<i64> = (0..d).map(|i| grid.cell_of(xp[i])).collect();
    let mut axes: Vec<Vec<usize>> = Vec::with_capacity(d);
    for &c in centre.iter().take(d) {
        if (2 * m + 1) as usize >= grid.n {
            axes.push((0..grid.n).collect());
        } else {
            axes.push((c - m..=c + m).map(|j| j.rem_euclid(grid.n as i64) as usize).collect());
        }
    }
    let mut count = 0u64;
    let mut idx = vec![0usize; d];
    let total: usize = axes.iter().map(Vec::len).product();
    for k in 0..total {
        let mut rem = k;
        for i in 0..d {
            idx[i] = axes[i][rem % axes[i].len()];
            rem /= axes[i].len();
        }
        let y = grid.center(&idx);
        if config.geometry().distance(&xp, &y) >= t_max {
            continue;
        }
        if grid_cell_owner(config, index, &y, t_max)? == Some(x) {
            count += 1;
        }
    }
    Ok((count as f64 * grid.cell_volume()).min(spec.value_range(d).1))
}

fn check_grain_marks(config: &PointConfiguration, t_max: f64) -> Result<()> {
    if let Some((i, p)) = config.points().iter().enumerate().find(|(_, p)| p.aux_mark > t_max) {
        return Err(Error::Contract(format!("grain radius {} of point {i} exceeds bound {t_max}", p.aux_mark)));
    }
    Ok(())
}

/// Owner of a covered grid cell: the nearest point (ties by id) if the cell
/// center lies inside some grain, else `None`.
fn grid_cell_owner(config: &PointConfiguration, index: &NeighborIndex, y: &Position, t_max: f64) -> Result<Option<usize>> {
    let mut covered = false;
    index.for_each_within(y, t_max, |id, dist| {
        if dist < config.points()[id].aux_mark {
            covered = true;
        }
    });
    if !covered {
        return Ok(None);
    }
    Ok(Some(index.k_nearest(y, 1, None)?[0].id))
}

struct TorusGrid {
    d: usize,
    n: usize,
    h: f64,
    half: f64,
}

impl TorusGrid {
    fn new(config: &PointConfiguration, h: f64) -> Self {
        let g = config.geometry();
        let n = (g.side_length() / h).ceil().max(1.0) as usize;
        Self { d: g.dimension(), n, h: g.side_length() / n as f64, half: g.half_side() }
    }

    fn cell_of(&self, x: f64) -> i64 {
        ((x + self.half) / self.h).floor() as i64
    }

    fn center(&self, idx: &[usize]) -> Position {
        let mut y = [0.0; MAX_DIM];
        for (i, &j) in idx.iter().enumerate() {
            y[i] = -self.half + (j as f64 + 0.5) * self.h;
        }
        y
    }

    fn cell_volume(&self) -> f64 {
        self.h.powi(self.d as i32)
    }
}

// ---------------------------------------------------------------------------
// Dispatch

/// Evaluates `ξ` at the origin of a patch.
pub fn eval_patch(patch: &LocalPatch, spec: &FunctionalSpec) -> Result<f64> {
    match spec {
        FunctionalSpec::Packing { .. } => eval_packing(patch, spec),
        FunctionalSpec::BirthGrowth { .. } => eval_birth_growth(patch, spec),
        FunctionalSpec::GermGrainVolume { .. } => eval_germ_grain_patch(patch, spec),
        FunctionalSpec::NnThreshold { .. } => eval_nn_threshold(patch, spec),
        FunctionalSpec::KnnDegree { .. } => eval_knn_degree(patch, spec),
        FunctionalSpec::Constant { value } => {
            require_origin(patch)?;
            Ok(*value)
        }
    }
}

/// Torus evaluation of a functional on one configuration, sharing a
/// neighbour index between point queries.
pub struct TorusEvaluator<'a> {
    config: &'a PointConfiguration,
    spec: &'a FunctionalSpec,
    index: NeighborIndex,
}

impl<'a> TorusEvaluator<'a> {
    pub fn new(config: &'a PointConfiguration, spec: &'a FunctionalSpec) -> Result<Self> {
        spec.validate()?;
        spec.check_domain(config)?;
        let d = config.geometry().dimension();
        let cell = default_cell_size(config.geometry(), config.len(), spec.interaction_radius(d).0);
        let index = NeighborIndex::build(config, cell)?;
        Ok(Self { config, spec, index })
    }

    pub fn index(&self) -> &NeighborIndex {
        &self.index
    }

    pub fn config(&self) -> &PointConfiguration {
        self.config
    }

    /// `ξ(x, Per(σ))` for point id `x`.
    pub fn value_at(&self, x: usize) -> Result<f64> {
        if x >= self.config.len() {
            return Err(Error::Contract(format!("point id {x} out of range")));
        }
        match self.spec {
            FunctionalSpec::Constant { value } => Ok(*value),
            FunctionalSpec::Packing { .. } | FunctionalSpec::BirthGrowth { .. } => self.sequential_at(x),
            FunctionalSpec::GermGrainVolume { .. } => eval_germ_grain_volume(self.config, &self.index, x, self.spec),
            FunctionalSpec::NnThreshold { threshold } => {
                if self.config.len() < 2 {
                    return Ok(0.0);
                }
                let nn = self.index.k_nearest(self.config.position(x), 1, Some(x))?;
                Ok(f64::from(u8::from(nn[0].distance < *threshold)))
            }
            FunctionalSpec::KnnDegree { .. } => self.knn_at(x),
        }
    }

    /// Values at every point, in id order.
    pub fn values(&self) -> Result<Vec<f64>> {
        let n = self.config.len();
        match self.spec {
            FunctionalSpec::Constant { value } => Ok(vec![*value; n]),
            FunctionalSpec::Packing { .. } | FunctionalSpec::BirthGrowth { .. } => self.sequential_all(),
            FunctionalSpec::GermGrainVolume { .. } => self.germ_grain_all(),
            FunctionalSpec::KnnDegree { .. } => self.knn_all(),
            FunctionalSpec::NnThreshold { .. } => (0..n).map(|i| self.value_at(i)).collect(),
        }
    }

    fn arrivals(&self) -> Result<Vec<Arrival>> {
        self.config
            .points()
            .iter()
            .enumerate()
            .map(|(i, p)| {
                Ok(Arrival { pos: p.position, time: p.time_mark, seed_radius: seed_radius(self.spec, p.aux_mark)?, id: i })
            })
            .collect()
    }

    fn sequential_all(&self) -> Result<Vec<f64>> {
        let g = self.config.geometry();
        let rule = SequentialRule::from_spec(self.spec, g.dimension()).unwrap();
        let range = self.spec.interaction_radius(g.dimension()).0;
        let arrivals = self.arrivals()?;
        let mut order: Vec<usize> = (0..arrivals.len()).collect();
        order.sort_by(|&a, &b| arrival_order(&arrivals[a], &arrivals[b]));
        let mut accepted = vec![false; arrivals.len()];
        for &i in &order {
            let a = &arrivals[i];
            let mut blocked = false;
            self.index.for_each_within(&a.pos, range * (1.0 + 1e-12) + f64::MIN_POSITIVE, |j, dist| {
                if !blocked && accepted[j] && rule.blocks(a, &arrivals[j], dist) {
                    blocked = true;
                }
            });
            accepted[i] = !blocked;
        }
        Ok(accepted.into_iter().map(|b| f64::from(u8::from(b))).collect())
    }

    /// Acceptance of a single arrival: sequential acceptance restricted to its
    /// causal past (earlier arrivals within interaction range, transitively).
    fn sequential_at(&self, x: usize) -> Result<f64> {
        let g = self.config.geometry();
        let rule = SequentialRule::from_spec(self.spec, g.dimension()).unwrap();
        let range = self.spec.interaction_radius(g.dimension()).0 * (1.0 + 1e-12) + f64::MIN_POSITIVE;
        let pts = self.config.points();
        let arrival = |i: usize| -> Result<Arrival> {
            Ok(Arrival { pos: pts[i].position, time: pts[i].time_mark, seed_radius: seed_radius(self.spec, pts[i].aux_mark)?, id: i })
        };
        let mut in_past = std::collections::HashMap::new();
        in_past.insert(x, arrival(x)?);
        let mut stack = vec![x];
        while let Some(i) = stack.pop() {
            let ai = in_past[&i];
            let mut found = Vec::new();
            self.index.for_each_within(&ai.pos, range, |j, _| found.push(j));
            for j in found {
                if in_past.contains_key(&j) {
                    continue;
                }
                let aj = arrival(j)?;
                if arrival_order(&aj, &ai) == Ordering::Less {
                    in_past.insert(j, aj);
                    stack.push(j);
                }
            }
        }
        let mut list: Vec<Arrival> = in_past.into_values().collect();
        list.sort_by(|a, b| a.id.cmp(&b.id));
        let acc = sequential_accept(rule, &list, |a, b| g.distance(&a.pos, &b.pos));
        let pos = list.iter().position(|a| a.id == x).unwrap();
        Ok(f64::from(u8::from(acc[pos])))
    }

    fn germ_grain_all(&self) -> Result<Vec<f64>> {
        let (t_max, h) = grain_spec(self.spec)?;
        let n = self.config.len();
        if n == 0 {
            return Ok(Vec::new());
        }
        check_grain_marks(self.config, t_max)?;
        let grid = TorusGrid::new(self.config, h);
        let mut counts = vec![0u64; n];
        let mut idx = vec![0usize; grid.d];
        for k in 0..grid.n.pow(grid.d as u32) {
            let mut rem = k;
            for c in idx.iter_mut() {
                *c = rem % grid.n;
                rem /= grid.n;
            }
            let y = grid.center(&idx);
            if let Some(owner) = grid_cell_owner(self.config, &self.index, &y, t_max)? {
                counts[owner] += 1;
            }
        }
        let cap = self.spec.value_range(grid.d).1;
        Ok(counts.into_iter().map(|c| (c as f64 * grid.cell_volume()).min(cap)).collect())
    }

    fn knn_lists(&self, x: usize, k: usize) -> Result<Vec<usize>> {
        let nn = self.index.k_nearest(self.config.position(x), k, Some(x))?;
        let kth = nn[k - 1].distance;
        if kth >= self.config.geometry().half_side() {
            return Err(Error::Certification {
                point: x,
                reason: format!("k-th neighbour distance {kth} reaches half the torus side"),
            });
        }
        Ok(nn.into_iter().map(|n| n.id).collect())
    }

    fn knn_all(&self) -> Result<Vec<f64>> {
        let (k, target, directed) = knn_spec(self.spec)?;
        let n = self.config.len();
        if n == 0 {
            return Ok(Vec::new());
        }
        if n < k + 1 {
            return Err(Error::InsufficientPoints { needed: k + 1, available: n });
        }
        let outs: Vec<Vec<usize>> = (0..n).map(|i| self.knn_lists(i, k)).collect::<Result<_>>()?;
        let mut ins: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, out) in outs.iter().enumerate() {
            for &j in out {
                ins[j].push(i);
            }
        }
        Ok((0..n).map(|i| degree_value(&outs[i], &ins[i], k, target, directed)).collect())
    }

    /// Single-point k-NN degree. In-neighbour candidates are the k closest
    /// points of each direction sector around `x`.
    fn knn_at(&self, x: usize) -> Result<f64> {
        let (k, target, directed) = knn_spec(self.spec)?;
        let n = self.config.len();
        if n < k + 1 {
            return Err(Error::InsufficientPoints { needed: k + 1, available: n });
        }
        let g = self.config.geometry();
        let d = g.dimension();
        let xp = *self.config.position(x);
        let out = self.knn_lists(x, k)?;
        let mut r = 2.0 * self.index.cell_size();
        let candidates = loop {
            let near = self.index.within(&xp, r);
            let mut per_sector = vec![0usize; n_sectors(d)];
            let mut cands = Vec::new();
            for nb in near.iter().filter(|nb| nb.id != x) {
                let s = sector(&g.displacement(&xp, self.config.position(nb.id)), d);
                if per_sector[s] < k {
                    cands.push(nb.id);
                }
                per_sector[s] += 1;
            }
            let saturated = per_sector.iter().all(|&c| c >= k);
            if saturated || r >= g.diameter() {
                break if saturated { cands } else { (0..n).filter(|&j| j != x).collect() };
            }
            r *= 2.0;
        };
        let mut inn = Vec::new();
        for j in candidates {
            if self.knn_lists(j, k)?.contains(&x) {
                inn.push(j);
            }
        }
        Ok(degree_value(&out, &inn, k, target, directed))
    }
}

/// `ξ` at every point of the configuration, evaluated on its periodic extension.
pub fn evaluate_all(config: &PointConfiguration, spec: &FunctionalSpec) -> Result<Vec<f64>> {
    TorusEvaluator::new(config, spec)?.values()
}
