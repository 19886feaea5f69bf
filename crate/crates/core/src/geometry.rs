//! Torus windows, marked point configurations and Poisson sampling.
//!
//! The window `Q_λ = [-L/2, L/2)^d` is always treated periodically: every
//! configuration stands for its periodic extension by the lattice `L·Z^d`.
//! Positions are stored in the fundamental domain; unused trailing
//! coordinates (for `d < 3`) are kept at zero.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::streams::{rng_for, tag};

pub const MAX_DIM: usize = 3;

/// A point of `R^d` padded to three coordinates.
pub type Position = [f64; MAX_DIM];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusGeometry {
    dimension: usize,
    side_length: f64,
    volume: f64,
}

impl TorusGeometry {
    pub fn new(dimension: usize, side_length: f64) -> Result<Self> {
        Self::check_dimension(dimension)?;
        if !(side_length.is_finite() && side_length > 0.0) {
            return Err(Error::param(format!("side length must be positive, got {side_length}")));
        }
        Ok(Self { dimension, side_length, volume: side_length.powi(dimension as i32) })
    }

    /// Window of volume `lambda`; `volume()` returns `lambda` exactly.
    pub fn from_volume(dimension: usize, lambda: f64) -> Result<Self> {
        Self::check_dimension(dimension)?;
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::param(format!("volume must be positive, got {lambda}")));
        }
        let side_length = lambda.powf(1.0 / dimension as f64);
        Ok(Self { dimension, side_length, volume: lambda })
    }

    fn check_dimension(d: usize) -> Result<()> {
        if (1..=MAX_DIM).contains(&d) {
            Ok(())
        } else {
            Err(Error::param(format!("dimension must be 1, 2 or 3, got {d}")))
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn side_length(&self) -> f64 {
        self.side_length
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn half_side(&self) -> f64 {
        0.5 * self.side_length
    }

    /// Wraps a coordinate into `[-L/2, L/2)`.
    pub fn wrap_coordinate(&self, x: f64) -> f64 {
        let l = self.side_length;
        let half = 0.5 * l;
        let mut y = x - l * ((x + half) / l).floor();
        if y >= half {
            y -= l;
        }
        if y < -half {
            y = -half;
        }
        y
    }

    pub fn canonicalize(&self, mut x: Position) -> Position {
        for (i, c) in x.iter_mut().enumerate() {
            *c = if i < self.dimension { self.wrap_coordinate(*c) } else { 0.0 };
        }
        x
    }

    /// Minimum-image displacement `to - from`, each coordinate in `[-L/2, L/2]`.
    #[inline]
    pub fn displacement(&self, from: &Position, to: &Position) -> Position {
        let l = self.side_length;
        let mut out = [0.0; MAX_DIM];
        for i in 0..self.dimension {
            let d = to[i] - from[i];
            out[i] = d - l * (d / l).round();
        }
        out
    }

    #[inline]
    pub fn distance_squared(&self, x: &Position, y: &Position) -> f64 {
        let d = self.displacement(x, y);
        d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
    }

    /// Euclidean distance minimized over lattice translates.
    #[inline]
    pub fn distance(&self, x: &Position, y: &Position) -> f64 {
        self.distance_squared(x, y).sqrt()
    }

    /// Largest possible torus distance, `(L/2)·√d`.
    pub fn diameter(&self) -> f64 {
        self.half_side() * (self.dimension as f64).sqrt()
    }
}

pub fn norm(x: &Position) -> f64 {
    (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

/// Distance between `x` and `y` on the torus; see [`TorusGeometry::distance`].
pub fn torus_distance(geometry: &TorusGeometry, x: &Position, y: &Position) -> f64 {
    geometry.distance(x, y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkedPoint {
    pub position: Position,
    /// Arrival time in `[0, 1]`.
    pub time_mark: f64,
    /// Grain radius or seed-radius mark, `>= 0`.
    pub aux_mark: f64,
}

impl MarkedPoint {
    pub fn new(position: Position, time_mark: f64, aux_mark: f64) -> Self {
        Self { position, time_mark, aux_mark }
    }
}

/// Law of the auxiliary mark: uniform on `[0, t_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrainLaw {
    pub t_max: f64,
}

impl Default for GrainLaw {
    fn default() -> Self {
        Self { t_max: 1.0 }
    }
}

impl GrainLaw {
    pub fn validate(&self) -> Result<()> {
        if self.t_max.is_finite() && self.t_max > 0.0 {
            Ok(())
        } else {
            Err(Error::param(format!("grain bound must be positive, got {}", self.t_max)))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.t_max * rng.random::<f64>()
    }
}

/// A finite simple marked configuration on a torus.
#[derive(Debug, Clone, PartialEq)]
pub struct PointConfiguration {
    geometry: TorusGeometry,
    points: Vec<MarkedPoint>,
}

impl PointConfiguration {
    /// Canonicalizes positions and validates marks and simplicity.
    pub fn new(geometry: TorusGeometry, points: Vec<MarkedPoint>) -> Result<Self> {
        let mut points = points;
        for (i, p) in points.iter_mut().enumerate() {
            if p.position.iter().any(|c| !c.is_finite()) {
                return Err(Error::param(format!("point {i} has a non-finite coordinate")));
            }
            if !(0.0..=1.0).contains(&p.time_mark) {
                return Err(Error::param(format!("point {i}: time mark {} outside [0,1]", p.time_mark)));
            }
            if !(p.aux_mark >= 0.0 && p.aux_mark.is_finite()) {
                return Err(Error::param(format!("point {i}: aux mark {} must be >= 0", p.aux_mark)));
            }
            p.position = geometry.canonicalize(p.position);
        }
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| lex_cmp(&points[a].position, &points[b].position));
        for w in order.windows(2) {
            if points[w[0]].position == points[w[1]].position {
                return Err(Error::param(format!(
                    "configuration is not simple: points {} and {} coincide",
                    w[0], w[1]
                )));
            }
        }
        Ok(Self { geometry, points })
    }

    pub fn empty(geometry: TorusGeometry) -> Self {
        Self { geometry, points: Vec::new() }
    }

    pub fn geometry(&self) -> &TorusGeometry {
        &self.geometry
    }

    pub fn points(&self) -> &[MarkedPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn position(&self, i: usize) -> &Position {
        &self.points[i].position
    }

    /// Appends a point and returns its id.
    pub fn insert(&mut self, point: MarkedPoint) -> Result<usize> {
        let position = self.geometry.canonicalize(point.position);
        if self.points.iter().any(|p| p.position == position) {
            return Err(Error::param("inserted point coincides with an existing point"));
        }
        self.points.push(MarkedPoint { position, ..point });
        Ok(self.points.len() - 1)
    }

    /// Translates every point by `v` (modulo the lattice).
    pub fn shifted(&self, v: &Position) -> Self {
        let points = self
            .points
            .iter()
            .map(|p| {
                let mut x = p.position;
                for i in 0..MAX_DIM {
                    x[i] += v[i];
                }
                MarkedPoint { position: self.geometry.canonicalize(x), ..*p }
            })
            .collect();
        Self { geometry: self.geometry, points }
    }

    /// Keeps the points for which `keep` returns true, preserving order.
    pub fn filtered<F: FnMut(&MarkedPoint) -> bool>(&self, mut keep: F) -> Self {
        Self { geometry: self.geometry, points: self.points.iter().copied().filter(|p| keep(p)).collect() }
    }

    /// Serializes as `d L n` followed by one `x1 .. xd time aux` line per point.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.geometry.dimension;
        writeln!(w, "{} {} {}", d, fmt_real(self.geometry.side_length), self.points.len())?;
        for p in &self.points {
            let mut line = String::new();
            for c in &p.position[..d] {
                line.push_str(&fmt_real(*c));
                line.push(' ');
            }
            line.push_str(&fmt_real(p.time_mark));
            line.push(' ');
            line.push_str(&fmt_real(p.aux_mark));
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate().filter_map(|(i, l)| match l {
            Ok(s) if s.trim().is_empty() => None,
            other => Some((i + 1, other)),
        });
        let (hl, header) = lines.next().ok_or(Error::Parse { line: 1, message: "missing header".into() })?;
        let header = header?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Parse { line: hl, message: "header must be `d L n`".into() });
        }
        let d: usize = parse_field(fields[0], hl)?;
        let side: f64 = parse_field(fields[1], hl)?;
        let n: usize = parse_field(fields[2], hl)?;
        let geometry = TorusGeometry::new(d, side)?;
        let mut points = Vec::with_capacity(n);
        for (ln, line) in lines {
            let line = line?;
            let vals: Vec<f64> =
                line.split_whitespace().map(|s| parse_field(s, ln)).collect::<Result<_>>()?;
            if vals.len() != d + 2 {
                return Err(Error::Parse { line: ln, message: format!("expected {} fields", d + 2) });
            }
            let mut pos = [0.0; MAX_DIM];
            pos[..d].copy_from_slice(&vals[..d]);
            points.push(MarkedPoint::new(pos, vals[d], vals[d + 1]));
        }
        if points.len() != n {
            return Err(Error::Parse { line: hl, message: format!("header announces {n} points, found {}", points.len()) });
        }
        Self::new(geometry, points)
    }
}

fn parse_field<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse().map_err(|_| Error::Parse { line, message: format!("cannot parse `{s}`") })
}

/// Decimal with 17 significant digits; parses back to the identical `f64`.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

pub(crate) fn lex_cmp(a: &Position, b: &Position) -> std::cmp::Ordering {
    a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])).then(a[2].total_cmp(&b[2]))
}

/// Samples a homogeneous Poisson process of intensity `intensity` on the
/// torus, with uniform time marks and aux marks from `grain`.
pub fn sample_poisson<R: Rng + ?Sized>(
    geometry: &TorusGeometry,
    intensity: f64,
    grain: &GrainLaw,
    rng: &mut R,
) -> Result<PointConfiguration> {
    if !(intensity.is_finite() && intensity > 0.0) {
        return Err(Error::param(format!("intensity must be positive, got {intensity}")));
    }
    grain.validate()?;
    let mean = intensity * geometry.volume();
    let n = if mean > 0.0 {
        Poisson::new(mean).map_err(|e| Error::param(format!("poisson mean {mean}: {e}")))?.sample(rng) as usize
    } else {
        0
    };
    let points = (0..n).map(|_| random_point(geometry, grain, rng)).collect();
    // Coincident positions have probability zero; `new` still checks.
    PointConfiguration::new(*geometry, points)
}

/// [`sample_poisson`] on the configuration stream of `seed`.
pub fn sample_poisson_seeded(
    geometry: &TorusGeometry,
    intensity: f64,
    grain: &GrainLaw,
    seed: u64,
) -> Result<PointConfiguration> {
    sample_poisson(geometry, intensity, grain, &mut rng_for(seed, tag::CONFIG, 0))
}

pub fn random_point<R: Rng + ?Sized>(geometry: &TorusGeometry, grain: &GrainLaw, rng: &mut R) -> MarkedPoint {
    let half = geometry.half_side();
    let mut pos = [0.0; MAX_DIM];
    for c in pos.iter_mut().take(geometry.dimension()) {
        *c = geometry.wrap_coordinate(-half + geometry.side_length() * rng.random::<f64>());
    }
    MarkedPoint::new(pos, rng.random::<f64>(), grain.sample(rng))
}

/// A point of a local patch, expressed relative to the patch center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchPoint {
    pub offset: Position,
    pub time_mark: f64,
    pub aux_mark: f64,
    /// Id of the source point in the configuration (copies share it).
    pub source: usize,
}

impl PatchPoint {
    pub fn distance(&self) -> f64 {
        norm(&self.offset)
    }
}

/// The points of a periodized configuration inside a ball, re-centered.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalPatch {
    pub dimension: usize,
    pub radius: f64,
    pub points: Vec<PatchPoint>,
}

impl LocalPatch {
    /// Index of the point sitting exactly at the origin, if any.
    pub fn origin(&self) -> Option<usize> {
        self.points.iter().position(|p| p.offset == [0.0; MAX_DIM])
    }

    pub fn translated(&self, v: &Position) -> LocalPatch {
        let points = self
            .points
            .iter()
            .map(|p| {
                let mut o = p.offset;
                for i in 0..MAX_DIM {
                    o[i] += v[i];
                }
                PatchPoint { offset: o, ..*p }
            })
            .collect();
        LocalPatch { points, ..self.clone() }
    }
}

/// All copies `y + L·i` of configuration points with `|y + L·i - center| < r`,
/// shifted by `-center` and sorted by (distance, source id, offset).
pub fn periodized_patch(config: &PointConfiguration, center: &Position, radius: f64) -> Result<LocalPatch> {
    if !(radius >= 0.0) {
        return Err(Error::param(format!("patch radius must be >= 0, got {radius}")));
    }
    let g = config.geometry();
    let d = g.dimension();
    let l = g.side_length();
    let reach = (radius / l).ceil() as i64 + 1;
    let r2 = radius * radius;
    let mut points = Vec::new();
    let span = (2 * reach + 1) as usize;
    let total = span.pow(d as u32);
    for (id, p) in config.points().iter().enumerate() {
        let base = g.displacement(center, &p.position);
        for k in 0..total {
            let mut off = base;
            let mut rem = k;
            for c in off.iter_mut().take(d) {
                let i = (rem % span) as i64 - reach;
                rem /= span;
                *c += l * i as f64;
            }
            let n2 = off[0] * off[0] + off[1] * off[1] + off[2] * off[2];
            if n2 < r2 {
                points.push(PatchPoint { offset: off, time_mark: p.time_mark, aux_mark: p.aux_mark, source: id });
            }
        }
    }
    points.sort_by(|a, b| {
        a.distance()
            .total_cmp(&b.distance())
            .then(a.source.cmp(&b.source))
            .then(lex_cmp(&a.offset, &b.offset))
    });
    Ok(LocalPatch { dimension: d, radius, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{mean, sample_variance};
    use rand::SeedableRng;

    fn p1(x: f64) -> Position {
        [x, 0.0, 0.0]
    }

    #[test]
    fn torus_distance_wraps() {
        let g = TorusGeometry::new(1, 10.0).unwrap();
        assert!((torus_distance(&g, &p1(4.9), &p1(-4.9)) - 0.2).abs() < 1e-12);
        assert_eq!(torus_distance(&g, &p1(1.3), &p1(1.3)), 0.0);
        let g2 = TorusGeometry::new(2, 4.0).unwrap();
        assert!((g2.distance(&[1.9, 0.0, 0.0], &[-1.9, 0.0, 0.0]) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn distance_bounded_by_half_diagonal() {
        let g = TorusGeometry::new(3, 2.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let a = random_point(&g, &GrainLaw::default(), &mut rng).position;
            let b = random_point(&g, &GrainLaw::default(), &mut rng).position;
            assert!(g.distance(&a, &b) <= g.diameter() + 1e-12);
        }
    }

    #[test]
    fn canonicalization_lands_in_half_open_domain() {
        let g = TorusGeometry::new(1, 1.0).unwrap();
        for x in [0.5, -0.5, 1.5, -7.25, 0.4999999999999999, 3.0] {
            let y = g.wrap_coordinate(x);
            assert!((-0.5..0.5).contains(&y), "{x} -> {y}");
        }
    }

    #[test]
    fn volume_round_trips_lambda() {
        for (d, lam) in [(1, 4096.0), (2, 1000.0), (3, 343.7)] {
            assert_eq!(TorusGeometry::from_volume(d, lam).unwrap().volume(), lam);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(TorusGeometry::new(4, 1.0).is_err());
        assert!(TorusGeometry::new(2, 0.0).is_err());
        let g = TorusGeometry::new(2, 1.0).unwrap();
        assert!(sample_poisson_seeded(&g, 0.0, &GrainLaw::default(), 1).is_err());
        assert!(sample_poisson_seeded(&g, -1.0, &GrainLaw::default(), 1).is_err());
        let cfg = PointConfiguration::empty(g);
        assert!(periodized_patch(&cfg, &[0.0; 3], -1.0).is_err());
    }

    #[test]
    fn duplicate_points_rejected() {
        let g = TorusGeometry::new(1, 2.0).unwrap();
        let pts = vec![MarkedPoint::new(p1(0.5), 0.1, 0.0), MarkedPoint::new(p1(-1.5), 0.2, 0.0)];
        assert!(PointConfiguration::new(g, pts).is_err());
    }

    #[test]
    fn vanishing_intensity_gives_empty_configurations() {
        let g = TorusGeometry::new(1, 1.0).unwrap();
        for s in 0..100 {
            assert!(sample_poisson_seeded(&g, 1e-12, &GrainLaw::default(), s).unwrap().is_empty());
        }
    }

    #[test]
    fn poisson_count_moments() {
        let g = TorusGeometry::new(2, 10.0).unwrap();
        let counts: Vec<f64> = (0..10_000u64)
            .map(|r| {
                let mut rng = rng_for(99, tag::CONFIG, r);
                sample_poisson(&g, 1.0, &GrainLaw::default(), &mut rng).unwrap().len() as f64
            })
            .collect();
        let m = mean(&counts);
        let v = sample_variance(&counts);
        assert!((m - 100.0).abs() < 3.0 * (100.0f64 / 10_000.0).sqrt(), "mean {m}");
        assert!((v - 100.0).abs() < 10.0, "variance {v}");
    }

    #[test]
    fn seeded_sampling_is_deterministic() {
        let g = TorusGeometry::new(2, 5.0).unwrap();
        let a = sample_poisson_seeded(&g, 2.0, &GrainLaw::default(), 42).unwrap();
        let b = sample_poisson_seeded(&g, 2.0, &GrainLaw::default(), 42).unwrap();
        assert_eq!(a, b);
        for (p, q) in a.points().iter().zip(b.points()) {
            assert_eq!(p.position.map(f64::to_bits), q.position.map(f64::to_bits));
        }
    }

    #[test]
    fn sampled_marks_in_range() {
        let g = TorusGeometry::new(3, 3.0).unwrap();
        let law = GrainLaw { t_max: 0.4 };
        let c = sample_poisson_seeded(&g, 3.0, &law, 5).unwrap();
        for p in c.points() {
            assert!((0.0..=1.0).contains(&p.time_mark));
            assert!((0.0..=0.4).contains(&p.aux_mark));
            for x in &p.position {
                assert!((-1.5..1.5).contains(x));
            }
        }
    }

    #[test]
    fn patch_copies_single_point() {
        let g = TorusGeometry::new(1, 1.0).unwrap();
        let c = PointConfiguration::new(g, vec![MarkedPoint::new(p1(0.0), 0.5, 0.0)]).unwrap();
        let patch = periodized_patch(&c, &p1(0.0), 2.5).unwrap();
        let mut xs: Vec<f64> = patch.points.iter().map(|p| p.offset[0]).collect();
        xs.sort_by(f64::total_cmp);
        assert_eq!(xs, vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        assert!(patch.points.iter().all(|p| p.source == 0));
    }

    #[test]
    fn small_patch_has_unique_representatives() {
        let g = TorusGeometry::new(2, 6.0).unwrap();
        let c = sample_poisson_seeded(&g, 2.0, &GrainLaw::default(), 11).unwrap();
        let center = [1.0, -2.7, 0.0];
        let patch = periodized_patch(&c, &center, 2.4).unwrap();
        let expected: Vec<usize> =
            (0..c.len()).filter(|&i| g.distance(&center, c.position(i)) < 2.4).collect();
        let mut got: Vec<usize> = patch.points.iter().map(|p| p.source).collect();
        got.sort();
        assert_eq!(got, expected);
    }

    #[test]
    fn text_round_trip_is_exact() {
        let g = TorusGeometry::new(3, 2.718281828459045).unwrap();
        let c = sample_poisson_seeded(&g, 4.0, &GrainLaw { t_max: 0.3 }, 8).unwrap();
        let mut buf = Vec::new();
        c.write_text(&mut buf).unwrap();
        let back = PointConfiguration::read_text(&buf[..]).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn text_parse_errors() {
        assert!(PointConfiguration::read_text("1 2.0".as_bytes()).is_err());
        assert!(PointConfiguration::read_text("1 2.0 2\n0.1 0.5 0.0\n".as_bytes()).is_err());
        assert!(PointConfiguration::read_text("1 2.0 1\n0.1 0.5\n".as_bytes()).is_err());
    }
}
