//! Reference paths, projection of the vehicle onto them, and
//! acceleration-limited speed planning.
//!
//! Paths are built from straights, circular arcs and linear-curvature
//! blends (clothoids) and sampled every [`SAMPLE_SPACING`] metres with the
//! exact analytic curvature of the segment that contains each sample.
//! Headings are kept unwrapped so they stay continuous along the path.
//! Lateral deviation is positive when the vehicle is left of the path
//! tangent.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units::Speed;

/// Arc-length spacing between path samples [m].
pub const SAMPLE_SPACING: f64 = 0.25;
/// Projections farther than this from every sample are rejected [m].
pub const MAX_PROJECTION_DISTANCE: f64 = 50.0;
/// Half-width of the local search window around the hint, in samples.
const SEARCH_WINDOW: usize = 200;
/// A windowed match farther than this triggers a full scan [m].
const LOCAL_MATCH_LIMIT: f64 = 5.0;
const CLOSURE_POSITION_TOL: f64 = 0.5;
const CLOSURE_HEADING_TOL: f64 = 0.1;
const MAX_SPACING: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PathError {
    #[error("segment {index}: {reason}")]
    InvalidSegment { index: usize, reason: String },
    #[error("closed path does not close: end is {gap:.3} m and {heading_gap:.3} rad from start")]
    Closure { gap: f64, heading_gap: f64 },
    #[error("position is {distance:.2} m from the path (limit {MAX_PROJECTION_DISTANCE} m)")]
    OffPath { distance: f64 },
    #[error("arc length {s} outside [0, {length}]")]
    Domain { s: f64, length: f64 },
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("invalid constraints: {0}")]
    InvalidConstraints(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TurnDirection {
    Left,
    Right,
}

impl TurnDirection {
    fn sign(self) -> f64 {
        match self {
            TurnDirection::Left => 1.0,
            TurnDirection::Right => -1.0,
        }
    }
}

/// One piece of a path description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Segment {
    Straight {
        length: f64,
    },
    Arc {
        radius: f64,
        sweep_deg: f64,
        direction: TurnDirection,
    },
    /// Curvature varies linearly with arc length from `kappa_start` to `kappa_end`.
    Blend {
        length: f64,
        kappa_start: f64,
        kappa_end: f64,
    },
}

impl Segment {
    pub fn straight(length: f64) -> Self {
        Segment::Straight { length }
    }

    /// Arc with the sweep given in radians.
    pub fn arc(radius: f64, sweep: f64, direction: TurnDirection) -> Self {
        Segment::Arc { radius, sweep_deg: sweep.to_degrees(), direction }
    }

    pub fn blend(length: f64, kappa_start: f64, kappa_end: f64) -> Self {
        Segment::Blend { length, kappa_start, kappa_end }
    }

    pub fn length(&self) -> f64 {
        match *self {
            Segment::Straight { length } | Segment::Blend { length, .. } => length,
            Segment::Arc { radius, sweep_deg, .. } => radius * sweep_deg.to_radians(),
        }
    }

    /// Curvature at the start and end of the segment.
    pub fn curvature_range(&self) -> (f64, f64) {
        match *self {
            Segment::Straight { .. } => (0.0, 0.0),
            Segment::Arc { radius, direction, .. } => {
                let k = direction.sign() / radius;
                (k, k)
            }
            Segment::Blend { kappa_start, kappa_end, .. } => (kappa_start, kappa_end),
        }
    }

    fn validate(&self, index: usize) -> Result<(), PathError> {
        let bad = |reason: &str| PathError::InvalidSegment { index, reason: reason.to_string() };
        match *self {
            Segment::Straight { length } => {
                if !(length > 0.0 && length.is_finite()) {
                    return Err(bad("straight length must be positive"));
                }
            }
            Segment::Arc { radius, sweep_deg, .. } => {
                if !(radius > 0.0 && radius.is_finite()) {
                    return Err(bad("arc radius must be positive"));
                }
                if !(sweep_deg > 0.0 && sweep_deg.is_finite()) {
                    return Err(bad("arc sweep must be positive"));
                }
            }
            Segment::Blend { length, kappa_start, kappa_end } => {
                if !(length > 0.0 && length.is_finite()) {
                    return Err(bad("blend length must be positive"));
                }
                if !(kappa_start.is_finite() && kappa_end.is_finite()) {
                    return Err(bad("blend curvature must be finite"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub x: f64,
    pub y: f64,
    pub s: f64,
    pub heading: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    points: Vec<PathPoint>,
    closed: bool,
}

/// Result of matching a position to a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Signed lateral deviation, positive left of the tangent [m].
    pub y1: f64,
    /// Nearest sample to the interpolated closest point.
    pub index: usize,
    pub kappa: f64,
    pub heading: f64,
    /// Arc length of the interpolated closest point [m].
    pub s: f64,
}

fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = a % two_pi;
    if r > std::f64::consts::PI {
        r -= two_pi;
    } else if r < -std::f64::consts::PI {
        r += two_pi;
    }
    r
}

impl Path {
    /// Wraps already-sampled points, checking every path invariant.
    pub fn from_points(points: Vec<PathPoint>, closed: bool) -> Result<Self, PathError> {
        if points.len() < 2 {
            return Err(PathError::InvalidPath("a path needs at least two points".into()));
        }
        for (i, w) in points.windows(2).enumerate() {
            let ds = w[1].s - w[0].s;
            if !(ds > 0.0) {
                return Err(PathError::InvalidPath(format!("arc length not increasing at point {}", i + 1)));
            }
            if ds > MAX_SPACING + 1e-9 {
                return Err(PathError::InvalidPath(format!("spacing {ds} m exceeds {MAX_SPACING} m at point {}", i + 1)));
            }
            if (w[1].heading - w[0].heading).abs() > std::f64::consts::PI {
                return Err(PathError::InvalidPath(format!("heading jump at point {}", i + 1)));
            }
        }
        if let Some(i) = points
            .iter()
            .position(|p| !(p.kappa.is_finite() && p.x.is_finite() && p.y.is_finite() && p.heading.is_finite()))
        {
            return Err(PathError::InvalidPath(format!("non-finite value at point {i}")));
        }
        let path = Path { points, closed };
        if closed {
            path.check_closure()?;
        }
        Ok(path)
    }

    fn check_closure(&self) -> Result<(), PathError> {
        let a = self.points[0];
        let b = *self.points.last().unwrap();
        let gap = (b.x - a.x).hypot(b.y - a.y);
        let heading_gap = wrap_angle(b.heading - a.heading).abs();
        if gap > CLOSURE_POSITION_TOL || heading_gap > CLOSURE_HEADING_TOL {
            return Err(PathError::Closure { gap, heading_gap });
        }
        Ok(())
    }

    pub fn points(&self) -> &[PathPoint] {
        &self.points
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Total arc length [m].
    pub fn length(&self) -> f64 {
        self.points.last().unwrap().s - self.points[0].s
    }

    /// Bracketing sample index and interpolation fraction for arc length `s`.
    fn locate(&self, s: f64) -> Result<(usize, f64), PathError> {
        let s0 = self.points[0].s;
        let len = self.length();
        let mut rel = s - s0;
        if self.closed {
            rel = rel.rem_euclid(len);
        } else if !(-1e-9..=len + 1e-9).contains(&rel) || !rel.is_finite() {
            return Err(PathError::Domain { s, length: len });
        }
        let target = s0 + rel.clamp(0.0, len);
        let upper = self.points.partition_point(|p| p.s <= target);
        let i = upper.saturating_sub(1).min(self.points.len() - 2);
        let (a, b) = (self.points[i], self.points[i + 1]);
        let f = ((target - a.s) / (b.s - a.s)).clamp(0.0, 1.0);
        Ok((i, f))
    }

    /// Linearly interpolated curvature at arc length `s`.
    pub fn curvature_at(&self, s: f64) -> Result<f64, PathError> {
        let (i, f) = self.locate(s)?;
        let (a, b) = (self.points[i], self.points[i + 1]);
        Ok(a.kappa + f * (b.kappa - a.kappa))
    }

    /// Interpolated position at arc length `s`.
    pub fn position_at(&self, s: f64) -> Result<(f64, f64, f64), PathError> {
        let (i, f) = self.locate(s)?;
        let (a, b) = (self.points[i], self.points[i + 1]);
        Ok((a.x + f * (b.x - a.x), a.y + f * (b.y - a.y), a.heading + f * (b.heading - a.heading)))
    }

    /// Number of distinct samples: a closed path repeats its first point at the end.
    fn cycle_len(&self) -> usize {
        if self.closed {
            self.points.len() - 1
        } else {
            self.points.len()
        }
    }

    fn dist2(&self, i: usize, x: f64, y: f64) -> f64 {
        let p = &self.points[i];
        (p.x - x).powi(2) + (p.y - y).powi(2)
    }

    fn nearest_sample(&self, x: f64, y: f64, hint: usize) -> usize {
        let n = self.cycle_len();
        let scan_all = || {
            (0..n)
                .min_by(|&a, &b| self.dist2(a, x, y).total_cmp(&self.dist2(b, x, y)))
                .unwrap()
        };
        if n <= 2 * SEARCH_WINDOW + 1 {
            return scan_all();
        }
        let hint = hint % n;
        let mut best = hint;
        let mut best_d = f64::INFINITY;
        let mut best_offset = 0i64;
        for off in -(SEARCH_WINDOW as i64)..=SEARCH_WINDOW as i64 {
            let j = hint as i64 + off;
            let j = if self.closed {
                j.rem_euclid(n as i64) as usize
            } else if j < 0 || j >= n as i64 {
                continue;
            } else {
                j as usize
            };
            let d = self.dist2(j, x, y);
            if d < best_d {
                best_d = d;
                best = j;
                best_offset = off;
            }
        }
        let at_edge = best_offset.unsigned_abs() as usize == SEARCH_WINDOW;
        if at_edge || best_d.sqrt() > LOCAL_MATCH_LIMIT {
            scan_all()
        } else {
            best
        }
    }

    /// Matches `(x, y)` to the path, searching near `hint` first.
    pub fn project(&self, x: f64, y: f64, hint: usize) -> Result<Projection, PathError> {
        let best = self.nearest_sample(x, y, hint);
        let d = self.dist2(best, x, y).sqrt();
        if !(d <= MAX_PROJECTION_DISTANCE) {
            return Err(PathError::OffPath { distance: d });
        }
        let n = self.cycle_len();
        // Candidate chords on either side of the nearest sample.
        let mut chords = Vec::with_capacity(2);
        if self.closed {
            chords.push(((best + n - 1) % n, best));
            chords.push((best, best + 1));
        } else {
            if best > 0 {
                chords.push((best - 1, best));
            }
            if best + 1 < n {
                chords.push((best, best + 1));
            }
        }
        let mut result: Option<(f64, Projection)> = None;
        for (i, j) in chords {
            let a = self.points[i];
            // On a closed path the chord ending at sample 0 uses its duplicate at the end.
            let b = if self.closed && j == 0 { *self.points.last().unwrap() } else { self.points[j] };
            let (dx, dy) = (b.x - a.x, b.y - a.y);
            let len2 = dx * dx + dy * dy;
            if len2 <= 0.0 {
                continue;
            }
            let t = (((x - a.x) * dx + (y - a.y) * dy) / len2).clamp(0.0, 1.0);
            let (qx, qy) = (a.x + t * dx, a.y + t * dy);
            let dist = (x - qx).hypot(y - qy);
            let len = len2.sqrt();
            let y1 = (dx * (y - qy) - dy * (x - qx)) / len;
            let mut index = if t < 0.5 { i } else { j };
            if self.closed && index == n {
                index = 0;
            }
            let proj = Projection {
                y1,
                index,
                kappa: a.kappa + t * (b.kappa - a.kappa),
                heading: a.heading + t * (b.heading - a.heading),
                s: a.s + t * (b.s - a.s),
            };
            if result.as_ref().is_none_or(|(bd, _)| dist < *bd) {
                result = Some((dist, proj));
            }
        }
        result.map(|(_, p)| p).ok_or_else(|| PathError::InvalidPath("degenerate path".into()))
    }
}

/// Free function form of [`Path::project`].
pub fn project_to_path(path: &Path, position: (f64, f64), hint_index: usize) -> Result<Projection, PathError> {
    path.project(position.0, position.1, hint_index)
}

/// Free function form of [`Path::curvature_at`].
pub fn curvature_at(path: &Path, s: f64) -> Result<f64, PathError> {
    path.curvature_at(s)
}

struct Piece {
    s0: f64,
    len: f64,
    k0: f64,
    k1: f64,
    h0: f64,
}

impl Piece {
    fn heading(&self, t: f64) -> f64 {
        self.h0 + self.k0 * t + (self.k1 - self.k0) * t * t / (2.0 * self.len)
    }

    fn kappa(&self, t: f64) -> f64 {
        self.k0 + (self.k1 - self.k0) * t / self.len
    }

    /// Displacement between local arc lengths `a` and `b` (4-point Gauss-Legendre).
    fn displacement(&self, a: f64, b: f64) -> (f64, f64) {
        const NODES: [f64; 4] = [-0.861_136_311_594_052_6, -0.339_981_043_584_856_3, 0.339_981_043_584_856_3, 0.861_136_311_594_052_6];
        const WEIGHTS: [f64; 4] = [0.347_854_845_137_453_9, 0.652_145_154_862_546_1, 0.652_145_154_862_546_1, 0.347_854_845_137_453_9];
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let (mut dx, mut dy) = (0.0, 0.0);
        for (n, w) in NODES.iter().zip(WEIGHTS) {
            let h = self.heading(mid + half * n);
            dx += w * h.cos();
            dy += w * h.sin();
        }
        (dx * half, dy * half)
    }
}

/// Samples a segment list into a path starting at the origin heading east.
pub fn build_path(segments: &[Segment], closed: bool) -> Result<Path, PathError> {
    if segments.is_empty() {
        return Err(PathError::InvalidPath("no segments".into()));
    }
    let mut pieces = Vec::with_capacity(segments.len());
    let (mut s0, mut h0) = (0.0, 0.0);
    for (i, seg) in segments.iter().enumerate() {
        seg.validate(i)?;
        let (k0, k1) = seg.curvature_range();
        let len = seg.length();
        pieces.push(Piece { s0, len, k0, k1, h0 });
        h0 += 0.5 * (k0 + k1) * len;
        s0 += len;
    }
    let total = s0;

    let mut targets: Vec<f64> = Vec::with_capacity((total / SAMPLE_SPACING) as usize + 2);
    let n_grid = (total / SAMPLE_SPACING + 1e-9).floor() as usize;
    targets.extend((0..=n_grid).map(|k| k as f64 * SAMPLE_SPACING));
    if total - targets[n_grid] > 1e-9 {
        targets.push(total);
    } else {
        targets[n_grid] = total;
    }

    let mut points = Vec::with_capacity(targets.len());
    let (mut x, mut y) = (0.0, 0.0);
    let mut s_cur = 0.0;
    let mut p = 0;
    for (k, &s_t) in targets.iter().enumerate() {
        // March from s_cur to s_t, splitting at piece boundaries.
        while s_cur < s_t {
            let piece = &pieces[p];
            let end = (piece.s0 + piece.len).min(s_t);
            let (dx, dy) = piece.displacement(s_cur - piece.s0, end - piece.s0);
            x += dx;
            y += dy;
            s_cur = end;
            if s_cur >= piece.s0 + piece.len && p + 1 < pieces.len() {
                p += 1;
            }
        }
        s_cur = s_t;
        let last = k + 1 == targets.len();
        // Samples on a boundary belong to the following piece, except the final one.
        let piece = if !last && p + 1 < pieces.len() && s_t >= pieces[p].s0 + pieces[p].len {
            &pieces[p + 1]
        } else {
            &pieces[p]
        };
        let t = (s_t - piece.s0).clamp(0.0, piece.len);
        points.push(PathPoint { x, y, s: s_t, heading: piece.heading(t), kappa: piece.kappa(t) });
    }
    Path::from_points(points, closed)
}

/// Speed and acceleration limits for one trajectory (SI units internally).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConstraintSpec", into = "ConstraintSpec")]
pub struct DynamicConstraints {
    pub v_max: f64,
    pub a_long_max: f64,
    pub a_decel_max: f64,
    pub a_lat_max: f64,
}

/// On-disk form of [`DynamicConstraints`]: the speed carries its unit.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    pub v_max: Speed,
    pub a_long_max: f64,
    pub a_decel_max: f64,
    pub a_lat_max: f64,
}

impl TryFrom<ConstraintSpec> for DynamicConstraints {
    type Error = PathError;
    fn try_from(c: ConstraintSpec) -> Result<Self, PathError> {
        DynamicConstraints::new(c.v_max.to_mps(), c.a_long_max, c.a_decel_max, c.a_lat_max)
    }
}

impl From<DynamicConstraints> for ConstraintSpec {
    fn from(c: DynamicConstraints) -> Self {
        ConstraintSpec {
            v_max: Speed::mps(c.v_max),
            a_long_max: c.a_long_max,
            a_decel_max: c.a_decel_max,
            a_lat_max: c.a_lat_max,
        }
    }
}

impl DynamicConstraints {
    pub fn new(v_max: f64, a_long_max: f64, a_decel_max: f64, a_lat_max: f64) -> Result<Self, PathError> {
        for (name, v) in [("v_max", v_max), ("a_long_max", a_long_max), ("a_decel_max", a_decel_max), ("a_lat_max", a_lat_max)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PathError::InvalidConstraints(format!("{name} must be positive, got {v}")));
            }
        }
        if v_max > 60.0 {
            return Err(PathError::InvalidConstraints(format!("v_max {v_max} m/s exceeds 60 m/s")));
        }
        Ok(DynamicConstraints { v_max, a_long_max, a_decel_max, a_lat_max })
    }

    /// Named constraint sets: `T1`..`T3` for the benchmark circuits and
    /// `S1`, `S2` for the two experimental setups.
    pub fn preset(name: &str) -> Option<Self> {
        let (kmh, along, adecel, alat) = match name.to_ascii_uppercase().as_str() {
            "T1" | "S1" => (35.0, 0.4, 0.7, 1.0),
            "T2" => (100.0, 1.5, 2.0, 4.0),
            "T3" => (70.0, 2.0, 2.0, 2.0),
            "S2" => (56.0, 1.0, 2.0, 2.0),
            _ => return None,
        };
        Some(DynamicConstraints { v_max: kmh / 3.6, a_long_max: along, a_decel_max: adecel, a_lat_max: alat })
    }
}

/// A path with its reference speed profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub path: Path,
    pub v_ref: Vec<f64>,
    pub constraints: DynamicConstraints,
}

impl Trajectory {
    /// Interpolated reference speed at arc length `s`.
    pub fn speed_at(&self, s: f64) -> Result<f64, PathError> {
        let (i, f) = self.path.locate(s)?;
        Ok(self.v_ref[i] + f * (self.v_ref[i + 1] - self.v_ref[i]))
    }
}

/// Curvature-limited speed followed by forward (acceleration) and backward
/// (deceleration) passes. Closed paths are swept until the profile wraps
/// consistently.
pub fn plan_speed(path: &Path, constraints: &DynamicConstraints) -> Trajectory {
    let pts = path.points();
    let n = pts.len();
    let limit: Vec<f64> = pts
        .iter()
        .map(|p| {
            if p.kappa != 0.0 {
                constraints.v_max.min((constraints.a_lat_max / p.kappa.abs()).sqrt())
            } else {
                constraints.v_max
            }
        })
        .collect();
    let mut v = limit.clone();
    let sweeps = if path.is_closed() { 10 } else { 1 };
    for _ in 0..sweeps {
        let before = v.clone();
        if path.is_closed() {
            v[0] = v[0].min(v[n - 1]);
        }
        for i in 1..n {
            let ds = pts[i].s - pts[i - 1].s;
            v[i] = v[i].min((v[i - 1] * v[i - 1] + 2.0 * constraints.a_long_max * ds).sqrt());
        }
        if path.is_closed() {
            v[n - 1] = v[n - 1].min(v[0]);
        }
        for i in (0..n - 1).rev() {
            let ds = pts[i + 1].s - pts[i].s;
            v[i] = v[i].min((v[i + 1] * v[i + 1] + 2.0 * constraints.a_decel_max * ds).sqrt());
        }
        if v == before {
            break;
        }
    }
    Trajectory { path: path.clone(), v_ref: v, constraints: *constraints }
}

/// Declarative path description as stored in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub closed: bool,
    /// The segment list is driven this many times in a row.
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub repeat: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraints: Option<DynamicConstraints>,
    pub segments: Vec<Segment>,
}

fn one() -> u32 {
    1
}

fn is_one(v: &u32) -> bool {
    *v == 1
}

impl PathSpec {
    pub fn build(&self) -> Result<Path, PathError> {
        if self.repeat == 0 {
            return Err(PathError::InvalidPath("repeat must be at least 1".into()));
        }
        let segments: Vec<Segment> = (0..self.repeat).flat_map(|_| self.segments.iter().cloned()).collect();
        build_path(&segments, self.closed)
    }
}
