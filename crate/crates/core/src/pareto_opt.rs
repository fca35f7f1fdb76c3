//! Multi-objective controller tuning.
//!
//! Candidates are scored by the worst case over a set of benchmark
//! trajectories on three objectives (IAE, M_eps, M_zeta), all minimized.
//! A crowding-guided pattern search builds a nondominated archive, and
//! controller structures are compared by the volume of the acceptable box
//! that their front leaves undominated (VUP, smaller is better).

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controllers::{ControllerConfig, ControllerKind, LateralController};
use crate::metrics::{self, SpectralConfig, FAILURE_PENALTY};
use crate::path_track::Trajectory;
use crate::vehicle_sim::{simulate_run, SensorModel, SimOptions, VehicleParams};

#[derive(Debug, Error)]
pub enum ParetoError {
    #[error("invalid parameter specification: {0}")]
    InvalidSpec(String),
    #[error("parameter `{name}` = {value} outside [{lower}, {upper}]")]
    OutOfBounds { name: String, value: f64, lower: f64, upper: f64 },
    #[error("invalid study: {0}")]
    InvalidStudy(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Componentwise upper limits of acceptable closed-loop behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceptableBox {
    pub iae_max: f64,
    pub m_eps_max: f64,
    pub m_zeta_max: f64,
}

impl Default for AcceptableBox {
    fn default() -> Self {
        AcceptableBox { iae_max: 0.35, m_eps_max: 0.25, m_zeta_max: 0.7 }
    }
}

impl AcceptableBox {
    pub fn corner(&self) -> [f64; 3] {
        [self.iae_max, self.m_eps_max, self.m_zeta_max]
    }

    pub fn volume(&self) -> f64 {
        self.iae_max * self.m_eps_max * self.m_zeta_max
    }

    pub fn validate(&self) -> Result<(), ParetoError> {
        if self.corner().iter().all(|c| *c > 0.0 && c.is_finite()) {
            Ok(())
        } else {
            Err(ParetoError::InvalidSpec(format!("acceptable box must be positive, got {:?}", self.corner())))
        }
    }
}

/// `a` Pareto-dominates `b` under minimization.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    debug_assert_eq!(a.len(), b.len());
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        strictly |= x < y;
    }
    strictly
}

/// Indices of the nondominated members of `points`, in insertion order.
/// Among exact duplicates only the first is kept.
pub fn nondominated_indices<P: AsRef<[f64]>>(points: &[P]) -> Vec<usize> {
    // After a stable lexicographic sort a point can only be dominated by an
    // earlier one, so each candidate is checked against the survivors only.
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| lex_cmp(points[i].as_ref(), points[j].as_ref()));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let p = points[i].as_ref();
        if kept.iter().any(|&k| {
            let q = points[k].as_ref();
            q == p || dominates(q, p)
        }) {
            continue;
        }
        kept.push(i);
    }
    kept.sort_unstable();
    kept
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    std::cmp::Ordering::Equal
}

/// Raw metrics of one candidate on one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMetrics {
    pub trajectory: String,
    pub seed: u64,
    pub completed: bool,
    pub iae: f64,
    pub mle: f64,
    pub m_epsilon: f64,
    pub m_zeta: f64,
}

/// An evaluated candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectivePoint {
    pub params: Vec<f64>,
    /// Minimized objectives; `[iae, m_eps, m_zeta]` for controller studies.
    pub objectives: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_trajectory: Vec<TrajectoryMetrics>,
}

impl ObjectivePoint {
    pub fn new(params: Vec<f64>, objectives: Vec<f64>) -> Self {
        ObjectivePoint { params, objectives, per_trajectory: Vec::new() }
    }
}

/// Nondominated set, sorted lexicographically by objectives.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    pub points: Vec<ObjectivePoint>,
}

impl ParetoFront {
    pub fn objectives(&self) -> Vec<Vec<f64>> {
        self.points.iter().map(|p| p.objectives.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Maximal nondominated subset of `points`; exact duplicates keep the first.
pub fn front_filter(points: &[ObjectivePoint]) -> ParetoFront {
    let objs: Vec<&[f64]> = points.iter().map(|p| p.objectives.as_slice()).collect();
    let mut kept: Vec<ObjectivePoint> = nondominated_indices(&objs).into_iter().map(|i| points[i].clone()).collect();
    kept.sort_by(|a, b| lex_cmp(&a.objectives, &b.objectives));
    ParetoFront { points: kept }
}

/// Hypervolume dominated by `points` and bounded by `reference`, for two or
/// three objectives. Points not strictly below the reference in every
/// component contribute nothing.
pub fn hypervolume<P: AsRef<[f64]>>(points: &[P], reference: &[f64]) -> f64 {
    let inside: Vec<&[f64]> = points
        .iter()
        .map(|p| p.as_ref())
        .filter(|p| p.iter().zip(reference).all(|(x, r)| x < r))
        .collect();
    match reference.len() {
        2 => hv2(inside.iter().map(|p| [p[0], p[1]]).collect(), [reference[0], reference[1]]),
        3 => hv3(&inside, reference),
        d => panic!("hypervolume supports 2 or 3 objectives, got {d}"),
    }
}

fn hv2(mut pts: Vec<[f64; 2]>, r: [f64; 2]) -> f64 {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let mut area = 0.0;
    let mut best_y = r[1];
    for (i, p) in pts.iter().enumerate() {
        if p[1] >= best_y {
            continue;
        }
        // Strip from this x to the next improving x (or the reference).
        let next_x = pts[i + 1..].iter().find(|q| q[1] < p[1]).map_or(r[0], |q| q[0]);
        area += (next_x - p[0]) * (r[1] - p[1]);
        best_y = p[1];
    }
    area
}

fn hv3(pts: &[&[f64]], r: &[f64]) -> f64 {
    // Sweep along the third objective: between consecutive z levels the
    // dominated cross-section is the 2-D hypervolume of the points below.
    let mut sorted: Vec<&[f64]> = pts.to_vec();
    sorted.sort_by(|a, b| a[2].total_cmp(&b[2]));
    let mut volume = 0.0;
    let mut slice: Vec<[f64; 2]> = Vec::with_capacity(sorted.len());
    for (i, p) in sorted.iter().enumerate() {
        slice.push([p[0], p[1]]);
        let z_next = sorted.get(i + 1).map_or(r[2], |q| q[2]);
        if z_next > p[2] {
            volume += hv2(slice.clone(), [r[0], r[1]]) * (z_next - p[2]);
        }
    }
    volume
}

fn clip(objectives: &[f64], corner: &[f64; 3]) -> [f64; 3] {
    [objectives[0].min(corner[0]), objectives[1].min(corner[1]), objectives[2].min(corner[2])]
}

/// Volume of the acceptable box not dominated by `front`.
pub fn vup<P: AsRef<[f64]>>(front: &[P], bx: &AcceptableBox) -> f64 {
    let corner = bx.corner();
    let clipped: Vec<[f64; 3]> = front.iter().map(|p| clip(p.as_ref(), &corner)).collect();
    (bx.volume() - hypervolume(&clipped, &corner)).max(0.0)
}

/// Diagnostic variant of [`vup`] that also credits the straight segments
/// between each front member and its two nearest neighbours (in box-scaled
/// objective space), approximating a linearly interpolated front surface.
pub fn vup_interpolated<P: AsRef<[f64]>>(front: &[P], bx: &AcceptableBox) -> f64 {
    const SAMPLES: usize = 16;
    let corner = bx.corner();
    let pts: Vec<[f64; 3]> = front.iter().map(|p| clip(p.as_ref(), &corner)).collect();
    let scaled = |p: &[f64; 3]| [p[0] / corner[0], p[1] / corner[1], p[2] / corner[2]];
    let mut augmented = pts.clone();
    for (i, p) in pts.iter().enumerate() {
        let mut near: Vec<(f64, usize)> = pts
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(j, q)| {
                let (a, b) = (scaled(p), scaled(q));
                ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2), j)
            })
            .collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in near.iter().take(2) {
            let q = pts[j];
            for k in 1..SAMPLES {
                let t = k as f64 / SAMPLES as f64;
                augmented.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]), p[2] + t * (q[2] - p[2])]);
            }
        }
    }
    let kept: Vec<[f64; 3]> = nondominated_indices(&augmented).into_iter().map(|i| augmented[i]).collect();
    vup(&kept, bx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Logarithmic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterBound {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    #[serde(default = "linear")]
    pub scale: Scale,
}

fn linear() -> Scale {
    Scale::Linear
}

impl ParameterBound {
    pub fn new(name: &str, lower: f64, upper: f64, scale: Scale) -> Self {
        ParameterBound { name: name.to_string(), lower, upper, scale }
    }

    /// Maps a unit-interval coordinate to a parameter value.
    pub fn from_unit(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let v = match self.scale {
            Scale::Linear => self.lower + u * (self.upper - self.lower),
            Scale::Logarithmic => (self.lower.ln() + u * (self.upper.ln() - self.lower.ln())).exp(),
        };
        v.clamp(self.lower, self.upper)
    }

    pub fn to_unit(&self, v: f64) -> f64 {
        let u = match self.scale {
            Scale::Linear => (v - self.lower) / (self.upper - self.lower),
            Scale::Logarithmic => (v.ln() - self.lower.ln()) / (self.upper.ln() - self.lower.ln()),
        };
        u.clamp(0.0, 1.0)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lower && v <= self.upper
    }
}

/// Box bounds of a search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterSpec {
    pub bounds: Vec<ParameterBound>,
}

impl ParameterSpec {
    pub fn new(bounds: Vec<ParameterBound>) -> Result<Self, ParetoError> {
        let spec = ParameterSpec { bounds };
        spec.validate()?;
        Ok(spec)
    }

    /// Default tuning ranges, in [`ControllerKind::parameter_names`] order.
    pub fn default_for(kind: ControllerKind) -> Self {
        use Scale::*;
        let b = ParameterBound::new;
        let bounds = match kind {
            ControllerKind::Pid => {
                vec![b("kp", 0.01, 2.0, Linear), b("ki", 0.0, 1.0, Linear), b("kd", 0.0, 0.5, Linear), b("n", 1.0, 10.0, Linear)]
            }
            ControllerKind::Mfc => vec![
                b("kp", 0.0, 5.0, Linear),
                b("kd", 0.0, 50.0, Linear),
                b("alpha", 10.0, 5000.0, Logarithmic),
                b("tc", 0.02, 0.5, Linear),
            ],
            ControllerKind::Samfc => vec![
                b("kp", 0.0, 5.0, Linear),
                b("kd", 0.0, 50.0, Linear),
                b("alpha0", 10.0, 5000.0, Logarithmic),
                b("k_alpha", 0.0, 50.0, Linear),
                b("v0", 0.0, 100.0, Linear),
                b("tc", 0.02, 0.5, Linear),
            ],
        };
        ParameterSpec { bounds }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn names(&self) -> Vec<&str> {
        self.bounds.iter().map(|b| b.name.as_str()).collect()
    }

    pub fn validate(&self) -> Result<(), ParetoError> {
        if self.bounds.is_empty() {
            return Err(ParetoError::InvalidSpec("no parameters".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for b in &self.bounds {
            if !seen.insert(b.name.as_str()) {
                return Err(ParetoError::InvalidSpec(format!("duplicate parameter `{}`", b.name)));
            }
            if !(b.lower.is_finite() && b.upper.is_finite() && b.lower < b.upper) {
                return Err(ParetoError::InvalidSpec(format!("`{}`: need lower < upper, got [{}, {}]", b.name, b.lower, b.upper)));
            }
            if b.scale == Scale::Logarithmic && b.lower <= 0.0 {
                return Err(ParetoError::InvalidSpec(format!("`{}`: logarithmic scale needs positive bounds", b.name)));
            }
        }
        Ok(())
    }

    pub fn check(&self, p: &[f64]) -> Result<(), ParetoError> {
        if p.len() != self.dim() {
            return Err(ParetoError::InvalidSpec(format!("expected {} parameters, got {}", self.dim(), p.len())));
        }
        for (b, &v) in self.bounds.iter().zip(p) {
            if !b.contains(v) {
                return Err(ParetoError::OutOfBounds { name: b.name.clone(), value: v, lower: b.lower, upper: b.upper });
            }
        }
        Ok(())
    }

    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        self.bounds.iter().zip(u).map(|(b, &x)| b.from_unit(x)).collect()
    }

    /// Reorders the bounds to match `names`.
    pub fn reordered(&self, names: &[&str]) -> Result<Self, ParetoError> {
        let bounds = names
            .iter()
            .map(|n| {
                self.bounds
                    .iter()
                    .find(|b| b.name == *n)
                    .cloned()
                    .ok_or_else(|| ParetoError::InvalidSpec(format!("unknown parameter `{n}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        ParameterSpec::new(bounds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchOptions {
    /// Maximum number of evaluations.
    pub budget: usize,
    pub seed: u64,
    /// Poll step of new archive members, as a fraction of each range.
    pub initial_mesh: f64,
    /// Members whose mesh falls below this fraction are no longer polled.
    pub min_mesh: f64,
    pub max_mesh: f64,
    /// Objective value marking a failed evaluation. Failed archive members
    /// are never polled; while the archive holds nothing else, the search
    /// draws fresh space-filling batches instead.
    pub penalty: Option<f64>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { budget: 400, seed: 0, initial_mesh: 0.25, min_mesh: 1e-4, max_mesh: 0.5, penalty: None }
    }
}

impl SearchOptions {
    pub fn validate(&self) -> Result<(), ParetoError> {
        if self.budget < 50 {
            return Err(ParetoError::InvalidSpec(format!("budget must be at least 50, got {}", self.budget)));
        }
        if !(self.min_mesh > 0.0 && self.min_mesh <= self.initial_mesh && self.initial_mesh <= self.max_mesh) {
            return Err(ParetoError::InvalidSpec("need 0 < min_mesh <= initial_mesh <= max_mesh".into()));
        }
        Ok(())
    }
}

/// Result of a search: the front plus every evaluation in order.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub front: ParetoFront,
    pub evaluations: Vec<ObjectivePoint>,
}

struct Member {
    u: Vec<f64>,
    point: usize,
    mesh: f64,
    polls: usize,
}

fn name_key(seed: u64, name: &str) -> u64 {
    // FNV-1a over the name, mixed with the seed: gives every parameter its
    // own random stream independent of its position in the parameter list.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h ^ seed.rotate_left(17)
}

/// Latin hypercube sample of `n` points in the unit cube.
fn latin_hypercube(spec: &ParameterSpec, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; spec.dim()]; n];
    for (d, b) in spec.bounds.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(name_key(seed, &b.name));
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        for (i, s) in strata.into_iter().enumerate() {
            pts[i][d] = (s as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    pts
}

/// NSGA-II crowding distance of each point; boundary points get infinity.
pub fn crowding_distance(objs: &[&[f64]]) -> Vec<f64> {
    let n = objs.len();
    let mut dist = vec![0.0; n];
    if n == 0 {
        return dist;
    }
    let m = objs[0].len();
    for k in 0..m {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| objs[a][k].total_cmp(&objs[b][k]).then(a.cmp(&b)));
        let (lo, hi) = (objs[order[0]][k], objs[order[n - 1]][k]);
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        if hi > lo {
            for w in 1..n.saturating_sub(1) {
                dist[order[w]] += (objs[order[w + 1]][k] - objs[order[w - 1]][k]) / (hi - lo);
            }
        }
    }
    dist
}

fn unit_key(spec: &ParameterSpec, u: &[f64], canonical: &[usize]) -> Vec<(String, u64)> {
    canonical.iter().map(|&d| (spec.bounds[d].name.clone(), u[d].to_bits())).collect()
}

/// Crowding-guided multi-objective pattern search.
///
/// `evaluator` maps a parameter vector (spec order) to an objective point
/// and must not panic; failures should be reported as penalty objectives.
/// `replay` holds earlier evaluations of the same study (e.g. from a
/// checkpoint) that are reused instead of recomputed; `sink` sees every new
/// evaluation in deterministic order.
pub fn pareto_search<F>(
    spec: &ParameterSpec,
    evaluator: F,
    options: &SearchOptions,
    replay: &[ObjectivePoint],
    sink: &mut dyn FnMut(&ObjectivePoint),
) -> Result<SearchOutcome, ParetoError>
where
    F: Fn(&[f64]) -> ObjectivePoint + Sync,
{
    spec.validate()?;
    options.validate()?;
    let dim = spec.dim();
    // Poll directions and cache keys follow parameter names, not positions,
    // so a permuted spec explores the same points.
    let mut canonical: Vec<usize> = (0..dim).collect();
    canonical.sort_by(|&a, &b| spec.bounds[a].name.cmp(&spec.bounds[b].name));

    let mut cache: HashMap<Vec<u64>, ObjectivePoint> = HashMap::new();
    for p in replay {
        cache.insert(p.params.iter().map(|v| v.to_bits()).collect(), p.clone());
    }
    let mut evaluations: Vec<ObjectivePoint> = Vec::new();
    let mut seen: HashSet<Vec<(String, u64)>> = HashSet::new();
    let mut archive: Vec<Member> = Vec::new();

    let mut run_batch = |batch: Vec<Vec<f64>>, evaluations: &mut Vec<ObjectivePoint>| -> Vec<usize> {
        let params: Vec<Vec<f64>> = batch.iter().map(|u| spec.from_unit(u)).collect();
        let results: Vec<ObjectivePoint> = params
            .par_iter()
            .map(|p| {
                let key: Vec<u64> = p.iter().map(|v| v.to_bits()).collect();
                match cache.get(&key) {
                    Some(hit) => hit.clone(),
                    None => evaluator(p),
                }
            })
            .collect();
        let start = evaluations.len();
        for r in results {
            sink(&r);
            evaluations.push(r);
        }
        (start..evaluations.len()).collect()
    };

    // Inserts evaluated points into the archive; returns whether any entered.
    fn absorb(
        archive: &mut Vec<Member>,
        evaluations: &[ObjectivePoint],
        candidates: &[(Vec<f64>, usize)],
        mesh: f64,
    ) -> bool {
        let mut entered = false;
        for (u, idx) in candidates {
            let obj = &evaluations[*idx].objectives;
            let blocked = archive.iter().any(|m| {
                let a = &evaluations[m.point].objectives;
                a == obj || dominates(a, obj)
            });
            if blocked {
                continue;
            }
            archive.retain(|m| !dominates(obj, &evaluations[m.point].objectives));
            archive.push(Member { u: u.clone(), point: *idx, mesh, polls: 0 });
            entered = true;
        }
        entered
    }

    let n_init = (2 * dim).max(20);
    let failed = |obj: &[f64]| options.penalty.is_some_and(|p| obj.iter().any(|v| *v >= p));
    let mut restarts = 0u64;

    loop {
        let feasible = archive.iter().any(|m| !failed(&evaluations[m.point].objectives));
        if evaluations.is_empty() || !feasible {
            let remaining = options.budget - evaluations.len();
            if remaining == 0 {
                break;
            }
            let design_seed = options.seed.wrapping_add(restarts.wrapping_mul(0x9e37_79b9_7f4a_7c15));
            restarts += 1;
            let mut design = latin_hypercube(spec, n_init, design_seed);
            design.retain(|u| seen.insert(unit_key(spec, u, &canonical)));
            design.truncate(remaining);
            let idx = run_batch(design.clone(), &mut evaluations);
            let cands: Vec<(Vec<f64>, usize)> = design.into_iter().zip(idx).collect();
            absorb(&mut archive, &evaluations, &cands, options.initial_mesh);
            continue;
        }
        if evaluations.len() >= options.budget {
            break;
        }
        let pollable: Vec<usize> = (0..archive.len())
            .filter(|&i| archive[i].mesh >= options.min_mesh && !failed(&evaluations[archive[i].point].objectives))
            .collect();
        if pollable.is_empty() {
            break;
        }
        let objs: Vec<&[f64]> = archive.iter().map(|m| evaluations[m.point].objectives.as_slice()).collect();
        let crowd = crowding_distance(&objs);
        let finite_max = crowd.iter().copied().filter(|c| c.is_finite()).fold(0.0f64, f64::max);
        let cap = if finite_max > 0.0 { 2.0 * finite_max } else { 1.0 };
        let score = |i: usize| crowd[i].min(cap) / (1 + archive[i].polls) as f64;
        // Highest score wins; ties go to the lexicographically smallest
        // objective vector so the choice does not depend on archive order.
        let pick = *pollable
            .iter()
            .max_by(|&&a, &&b| {
                score(a).total_cmp(&score(b)).then_with(|| lex_cmp(objs[b], objs[a]))
            })
            .expect("pollable is non-empty");

        let base = archive[pick].u.clone();
        let mesh = archive[pick].mesh;
        let mut batch = Vec::with_capacity(2 * dim);
        for &d in &canonical {
            for sign in [1.0, -1.0] {
                let mut u = base.clone();
                u[d] = (u[d] + sign * mesh).clamp(0.0, 1.0);
                if u[d] == base[d] {
                    continue;
                }
                let key = unit_key(spec, &u, &canonical);
                if !seen.insert(key) {
                    continue;
                }
                batch.push(u);
            }
        }
        batch.truncate(options.budget - evaluations.len());
        let success = if batch.is_empty() {
            false
        } else {
            let idx = run_batch(batch.clone(), &mut evaluations);
            let cands: Vec<(Vec<f64>, usize)> = batch.into_iter().zip(idx).collect();
            let grown = (mesh * 2.0).min(options.max_mesh);
            absorb(&mut archive, &evaluations, &cands, grown)
        };
        // The polled member may have been displaced by one of its children.
        if let Some(m) = archive.iter_mut().find(|m| m.u == base) {
            m.polls += 1;
            m.mesh = if success { (mesh * 2.0).min(options.max_mesh) } else { mesh * 0.5 };
        }
    }

    let front = front_filter(&evaluations);
    Ok(SearchOutcome { front, evaluations })
}

/// A controller tuning study: which structure, where it is evaluated and
/// how runs are configured.
#[derive(Debug, Clone)]
pub struct Study {
    pub kind: ControllerKind,
    pub spec: ParameterSpec,
    /// Named trajectories; objectives are maxima over all of them.
    pub trajectories: Vec<(String, Trajectory)>,
    /// One noise seed per trajectory, fixed for every candidate.
    pub seeds: Vec<u64>,
    pub vehicle: VehicleParams,
    pub sensor: SensorModel,
    pub sim: SimOptions,
    pub spectral: SpectralConfig,
}

impl Study {
    pub fn new(kind: ControllerKind, trajectories: Vec<(String, Trajectory)>, base_seed: u64) -> Self {
        let seeds = (0..trajectories.len() as u64).map(|i| base_seed.wrapping_add(i)).collect();
        Study {
            kind,
            spec: ParameterSpec::default_for(kind),
            trajectories,
            seeds,
            vehicle: VehicleParams::default(),
            sensor: SensorModel::default(),
            sim: SimOptions::default(),
            spectral: SpectralConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ParetoError> {
        self.spec.validate()?;
        let names = self.spec.names();
        if names != self.kind.parameter_names() {
            return Err(ParetoError::InvalidStudy(format!(
                "{} parameters must be {:?}, got {:?}",
                self.kind.name(),
                self.kind.parameter_names(),
                names
            )));
        }
        if self.trajectories.is_empty() {
            return Err(ParetoError::InvalidStudy("no trajectories".into()));
        }
        if self.seeds.len() != self.trajectories.len() {
            return Err(ParetoError::InvalidStudy("need one seed per trajectory".into()));
        }
        Ok(())
    }

    /// Worst-case objectives of `p` over the study's trajectories.
    pub fn evaluate(&self, p: &[f64]) -> Result<ObjectivePoint, ParetoError> {
        self.spec.check(p)?;
        let config = self.kind.config_from_vector(p).map_err(|e| ParetoError::InvalidStudy(e.to_string()))?;
        Ok(evaluate_config(&config, p.to_vec(), self))
    }
}

/// Worst-case objectives of a fixed configuration over the study's
/// trajectories. Invalid configurations and failed runs score the penalty.
pub fn evaluate_config(config: &ControllerConfig, params: Vec<f64>, study: &Study) -> ObjectivePoint {
    let mut objectives = vec![0.0f64; 3];
    let mut per_trajectory = Vec::with_capacity(study.trajectories.len());
    for ((name, traj), &seed) in study.trajectories.iter().zip(&study.seeds) {
        let sensor = SensorModel { seed, ..study.sensor };
        let outcome = LateralController::new(*config, study.sim.control_period)
            .ok()
            .and_then(|mut law| simulate_run(traj, &mut law, &study.vehicle, &sensor, &study.sim).ok())
            .and_then(|log| metrics::report(&log, &study.spectral).ok());
        let m = match outcome {
            Some(r) => TrajectoryMetrics {
                trajectory: name.clone(),
                seed,
                completed: r.completed,
                iae: r.iae,
                mle: r.mle,
                m_epsilon: r.m_epsilon,
                m_zeta: r.m_zeta,
            },
            None => TrajectoryMetrics {
                trajectory: name.clone(),
                seed,
                completed: false,
                iae: FAILURE_PENALTY,
                mle: f64::INFINITY,
                m_epsilon: FAILURE_PENALTY,
                m_zeta: FAILURE_PENALTY,
            },
        };
        for (o, v) in objectives.iter_mut().zip([m.iae, m.m_epsilon, m.m_zeta]) {
            *o = o.max(if v.is_finite() { v } else { FAILURE_PENALTY });
        }
        per_trajectory.push(m);
    }
    ObjectivePoint { params, objectives, per_trajectory }
}

/// Runs the tuning search of `study`.
pub fn optimize(
    study: &Study,
    options: &SearchOptions,
    replay: &[ObjectivePoint],
    sink: &mut dyn FnMut(&ObjectivePoint),
) -> Result<SearchOutcome, ParetoError> {
    study.validate()?;
    let penalty = |p: &[f64]| ObjectivePoint::new(p.to_vec(), vec![FAILURE_PENALTY; 3]);
    let options = SearchOptions { penalty: Some(FAILURE_PENALTY), ..*options };
    pareto_search(&study.spec, |p| study.evaluate(p).unwrap_or_else(|_| penalty(p)), &options, replay, sink)
}

/// Reads an append-only evaluation ledger (one JSON object per line).
/// A truncated final line from an interrupted write is ignored.
pub fn read_checkpoint<R: BufRead>(reader: R) -> Result<Vec<ObjectivePoint>, ParetoError> {
    let lines: Vec<String> = reader
        .lines()
        .collect::<Result<_, _>>()
        .map_err(|e| ParetoError::Checkpoint(e.to_string()))?;
    let mut out = Vec::with_capacity(lines.len());
    let last = lines.len().saturating_sub(1);
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(p) => out.push(p),
            Err(_) if i == last => break,
            Err(e) => return Err(ParetoError::Checkpoint(format!("line {}: {e}", i + 1))),
        }
    }
    Ok(out)
}

pub fn write_checkpoint_line<W: Write>(mut w: W, point: &ObjectivePoint) -> std::io::Result<()> {
    let line = serde_json::to_string(point).map_err(std::io::Error::other)?;
    writeln!(w, "{line}")
}

/// Preset configuration evaluated under a study (used for reference points).
pub fn evaluate_preset(name: &str, study: &Study) -> Option<ObjectivePoint> {
    let config = ControllerConfig::preset(name)?;
    Some(evaluate_config(&config, config.to_vector(), study))
}
