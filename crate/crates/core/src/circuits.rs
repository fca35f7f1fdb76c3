//! Built-in benchmark circuits.
//!
//! Three synthetic closed circuits, each paired with its own dynamic
//! constraint set:
//!
//! | circuit | character                        | v_max    | a_long | a_decel | a_lat |
//! |---------|----------------------------------|----------|--------|---------|-------|
//! | C1      | urban, sharp low-speed hairpins  | 35 km/h  | 0.4    | 0.7     | 1.0   |
//! | C2      | fast, long straights             | 100 km/h | 1.5    | 2.0     | 4.0   |
//! | C3      | mixed                            | 70 km/h  | 2.0    | 2.0     | 2.0   |

use crate::path_track::{plan_speed, DynamicConstraints, PathError, PathSpec, Trajectory};

const C1: &str = include_str!("../circuits/c1.toml");
const C2: &str = include_str!("../circuits/c2.toml");
const C3: &str = include_str!("../circuits/c3.toml");

pub const NAMES: [&str; 3] = ["C1", "C2", "C3"];

/// Source text of a built-in circuit definition.
pub fn source(name: &str) -> Option<&'static str> {
    match name.to_ascii_uppercase().as_str() {
        "C1" => Some(C1),
        "C2" => Some(C2),
        "C3" => Some(C3),
        _ => None,
    }
}

pub fn spec(name: &str) -> Option<PathSpec> {
    source(name).map(|text| toml::from_str(text).expect("built-in circuit definitions parse"))
}

/// Plans the named circuit under `constraints`, or under its own constraint
/// set when `None`.
pub fn trajectory(name: &str, constraints: Option<DynamicConstraints>) -> Result<Trajectory, PathError> {
    let spec = spec(name).ok_or_else(|| PathError::InvalidPath(format!("unknown circuit `{name}`")))?;
    let path = spec.build()?;
    let constraints = constraints
        .or(spec.constraints)
        .ok_or_else(|| PathError::InvalidConstraints(format!("circuit `{name}` has no constraints")))?;
    Ok(plan_speed(&path, &constraints))
}

/// The three benchmark trajectories with their own constraints.
pub fn benchmark() -> Vec<Trajectory> {
    NAMES.iter().map(|n| trajectory(n, None).expect("built-in circuits are valid")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circuits_close_and_carry_their_constraints() {
        for (name, preset) in NAMES.iter().zip(["T1", "T2", "T3"]) {
            let spec = spec(name).unwrap();
            assert_eq!(spec.constraints, DynamicConstraints::preset(preset), "{name}");
            let path = spec.build().unwrap();
            let (a, b) = (path.points()[0], *path.points().last().unwrap());
            assert!((a.x - b.x).hypot(a.y - b.y) < 1e-3, "{name} closes");
        }
    }

    #[test]
    fn every_circuit_has_a_long_straight() {
        // Spectral stability scoring needs straights of at least 5 s.
        for t in benchmark() {
            let pts = t.path.points();
            let mut best = 0.0f64;
            let mut run = 0.0;
            for i in 1..pts.len() {
                if pts[i].kappa.abs() < 0.01 {
                    run += (pts[i].s - pts[i - 1].s) / t.v_ref[i];
                    best = best.max(run);
                } else {
                    run = 0.0;
                }
            }
            assert!(best > 10.0, "longest straight only {best} s");
        }
    }
}
