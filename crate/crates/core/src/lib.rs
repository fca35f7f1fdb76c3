//! Lateral control laboratory for an autonomous car.
//!
//! * [`path_track`]: reference paths, projection and speed planning.
//! * [`vehicle_sim`]: dynamic bicycle model with steering actuator and sensor noise.
//! * [`controllers`]: PID and model-free (iPD) lateral controllers.
//! * [`metrics`]: tracking accuracy and spectral stability scores.
//! * [`pareto_opt`]: multi-objective tuning and front quality.

pub mod circuits;
pub mod controllers;
pub mod path_track;
pub mod units;
pub mod vehicle_sim;
pub mod metrics;
pub mod pareto_opt;
