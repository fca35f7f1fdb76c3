//! CSV artifacts. Column order is part of the interface:
//!
//! | file                     | columns                                                    |
//! |--------------------------|------------------------------------------------------------|
//! | `plan-<name>.csv`        | s, x, y, heading, kappa, v_ref                             |
//! | `log-<name>.csv`         | the SimLog columns                                         |
//! | `track-<name>.csv`       | t, x, y, psi                                               |
//! | `error-<name>.csv`       | t, y1, y1_meas                                             |
//! | `control-<name>.csv`     | t, u_fb, delta_ff, delta_cmd, delta, alpha                 |
//! | `sections.csv`           | metric, t_start, power, score                              |
//! | `front.csv`              | controller parameters..., iae, m_eps, m_zeta               |
//! | `front_iae_m_eps.csv`    | iae, m_eps                                                 |
//! | `front_iae_m_zeta.csv`   | iae, m_zeta                                                |
//! | `compare.csv`            | controller, trajectory, seed, completed, iae, mle, m_eps, m_zeta |

use std::io::{Read, Write};

use mfclab_core::metrics::MetricsReport;
use mfclab_core::pareto_opt::ObjectivePoint;
use mfclab_core::path_track::{PathPoint, Trajectory};
use mfclab_core::vehicle_sim::SimLog;

use crate::record::RunMetrics;
use crate::CliError;

pub const PLAN_HEADER: [&str; 6] = ["s", "x", "y", "heading", "kappa", "v_ref"];
pub const OBJECTIVE_HEADER: [&str; 3] = ["iae", "m_eps", "m_zeta"];
pub const COMPARE_HEADER: [&str; 8] = ["controller", "trajectory", "seed", "completed", "iae", "mle", "m_eps", "m_zeta"];

fn nums(values: &[f64]) -> Vec<String> {
    values.iter().map(|v| v.to_string()).collect()
}

fn write_table<W: Write>(w: W, header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> Result<(), CliError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    for row in rows {
        out.write_record(nums(&row))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_plan<W: Write>(w: W, traj: &Trajectory) -> Result<(), CliError> {
    let rows = traj.path.points().iter().zip(&traj.v_ref).map(|(p, v)| vec![p.s, p.x, p.y, p.heading, p.kappa, *v]);
    write_table(w, &PLAN_HEADER, rows)
}

/// Path samples and reference speeds of a plan CSV.
pub fn read_plan<R: Read>(r: R) -> Result<(Vec<PathPoint>, Vec<f64>), CliError> {
    let mut rdr = csv::Reader::from_reader(r);
    if rdr.headers()?.iter().collect::<Vec<_>>() != PLAN_HEADER {
        return Err(CliError::Config(format!("plan CSV header must be {}", PLAN_HEADER.join(","))));
    }
    let mut points = Vec::new();
    let mut v_ref = Vec::new();
    for rec in rdr.records() {
        let v = parse_row(&rec?)?;
        points.push(PathPoint { s: v[0], x: v[1], y: v[2], heading: v[3], kappa: v[4] });
        v_ref.push(v[5]);
    }
    Ok((points, v_ref))
}

fn parse_row(rec: &csv::StringRecord) -> Result<Vec<f64>, CliError> {
    rec.iter()
        .map(|f| f.trim().parse::<f64>().map_err(|e| CliError::Config(format!("bad number `{f}`: {e}"))))
        .collect()
}

pub fn write_track<W: Write>(w: W, log: &SimLog) -> Result<(), CliError> {
    let rows = (0..log.len()).map(|i| vec![log.t[i], log.x[i], log.y[i], log.psi[i]]);
    write_table(w, &["t", "x", "y", "psi"], rows)
}

pub fn write_lateral_error<W: Write>(w: W, log: &SimLog) -> Result<(), CliError> {
    let rows = (0..log.len()).map(|i| vec![log.t[i], log.y1[i], log.y1_meas[i]]);
    write_table(w, &["t", "y1", "y1_meas"], rows)
}

pub fn write_control<W: Write>(w: W, log: &SimLog) -> Result<(), CliError> {
    let rows =
        (0..log.len()).map(|i| vec![log.t[i], log.u_fb[i], log.delta_ff[i], log.delta_cmd[i], log.delta[i], log.alpha[i]]);
    write_table(w, &["t", "u_fb", "delta_ff", "delta_cmd", "delta", "alpha"], rows)
}

pub fn write_sections<W: Write>(w: W, report: &MetricsReport) -> Result<(), CliError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["metric", "t_start", "power", "score"])?;
    for (name, sections) in [("m_eps", &report.eps_sections), ("m_zeta", &report.zeta_sections)] {
        for s in sections {
            out.write_record([name.to_string(), s.t_start.to_string(), s.power.to_string(), s.score.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Key-value rendering of a metrics report.
pub fn metrics_text(report: &MetricsReport) -> String {
    format!(
        "completed = {}\niae = {}\nmle = {}\nm_eps = {}\nm_zeta = {}\neps_sections = {}\nzeta_sections = {}\n",
        report.completed,
        report.iae,
        report.mle,
        report.m_epsilon,
        report.m_zeta,
        report.eps_sections.len(),
        report.zeta_sections.len()
    )
}

pub fn write_front<W: Write>(w: W, parameter_names: &[&str], points: &[ObjectivePoint]) -> Result<(), CliError> {
    let header: Vec<&str> = parameter_names.iter().copied().chain(OBJECTIVE_HEADER).collect();
    let rows = points.iter().map(|p| p.params.iter().chain(&p.objectives).copied().collect());
    write_table(w, &header, rows)
}

/// Two-objective projection of a front: `iae` against objective `which`
/// (1 for m_eps, 2 for m_zeta).
pub fn write_projection<W: Write>(w: W, points: &[ObjectivePoint], which: usize) -> Result<(), CliError> {
    let rows = points.iter().map(|p| vec![p.objectives[0], p.objectives[which]]);
    write_table(w, &[OBJECTIVE_HEADER[0], OBJECTIVE_HEADER[which]], rows)
}

/// Objective triples of a front CSV, located by the `iae`, `m_eps` and
/// `m_zeta` columns.
pub fn read_front_objectives<R: Read>(r: R) -> Result<Vec<[f64; 3]>, CliError> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    let mut cols = [0usize; 3];
    for (c, name) in cols.iter_mut().zip(OBJECTIVE_HEADER) {
        *c = headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CliError::Config(format!("front CSV has no `{name}` column")))?;
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let mut p = [0.0; 3];
        for (v, &c) in p.iter_mut().zip(&cols) {
            let field = rec.get(c).unwrap_or("");
            *v = field.trim().parse().map_err(|e| CliError::Config(format!("bad number `{field}`: {e}")))?;
        }
        out.push(p);
    }
    Ok(out)
}

pub fn write_compare<W: Write>(w: W, rows: &[RunMetrics]) -> Result<(), CliError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(COMPARE_HEADER)?;
    for r in rows {
        out.write_record([
            r.controller.clone(),
            r.trajectory.clone(),
            r.seed.to_string(),
            r.completed.to_string(),
            r.iae.to_string(),
            r.mle.to_string(),
            r.m_epsilon.to_string(),
            r.m_zeta.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
