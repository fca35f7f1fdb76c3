use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use mfclab_core::controllers::ControllerConfig;
use mfclab_core::metrics::{self, MetricsReport};
use mfclab_core::pareto_opt::{self, AcceptableBox, ObjectivePoint, Study};
use mfclab_core::path_track::Trajectory;
use mfclab_core::vehicle_sim::{simulate_controller, SensorModel, SimLog};
use rayon::prelude::*;

use crate::config::StudyConfig;
use crate::export;
use crate::record::{RunDir, RunMetrics};
use crate::CliError;

pub const CHECKPOINT_FILE: &str = "checkpoint.jsonl";

pub struct Context {
    pub study: StudyConfig,
    pub out_root: PathBuf,
}

impl Context {
    fn trajectories(&self) -> Result<Vec<(String, Trajectory)>, CliError> {
        self.study.trajectories(Path::new("."))
    }

    /// Noise seeds, one per trajectory, counting up from the configured seed.
    fn seeds(&self, n: usize) -> Vec<u64> {
        (0..n as u64).map(|i| self.study.sensor.seed.wrapping_add(i)).collect()
    }

    fn controller(&self) -> Result<ControllerConfig, CliError> {
        self.study.controller.ok_or_else(|| {
            CliError::Config("no controller configured: add a [controller] section or pass --preset".into())
        })
    }

    fn run_dir(&self, command: &str) -> Result<RunDir, CliError> {
        let dir = RunDir::create(&self.out_root, command, &self.study.to_toml())?;
        println!("run directory: {}", dir.path().display());
        Ok(dir)
    }
}

pub fn plan(ctx: &Context) -> Result<(), CliError> {
    let trajectories = ctx.trajectories()?;
    let mut dir = ctx.run_dir("plan")?;
    let result = (|| {
        for (name, traj) in &trajectories {
            let file = format!("plan-{name}.csv");
            export::write_plan(dir.create_file(&file)?, traj)?;
            println!("{name}: {:.1} m, {} samples -> {file}", traj.path.length(), traj.path.len());
        }
        Ok(())
    })();
    dir.finish(result)
}

/// One simulated run and its score.
struct Outcome {
    controller: String,
    trajectory: String,
    log: SimLog,
    report: MetricsReport,
}

fn simulate_all(
    ctx: &Context,
    jobs: &[(ControllerConfig, String, &str, &Trajectory, u64)],
) -> Result<Vec<Outcome>, CliError> {
    let s = &ctx.study;
    jobs.par_iter()
        .map(|(config, label, name, traj, seed)| {
            let sensor = SensorModel { seed: *seed, ..s.sensor };
            let log = simulate_controller(traj, config, &s.vehicle, &sensor, &s.simulation)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let report = metrics::report(&log, &s.metrics).map_err(|e| CliError::Config(e.to_string()))?;
            Ok(Outcome { controller: label.clone(), trajectory: name.to_string(), log, report })
        })
        .collect()
}

/// Writes the log and its plot exports; returns the record entry.
fn persist(dir: &mut RunDir, stem: &str, o: &Outcome) -> Result<RunMetrics, CliError> {
    let log_file = format!("log-{stem}.csv");
    let mut w = dir.create_file(&log_file)?;
    o.log.write_csv(&mut w)?;
    w.flush()?;
    export::write_track(dir.create_file(&format!("track-{stem}.csv"))?, &o.log)?;
    export::write_lateral_error(dir.create_file(&format!("error-{stem}.csv"))?, &o.log)?;
    export::write_control(dir.create_file(&format!("control-{stem}.csv"))?, &o.log)?;
    let mut m = RunMetrics::from_report(&o.controller, &o.trajectory, o.log.seed, &o.report);
    m.failure = o.log.failure.as_ref().map(|f| f.to_string());
    m.log = Some(log_file);
    Ok(m)
}

fn print_table(rows: &[RunMetrics]) {
    println!("{:<8} {:<10} {:>5} {:>9} {:>9} {:>8} {:>8}", "ctrl", "trajectory", "done", "IAE", "MLE", "M_eps", "M_zeta");
    for r in rows {
        println!(
            "{:<8} {:<10} {:>5} {:>9.4} {:>9.4} {:>8.3} {:>8.3}",
            r.controller, r.trajectory, if r.completed { "yes" } else { "no" }, r.iae, r.mle, r.m_epsilon, r.m_zeta
        );
    }
}

pub fn simulate(ctx: &Context) -> Result<(), CliError> {
    let config = ctx.controller()?;
    let trajectories = ctx.trajectories()?;
    let seeds = ctx.seeds(trajectories.len());
    let name = config.kind().name().to_string();
    let jobs: Vec<_> =
        trajectories.iter().zip(&seeds).map(|((t, traj), &seed)| (config, name.clone(), t.as_str(), traj, seed)).collect();
    let mut dir = ctx.run_dir("simulate")?;
    dir.record_mut().seeds = seeds.clone();
    let result = (|| {
        let outcomes = simulate_all(ctx, &jobs)?;
        let mut rows = Vec::new();
        for o in &outcomes {
            let m = persist(&mut dir, &o.trajectory, o)?;
            let summary = serde_json::to_string_pretty(&m).map_err(|e| CliError::Internal(e.to_string()))?;
            dir.write_text(&format!("summary-{}.json", o.trajectory), &(summary + "\n"))?;
            dir.record_mut().runs.push(m.clone());
            rows.push(m);
        }
        print_table(&rows);
        let failed: Vec<String> = rows
            .iter()
            .filter(|r| !r.completed)
            .map(|r| format!("{}: {}", r.trajectory, r.failure.as_deref().unwrap_or("incomplete")))
            .collect();
        if failed.is_empty() {
            Ok(())
        } else {
            Err(CliError::Simulation(format!("run failed on {}", failed.join("; "))))
        }
    })();
    dir.finish(result)
}

pub fn metrics(ctx: &Context, log: &Path, sections: Option<&Path>) -> Result<(), CliError> {
    let file = fs::File::open(log).map_err(|e| CliError::Config(format!("cannot open `{}`: {e}", log.display())))?;
    let log = SimLog::read_csv(BufReader::new(file)).map_err(|e| CliError::Config(format!("{}: {e}", log.display())))?;
    let report = metrics::report(&log, &ctx.study.metrics).map_err(|e| CliError::Config(e.to_string()))?;
    print!("{}", export::metrics_text(&report));
    if let Some(path) = sections {
        export::write_sections(fs::File::create(path)?, &report)?;
    }
    Ok(())
}

fn acceptable_box(study: &StudyConfig) -> AcceptableBox {
    study.optimizer.as_ref().map(|o| o.acceptable_box).unwrap_or_default()
}

pub fn optimize(ctx: &Context, resume: Option<&Path>) -> Result<(), CliError> {
    let opt = ctx
        .study
        .optimizer
        .clone()
        .ok_or_else(|| CliError::Config("optimize needs an [optimizer] section".into()))?;
    let trajectories = ctx.trajectories()?;
    let seeds = ctx.seeds(trajectories.len());
    let s = &ctx.study;
    let study = Study {
        kind: opt.controller,
        spec: opt.parameter_spec(),
        trajectories,
        seeds: seeds.clone(),
        vehicle: s.vehicle,
        sensor: s.sensor,
        sim: s.simulation,
        spectral: s.metrics,
    };
    study.validate().map_err(|e| CliError::Config(e.to_string()))?;

    let mut dir = match resume {
        Some(path) => {
            let dir = RunDir::reopen(path, &s.to_toml())?;
            println!("resuming: {}", dir.path().display());
            dir
        }
        None => ctx.run_dir("optimize")?,
    };
    dir.record_mut().seeds = seeds;
    let result = (|| {
        let checkpoint = dir.path().join(CHECKPOINT_FILE);
        let replay = if checkpoint.exists() {
            let points = pareto_opt::read_checkpoint(BufReader::new(fs::File::open(&checkpoint)?))
                .map_err(|e| CliError::Config(e.to_string()))?;
            // Drop a torn final line before appending to the ledger.
            let tmp = dir.path().join(format!("{CHECKPOINT_FILE}.tmp"));
            let mut w = std::io::BufWriter::new(fs::File::create(&tmp)?);
            for p in &points {
                pareto_opt::write_checkpoint_line(&mut w, p)?;
            }
            w.flush()?;
            drop(w);
            fs::rename(&tmp, &checkpoint)?;
            points
        } else {
            Vec::new()
        };
        println!("{} cached evaluations, budget {}", replay.len(), opt.budget);

        let mut ledger = dir.append_file(CHECKPOINT_FILE)?;
        let mut skip = replay.len();
        let mut io_error = None;
        let mut sink = |p: &ObjectivePoint| {
            // Replayed points come back first and in ledger order.
            if skip > 0 {
                skip -= 1;
                return;
            }
            let r = pareto_opt::write_checkpoint_line(&mut ledger, p).and_then(|_| ledger.flush());
            if let Err(e) = r {
                io_error.get_or_insert(e);
            }
        };
        let outcome = pareto_opt::optimize(&study, &opt.search_options(), &replay, &mut sink)
            .map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(e) = io_error {
            return Err(e.into());
        }

        let names = opt.controller.parameter_names();
        let front = &outcome.front.points;
        export::write_front(dir.create_file("front.csv")?, names, front)?;
        export::write_projection(dir.create_file("front_iae_m_eps.csv")?, front, 1)?;
        export::write_projection(dir.create_file("front_iae_m_zeta.csv")?, front, 2)?;
        let bx = opt.acceptable_box;
        let objectives = outcome.front.objectives();
        let v = pareto_opt::vup(&objectives, &bx);
        let vi = pareto_opt::vup_interpolated(&objectives, &bx);
        let in_box = objectives.iter().filter(|o| o.iter().zip(bx.corner()).all(|(a, c)| *a <= c)).count();
        let summary = format!(
            "controller = {}\nevaluations = {}\nfront_size = {}\nfront_in_box = {in_box}\nbox_volume = {}\nvup = {v}\nvup_interpolated = {vi}\n",
            opt.controller.name(),
            outcome.evaluations.len(),
            front.len(),
            bx.volume()
        );
        dir.write_text("vup.txt", &summary)?;
        print!("{summary}");
        Ok(())
    })();
    dir.finish(result)
}

pub fn vup(ctx: &Context, front: &Path) -> Result<(), CliError> {
    let file = fs::File::open(front).map_err(|e| CliError::Config(format!("cannot open `{}`: {e}", front.display())))?;
    let points = export::read_front_objectives(file)?;
    println!("{}", pareto_opt::vup(&points, &acceptable_box(&ctx.study)));
    Ok(())
}

pub fn compare(ctx: &Context) -> Result<(), CliError> {
    let trajectories = ctx.trajectories()?;
    let seeds = ctx.seeds(trajectories.len());
    let mut jobs = Vec::new();
    for preset in ControllerConfig::PRESETS {
        let config = ControllerConfig::preset(preset).expect("built-in preset");
        for ((name, traj), &seed) in trajectories.iter().zip(&seeds) {
            jobs.push((config, config.kind().name().to_string(), name.as_str(), traj, seed));
        }
    }
    let mut dir = ctx.run_dir("compare")?;
    dir.record_mut().seeds = seeds.clone();
    let result = (|| {
        let outcomes = simulate_all(ctx, &jobs)?;
        let mut rows = Vec::new();
        for o in &outcomes {
            let m = persist(&mut dir, &format!("{}-{}", o.controller, o.trajectory), o)?;
            dir.record_mut().runs.push(m.clone());
            rows.push(m);
        }
        export::write_compare(dir.create_file("compare.csv")?, &rows)?;
        print_table(&rows);
        Ok(())
    })();
    dir.finish(result)
}
