use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mfclab_cli::export::read_plan;
use mfclab_core::path_track::Path as RefPath;
use mfclab_core::vehicle_sim::{SimLog, VehicleParams};

const SHORT_PATH: &str = r#"
[[trajectories]]
name = "bend"
segments = [
  { type = "straight", length = 40.0 },
  { type = "arc", radius = 30.0, sweep_deg = 60.0, direction = "left" },
  { type = "straight", length = 110.0 },
]
constraints = "S1"
"#;

fn mfclab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfclab"))
        .args(args)
        .env("MFCLAB_OUT", out)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

/// The single run directory created under `root` by `command`.
fn run_dir(root: &Path, command: &str) -> PathBuf {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with(&format!("{command}-")))
        .collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs.pop().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn key_values(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

#[test]
fn help_exits_zero_and_bad_usage_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(mfclab(&["--help"], tmp.path()).status.code(), Some(0));
    assert_eq!(mfclab(&["--version"], tmp.path()).status.code(), Some(0));
    assert_eq!(mfclab(&["frobnicate"], tmp.path()).status.code(), Some(1));
    assert_eq!(mfclab(&["plan", "--jobs", "many"], tmp.path()).status.code(), Some(1));
}

#[test]
fn config_errors_exit_one_and_name_the_problem() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "empty.toml", "[controller]\n");
    let o = mfclab(&["--config", cfg.to_str().unwrap(), "simulate"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("controller.type required"));

    let cfg = write_config(tmp.path(), "typo.toml", "[vehicle]\nmas = 1200.0\n");
    let o = mfclab(&["--config", cfg.to_str().unwrap(), "plan"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("mas"));

    let cfg = write_config(tmp.path(), "missing.toml", "[[trajectories]]\nfile = \"nowhere.toml\"\n");
    assert_eq!(mfclab(&["--config", cfg.to_str().unwrap(), "plan"], tmp.path()).status.code(), Some(1));
    assert_eq!(mfclab(&["--preset", "lqr", "simulate"], tmp.path()).status.code(), Some(1));
}

#[test]
fn plan_writes_the_trajectory_csv_into_a_hashed_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "study.toml", SHORT_PATH);
    let o = mfclab(&["--config", cfg.to_str().unwrap(), "plan"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = run_dir(tmp.path(), "plan");
    let name = dir.file_name().unwrap().to_string_lossy().into_owned();
    let parts: Vec<&str> = name.split('-').collect();
    assert_eq!(parts.len(), 3);
    assert_eq!(parts[2].len(), 8);
    let csv = fs::read_to_string(dir.join("plan-bend.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "s,x,y,heading,kappa,v_ref");
    let record = fs::read_to_string(dir.join("run_record.json")).unwrap();
    assert!(record.contains("\"status\": \"ok\"") && record.contains(&parts[2].to_string()));
}

#[test]
fn simulate_then_metrics_reproduces_the_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "study.toml", SHORT_PATH);
    let o = mfclab(&["--config", cfg.to_str().unwrap(), "--preset", "samfc_table3", "--seed", "4", "simulate"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = run_dir(tmp.path(), "simulate");
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("summary-bend.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 4);
    assert_eq!(summary["completed"], true);

    let log = dir.join("log-bend.csv");
    let sections = tmp.path().join("sections.csv");
    let o = mfclab(&["metrics", log.to_str().unwrap(), "--sections", sections.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let kv = key_values(&stdout(&o));
    for (key, json_key) in [("iae", "iae"), ("mle", "mle"), ("m_eps", "m_epsilon"), ("m_zeta", "m_zeta")] {
        let printed: f64 = kv.iter().find(|(k, _)| k == key).unwrap().1.parse().unwrap();
        assert_eq!(printed, summary[json_key].as_f64().unwrap(), "{key}");
    }
    assert!(fs::read_to_string(sections).unwrap().starts_with("metric,t_start,power,score"));
    for f in ["track-bend.csv", "error-bend.csv", "control-bend.csv"] {
        assert!(dir.join(f).exists(), "{f}");
    }
}

#[test]
fn reimported_plan_reprojects_the_logged_deviation() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "study.toml", SHORT_PATH);
    let cfg = cfg.to_str().unwrap();
    assert_eq!(mfclab(&["--config", cfg, "plan"], tmp.path()).status.code(), Some(0));
    assert_eq!(mfclab(&["--config", cfg, "--preset", "pid_table3", "simulate"], tmp.path()).status.code(), Some(0));
    let (points, _) = read_plan(fs::File::open(run_dir(tmp.path(), "plan").join("plan-bend.csv")).unwrap()).unwrap();
    let path = RefPath::from_points(points, false).unwrap();
    let file = fs::File::open(run_dir(tmp.path(), "simulate").join("log-bend.csv")).unwrap();
    let log = SimLog::read_csv(std::io::BufReader::new(file)).unwrap();
    let d = VehicleParams::default().lf;
    let mut hint = 0;
    for i in 0..log.len() {
        let p = path.project(log.x[i] + d * log.psi[i].cos(), log.y[i] + d * log.psi[i].sin(), hint).unwrap();
        hint = p.index;
        assert!((p.y1 - log.y1[i]).abs() < 1e-9, "tick {i}: {} vs {}", p.y1, log.y1[i]);
    }
}

#[test]
fn failed_simulation_exits_two_and_keeps_partial_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{SHORT_PATH}\n[controller]\ntype = \"pid\"\nkp = -3.0\nkd = 0.0\nn = 5.0\n");
    let cfg = write_config(tmp.path(), "bad.toml", &text);
    let o = mfclab(&["--config", cfg.to_str().unwrap(), "simulate"], tmp.path());
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = run_dir(tmp.path(), "simulate");
    assert!(dir.join("FAILED").exists());
    assert!(dir.join("log-bend.csv").exists());
    let record = fs::read_to_string(dir.join("run_record.json")).unwrap();
    assert!(record.contains("\"status\": \"failed\""));
}

#[test]
fn vup_of_a_single_origin_point_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let front = write_config(tmp.path(), "front.csv", "kp,iae,m_eps,m_zeta\n0.5,0,0,0\n");
    let o = mfclab(&["vup", front.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "0");
    let empty = write_config(tmp.path(), "empty.csv", "iae,m_eps,m_zeta\n");
    let o = mfclab(&["vup", empty.to_str().unwrap()], tmp.path());
    assert_eq!(stdout(&o).trim().parse::<f64>().unwrap(), 0.35 * 0.25 * 0.7);
}

#[test]
fn noiseless_compare_repeats_bitwise() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{SHORT_PATH}\n[sensor]\nsigma_xy = 0.0\nsigma_psi = 0.0\n");
    let cfg = write_config(tmp.path(), "cmp.toml", &text);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        let o = mfclab(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "compare"], tmp.path());
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (da, db) = (run_dir(&a, "compare"), run_dir(&b, "compare"));
    let hash = |d: &Path| d.file_name().unwrap().to_string_lossy().rsplit('-').next().unwrap().to_string();
    assert_eq!(hash(&da), hash(&db));
    let table = fs::read_to_string(da.join("compare.csv")).unwrap();
    assert_eq!(table.lines().next().unwrap(), "controller,trajectory,seed,completed,iae,mle,m_eps,m_zeta");
    assert_eq!(table.lines().count(), 4);
    for entry in fs::read_dir(&da).unwrap() {
        let name = entry.unwrap().file_name();
        if name.to_string_lossy().ends_with(".csv") {
            assert_eq!(fs::read(da.join(&name)).unwrap(), fs::read(db.join(&name)).unwrap(), "{name:?}");
        }
    }
}

#[test]
fn interrupted_optimization_resumes_to_the_same_front() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!(
        "{SHORT_PATH}\n[optimizer]\ncontroller = \"pid\"\nbudget = 60\nseed = 5\nbounds = [\n  \
         {{ name = \"kp\", lower = 0.05, upper = 1.0 }},\n  {{ name = \"ki\", lower = 0.0, upper = 0.5 }},\n  \
         {{ name = \"kd\", lower = 0.0, upper = 1.0 }},\n  {{ name = \"n\", lower = 2.0, upper = 20.0 }},\n]\n"
    );
    let cfg = write_config(tmp.path(), "opt.toml", &text);
    let cfg = cfg.to_str().unwrap();
    let o = mfclab(&["--config", cfg, "--jobs", "2", "optimize"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = run_dir(tmp.path(), "optimize");
    let front = fs::read(dir.join("front.csv")).unwrap();
    let ledger = fs::read_to_string(dir.join("checkpoint.jsonl")).unwrap();
    assert_eq!(ledger.lines().count(), 60);
    let projection = fs::read_to_string(dir.join("front_iae_m_eps.csv")).unwrap();
    assert_eq!(projection.lines().count(), String::from_utf8_lossy(&front).lines().count());

    // Simulate a crash: keep 25 entries and half of the next line.
    let lines: Vec<&str> = ledger.lines().collect();
    let torn = format!("{}\n{}", lines[..25].join("\n"), &lines[25][..lines[25].len() / 2]);
    fs::write(dir.join("checkpoint.jsonl"), torn).unwrap();
    fs::remove_file(dir.join("front.csv")).unwrap();
    let o = mfclab(&["--config", cfg, "optimize", "--resume", dir.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("25 cached evaluations"));
    assert_eq!(fs::read(dir.join("front.csv")).unwrap(), front);
    assert_eq!(fs::read_to_string(dir.join("checkpoint.jsonl")).unwrap(), ledger);

    // A different configuration cannot resume this directory.
    let other = write_config(tmp.path(), "other.toml", &text.replace("seed = 5", "seed = 6"));
    let o = mfclab(&["--config", other.to_str().unwrap(), "optimize", "--resume", dir.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn example_configurations_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(&root).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        if text.contains("[[segments]]") {
            continue; // path definition files, referenced by studies
        }
        mfclab_cli::config::StudyConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 4);
}
