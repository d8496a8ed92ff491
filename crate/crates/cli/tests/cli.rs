use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
model = "linear"
d = 2
lengths = [8.0, 12.0, 16.0]
points_per_unit = 4.0

[ensemble]
kind = "matern_hardcore"
rho_proposal = 0.04
delta = 0.1
realizations = 20
seed = 3
"#;

fn sediment(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sediment")).args(args).output().expect("binary runs")
}

fn setup(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn verify_passes_and_fails_on_a_loose_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(&dir.path().join("v"));
    let ok = sediment(&["verify", "--out", &out]);
    assert!(ok.status.success(), "{}{}", stdout(&ok), String::from_utf8_lossy(&ok.stderr));
    let text = stdout(&ok);
    assert!(text.lines().count() >= 5);
    assert!(text.lines().all(|l| l.starts_with("PASS")), "{text}");
    assert!(dir.path().join("v/verify_log.json").exists());

    let loose = sediment(&["verify", "--out", &out, "--set", "tol=1e-1"]);
    assert_eq!(loose.status.code(), Some(1));
    assert!(stdout(&loose).lines().any(|l| l.starts_with("FAIL")));
}

#[test]
fn missing_inputs_are_configuration_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = s(&dir.path().join("nowhere"));
    assert_eq!(sediment(&["stats", "--input", &missing, "--out", &missing]).status.code(), Some(2));
    assert_eq!(sediment(&["sample"]).status.code(), Some(2));
    let cfg = setup(dir.path(), CONFIG);
    assert_eq!(sediment(&["sample", "--config", &cfg, "--set", "d=7"]).status.code(), Some(2));
    assert_eq!(sediment(&["sample", "--config", &cfg, "--set", "nonsense"]).status.code(), Some(2));
}

#[test]
fn sampling_is_deterministic_and_feeds_stats() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), CONFIG);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = sediment(&["sample", "--config", &cfg, "--out", &s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for l in ["L8", "L12", "L16"] {
        let file = format!("configs/{l}/config_000007.json");
        assert_eq!(fs::read(a.join(&file)).unwrap(), fs::read(b.join(&file)).unwrap());
    }
    let o = sediment(&["stats", "--out", &s(&a)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["g2.csv", "structure_factor.csv", "number_variance.csv"] {
        assert!(a.join("stats/L16").join(name).exists(), "{name}");
    }
    let log: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("stats_log.json")).unwrap()).unwrap();
    assert_eq!(log["sets"].as_array().unwrap().len(), 3);
    assert!(log["sets"][0]["hyperuniformity_metric"]["value"].is_number());

    let c = dir.path().join("c");
    assert!(sediment(&["sample", "--config", &cfg, "--out", &s(&c), "--seed", "4"]).status.success());
    let file = "configs/L16/config_000007.json";
    assert_ne!(fs::read(a.join(file)).unwrap(), fs::read(c.join(file)).unwrap());
}

#[test]
fn sweep_writes_results_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), CONFIG);
    let out = dir.path().join("sweep");
    let first = sediment(&["sweep", "--config", &cfg, "--out", &s(&out), "--workers", "2"]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    assert!(stdout(&first).contains("fluctuation exponent"));
    let result = fs::read_to_string(out.join("result.json")).unwrap();
    assert_eq!(csv::Reader::from_path(out.join("result.csv")).unwrap().records().count(), 3);
    for name in ["speed_points.csv", "speed_fit.csv", "fluctuation_points.csv", "fluctuation_fit.csv"] {
        assert!(out.join("plots").join(name).exists());
    }
    fs::remove_file(out.join("records/L12/r000005.json")).unwrap();
    fs::remove_file(out.join("result.json")).unwrap();
    let second = sediment(&["sweep", "--config", &cfg, "--out", &s(&out)]);
    assert!(second.status.success());
    assert_eq!(fs::read_to_string(out.join("result.json")).unwrap(), result);

    let other = dir.path().join("other");
    assert!(sediment(&["sweep", "--config", &cfg, "--out", &s(&other), "--seed", "99"]).status.success());
    assert_ne!(fs::read_to_string(other.join("result.json")).unwrap(), result);
}

#[test]
fn solve_reports_identities() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(
        dir.path(),
        &CONFIG.replace("model = \"linear\"", "model = \"full\"").replace("points_per_unit = 4.0", "points_per_unit = 8.0"),
    );
    let out = dir.path().join("solve");
    let o = sediment(&["solve", "--config", &cfg, "--out", &s(&out), "--index", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("converged"));
    for name in ["particles.csv", "velocity.raw", "pressure.raw", "solve_log.json"] {
        assert!(out.join(name).exists(), "{name}");
    }
    let log: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("solve_log.json")).unwrap()).unwrap();
    assert!(log["energy_identity_residual"].as_f64().unwrap() <= 1e-6);
    assert!(log["settling_identity"].is_object());
    assert_eq!(log["effective_config"]["ensemble"]["seed"], 3);

    let starved = sediment(&["solve", "--config", &cfg, "--out", &s(&out), "--set", "max_iterations=1", "--set", "tol=1e-15"]);
    assert_eq!(starved.status.code(), Some(3));
    let log: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("solve_log.json")).unwrap()).unwrap();
    assert!(log["residual_history"].is_array());
}
