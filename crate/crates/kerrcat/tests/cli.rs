use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kerrcat"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).env_remove("KERRCAT_LOG").output().expect("spawn kerrcat")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_cfg(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run_exp(exp: &str, cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![exp, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

fn results(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("results.json")).unwrap()).unwrap()
}

#[test]
fn list_has_all_experiments_in_stable_order() {
    let a = run(&["list"]);
    assert!(a.status.success());
    let text = stdout(&a);
    assert_eq!(text.lines().count(), 13);
    assert!(text.contains("eps2-threshold → Fig. 4e"));
    assert!(text.lines().next().unwrap().starts_with("spectrum"));
    assert_eq!(text, stdout(&run(&["list"])));
}

#[test]
fn shipped_configs_validate_clean() {
    let mut seen = std::collections::BTreeSet::new();
    for entry in std::fs::read_dir(configs()).unwrap() {
        let p = entry.unwrap().path();
        let o = run(&["validate", p.to_str().unwrap()]);
        assert!(o.status.success(), "{}: {}", p.display(), stdout(&o));
        let text = stdout(&o);
        assert!(text.starts_with("ok: ") && text.lines().count() == 1, "{}: {text}", p.display());
        seen.insert(text.trim().trim_start_matches("ok: ").to_string());
    }
    // every registry entry has a shipped config
    assert_eq!(seen.len(), 13);
}

#[test]
fn validate_names_missing_key() {
    let dir = tempfile::tempdir().unwrap();
    let body = std::fs::read_to_string(configs().join("kappa-diss.ini")).unwrap();
    let body: String = body.lines().filter(|l| !l.starts_with("kappa_b_out_Hz")).map(|l| format!("{l}\n")).collect();
    let p = write_cfg(dir.path(), "c.ini", &body);
    let o = run(&["validate", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(64));
    assert!(stdout(&o).contains("kappa_b_out_Hz"), "{}", stdout(&o));
}

#[test]
fn validate_suggests_for_extraneous_key() {
    let dir = tempfile::tempdir().unwrap();
    let body = std::fs::read_to_string(configs().join("zro-fidelity.ini")).unwrap() + "zro_shot = 5\n";
    let p = write_cfg(dir.path(), "c.ini", &body);
    let o = run(&["validate", p.to_str().unwrap()]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("warning") && text.contains("zro_shot") && text.contains("zro_shots"), "{text}");
}

#[test]
fn run_rejects_unknown_key() {
    let dir = tempfile::tempdir().unwrap();
    let body = std::fs::read_to_string(configs().join("zro-fidelity.ini")).unwrap() + "bogus = 1\n";
    let p = write_cfg(dir.path(), "c.ini", &body);
    let o = run_exp("zro-fidelity", &p, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(64));
    assert!(stderr(&o).contains("bogus"));
}

#[test]
fn negative_kerr_is_usage_error_with_field() {
    let dir = tempfile::tempdir().unwrap();
    let body = std::fs::read_to_string(configs().join("spectrum.ini")).unwrap().replace("K_over_2pi_Hz = 1.74e6", "K_over_2pi_Hz = -1.74e6");
    let p = write_cfg(dir.path(), "c.ini", &body);
    let o = run_exp("spectrum", &p, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(64));
    assert!(stderr(&o).contains("K_over_2pi_Hz"), "{}", stderr(&o));
}

#[test]
fn unknown_experiment_and_bad_flags_are_usage_errors() {
    let cfg = configs().join("spectrum.ini");
    assert_eq!(run(&["bogus", "--config", cfg.to_str().unwrap()]).status.code(), Some(64));
    assert_eq!(run(&["spectrum"]).status.code(), Some(64));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_config_file_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_exp("spectrum", &dir.path().join("nope.ini"), &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(74));
}

#[test]
fn spectrum_csv_has_degenerate_ground_manifold() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_exp("spectrum", &configs().join("spectrum.ini"), dir.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("manifolds.csv")).unwrap();
    let row0: Vec<f64> = csv.lines().nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(row0[0], 0.0);
    assert!(row0[1] < 1.0, "splitting {} Hz", row0[1]);
    let doc = results(dir.path());
    assert_eq!(doc["schema"], "kerrcat.run/1");
    assert_eq!(doc["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(doc["figure"], "Fig. 1c");
    assert_eq!(doc["config"]["K_over_2pi_Hz"], "1.74e6");
}

#[test]
fn steady_leakage_default_config_row() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_exp("steady-leakage", &configs().join("steady-leakage.ini"), dir.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let p1 = results(dir.path())["results"]["points"][0]["p1"].as_f64().unwrap();
    assert!((p1 - 0.091).abs() < 0.005, "p1 = {p1}");
    assert!(std::fs::read_to_string(dir.path().join("leakage.csv")).unwrap().starts_with("g_diss_over_2pi_Hz,p0,p1,p2\n"));
}

#[test]
fn identical_seed_reproduces_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("zro-fidelity.ini");
    let strip = |mut v: Value| {
        v.as_object_mut().unwrap().remove("wall_time_s");
        v
    };
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert!(run_exp("zro-fidelity", &cfg, &a, &["--jobs", "2"]).status.success());
    assert!(run_exp("zro-fidelity", &cfg, &b, &[]).status.success());
    assert!(run_exp("zro-fidelity", &cfg, &c, &["--seed", "8"]).status.success());
    assert_eq!(strip(results(&a)), strip(results(&b)));
    assert_ne!(results(&a)["results"], results(&c)["results"]);
    assert_eq!(results(&c)["seed"], 8);
}
