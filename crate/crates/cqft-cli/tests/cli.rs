use std::process::{Command, Output};

use serde_json::Value;

fn cqft(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cqft")).args(args).env_remove("CQFT_OUT_DIR").output().expect("cqft runs")
}

fn report(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = cqft(&["bkar-check", "--frobnicate", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("frobnicate"));
    assert_eq!(cqft(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn bkar_check_on_three_objects() {
    let o = cqft(&["bkar-check", "--n", "3", "--trials", "3"]);
    assert!(o.status.success());
    let r = report(&o);
    assert_eq!(r["pass"], true);
    for t in r["trials"].as_array().unwrap() {
        assert_eq!(t["forests_visited"], 7);
        assert_eq!(t["z_at_one"], t["forest_sum"]);
    }
    let o = cqft(&["bkar-check", "--n", "4", "--variant", "2", "--trials", "4"]);
    assert!(o.status.success());
    assert_eq!(cqft(&["bkar-check", "--variant", "3"]).status.code(), Some(2));
}

#[test]
fn rgflow_writes_its_table_to_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_cqft"))
        .args(["rgflow", "--model", "phi4", "--lambda0", "0.1", "--steps", "10000"])
        .env("CQFT_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    let r = report(&o);
    let ratio = r["checks"][0]["measured"].as_f64().unwrap();
    assert!((0.99..=1.01).contains(&ratio), "{ratio}");
    let table = std::fs::read_to_string(dir.path().join("rgflow_phi4.csv")).unwrap();
    assert!(table.starts_with("j,lambda,delta_m2,delta_m2_scaled,delta_z3\n"));
    assert_eq!(table.lines().count(), 10_002);
}

#[test]
fn config_sections_fill_unset_flags_and_reject_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "[bkar-check]\nn = 2\ntrials = 2\n").unwrap();
    let p = path.to_str().unwrap();
    let r = report(&cqft(&["--config", p, "bkar-check"]));
    assert_eq!(r["n"], 2);
    assert_eq!(r["trials"].as_array().unwrap().len(), 2);
    let r = report(&cqft(&["--config", p, "bkar-check", "--n", "3"]));
    assert_eq!(r["n"], 3);

    std::fs::write(&path, "[bkar-check]\nobjects = 2\n").unwrap();
    let o = cqft(&["--config", p, "bkar-check"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("objects"));
    std::fs::write(&path, "[bkar]\nn = 2\n").unwrap();
    assert_eq!(cqft(&["--config", p, "bkar-check"]).status.code(), Some(2));
}

#[test]
fn failing_checks_set_the_exit_status() {
    // three steps are far from the asymptotic regime
    let o = cqft(&["rgflow", "--lambda0", "0.1", "--steps", "3"]);
    let r = report(&o);
    assert_eq!(r["pass"], false, "{r}");
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn tour_reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let a = cqft(&["paper-tour", "--criteria", "2,6,9", "--out-dir", out]);
    let b = cqft(&["paper-tour", "--criteria", "2,6,9"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let r = report(&a);
    assert_eq!(r["schema"], cqft::tour::SCHEMA);
    assert!(r["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true && c["source"].is_string()));
    let saved = std::fs::read(dir.path().join("report.json")).unwrap();
    assert_eq!(String::from_utf8(saved).unwrap().trim_end(), String::from_utf8_lossy(&a.stdout).trim_end());
    let table = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + r["checks"].as_array().unwrap().len());
    let stderr = String::from_utf8_lossy(&a.stderr);
    assert_eq!(stderr.lines().filter(|l| l.starts_with("criterion")).count(), 3);
    assert_eq!(cqft(&["paper-tour", "--criteria", "15"]).status.code(), Some(2));
}

#[test]
fn reduced_ensembles_widen_the_monte_carlo_error() {
    let full = report(&cqft(&["paper-tour", "--criteria", "3"]));
    let reduced = report(&cqft(&["paper-tour", "--criteria", "3", "--reduced"]));
    assert_eq!(reduced["config"]["ensemble"], "reduced");
    let se = |r: &Value| r["checks"][0]["stderr"].as_f64().unwrap();
    assert!(se(&reduced) > 1.5 * se(&full), "{} vs {}", se(&reduced), se(&full));
    assert_eq!(reduced["checks"][0]["tolerance"], full["checks"][0]["tolerance"]);
}

#[test]
fn powercount_reads_theory_and_diagram_files() {
    let dir = tempfile::tempdir().unwrap();
    let theory = dir.path().join("theory.toml");
    std::fs::write(
        &theory,
        "dim = 4\ntau = 2\n[[fields]]\nname = \"phi\"\nbeta = 1.0\nbeta_tilde = 3.0\n[[vertices]]\nfields = [\"phi\", \"phi\", \"phi\", \"phi\"]\n",
    )
    .unwrap();
    let diagram = dir.path().join("bubble.toml");
    let line = "{ ends = [[0, \"phi\"], [1, \"phi\"]], scale = 3 }";
    let leg = |v: usize| format!("{{ vertex = {v}, field = \"phi\", scale = 0 }}");
    std::fs::write(
        &diagram,
        format!("vertices = 2\ninternal = [{line}, {line}]\nexternal = [{}, {}, {}, {}]\n", leg(0), leg(0), leg(1), leg(1)),
    )
    .unwrap();
    let (t, d) = (theory.to_str().unwrap(), diagram.to_str().unwrap());
    let plain = report(&cqft(&["powercount", "--theory", t, "--diagram", d]));
    assert_eq!(plain["n_ext_max"], 5);
    assert_eq!(plain["diagram"]["quasi_local"]["dangerous"], true);
    assert_eq!(plain["diagram"]["exponent"], 0.0);
    // one height-3 level, lowered by τ + 1 = 3 per unit height
    let renormalized = report(&cqft(&["powercount", "--theory", t, "--diagram", d, "--renormalized"]));
    assert_eq!(renormalized["diagram"]["exponent"], -9.0);
    assert_eq!(cqft(&["powercount", "--theory", "/nonexistent.toml"]).status.code(), Some(2));
}
