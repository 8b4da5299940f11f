use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL_GRID: &str = "1e3,1024,3";

fn gnslab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gnslab"))
        .current_dir(dir)
        .args(args)
        .arg("--quiet")
        .output()
        .expect("binary runs")
}

fn json_file(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn stderr_report(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("an error line on stderr");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("{e}: {line}"))
}

#[test]
fn deficit_of_the_optimizer_vanishes() {
    let dir = tempfile::tempdir().unwrap();
    let out = gnslab(dir.path(), &["deficit", "--grid", SMALL_GRID, "--out", "o"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let status: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(status["status"], "ok");
    let s = json_file(&dir.path().join("o/summary.json"));
    let d = s["data"][0]["report"]["gns_deficit"].as_f64().unwrap();
    assert!(d.abs() < 1e-6, "{d}");
    assert_eq!(s["probes"], Value::Array(vec![]));
    let csv = std::fs::read_to_string(dir.path().join("o/deficit.csv")).unwrap();
    assert!(csv.starts_with("label,grad_u_sq,"), "{csv}");
}

#[test]
fn negative_kappa_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[run]\nkappa = -1.0\n").unwrap();
    let out = gnslab(dir.path(), &["evolve-fd", "-c", "bad.toml", "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
    let r = stderr_report(&out);
    assert_eq!(r["kind"], "validation");
    assert!(r["message"].as_str().unwrap().contains("kappa must be positive"), "{r}");
    assert!(!dir.path().join("o").exists());
}

#[test]
fn malformed_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("typo.toml"), "[run]\nkapa = 1.0\n").unwrap();
    for args in [
        vec!["deficit", "-c", "typo.toml"],
        vec!["deficit", "-c", "missing.toml"],
        vec!["deficit", "--grid", "1e3,abc,3"],
        vec!["frobnicate"],
    ] {
        let out = gnslab(dir.path(), &args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert_eq!(stderr_report(&out)["exit_code"], 2, "{args:?}");
    }
    assert!(std::fs::read_dir(dir.path()).unwrap().count() == 1, "only the config remains");
}

#[test]
fn help_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    let out = gnslab(dir.path(), &["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("evolve-fd"));
}

#[test]
fn flow_outputs_and_checkpoint_restart() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.toml"),
        "[grid]\nn_cells = 512\n[run]\nt_end = 0.3\n[output]\nstride = 2\nformats = [\"csv\", \"json\", \"plot\"]\n\
         [[initial]]\nfamily = \"perturbed_sigma\"\nshape = \"ring\"\neps = 0.2\n",
    )
    .unwrap();
    let out = gnslab(dir.path(), &["evolve-fd", "-c", "run.toml", "--out", "a"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("a/runs/perturbed_sigma_ring_0.2");
    let diag = std::fs::read_to_string(run.join("diagnostics.csv")).unwrap();
    let mut lines = diag.lines();
    assert_eq!(lines.next(), Some("t,mass,F,hls_deficit,H,D,S,N1,l32,mu_fit"));
    assert_eq!(lines.last().unwrap().split(',').next(), Some("0.3"));
    assert!(run.join("plot_H.csv").exists());
    let s = json_file(&dir.path().join("a/summary.json"));
    assert_eq!(s["runs"][0]["h_monotone"], true);

    std::fs::write(
        dir.path().join("restart.toml"),
        "[grid]\nn_cells = 512\n[run]\nt_end = 0.1\n[[initial]]\nfamily = \"checkpoint\"\n\
         path = \"a/runs/perturbed_sigma_ring_0.2/final.ckpt\"\n",
    )
    .unwrap();
    let out = gnslab(dir.path(), &["evolve-fd", "-c", "restart.toml", "--out", "b"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("b/runs/checkpoint_final/final.ckpt").exists());

    // a checkpoint on another grid is a validation failure
    let out = gnslab(dir.path(), &["evolve-fd", "-c", "restart.toml", "--grid", SMALL_GRID, "--out", "c"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("c").exists());
}

#[test]
fn probes_must_match_the_command() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("p.toml"), "[[probes]]\nkind = \"interp\"\n").unwrap();
    let out = gnslab(dir.path(), &["fit", "-c", "p.toml", "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_report(&out)["field"], "probes[0]");
}

#[test]
fn reruns_are_byte_identical_and_manifest_ignores_the_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("fit.toml"),
        "[grid]\nn_cells = 1024\n[[initial]]\nfamily = \"perturbed_v\"\nshape = \"gaussian\"\neps = 0.05\n\
         [[probes]]\nkind = \"sixth\"\n[[probes]]\nkind = \"fourth\"\np = 1.5\n",
    )
    .unwrap();
    for o in ["x", "y"] {
        let out = gnslab(dir.path(), &["fit", "-c", "fit.toml", "--out", o]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["fit.csv", "summary.json", "manifest.json"] {
        let a = std::fs::read(dir.path().join("x").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("y").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let m = json_file(&dir.path().join("x/manifest.json"));
    assert_eq!(m["command"], "fit");
    assert_eq!(m["files"].as_array().unwrap().len(), 2);
    let s = json_file(&dir.path().join("x/summary.json"));
    assert_eq!(s["probes"].as_array().unwrap().len(), 2);
}

#[test]
fn exhausted_step_control_exits_3_after_writing() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("stiff.toml"),
        "[grid]\nn_cells = 256\n[run]\nflow = \"ks\"\nt_end = 1.0\n\
         [run.controls]\ndt_initial = 1e-3\ndt_min = 1e-3\nmax_rel_change = 1e-9\n\
         [[initial]]\nfamily = \"perturbed_sigma\"\nshape = \"ring\"\neps = 0.5\n",
    )
    .unwrap();
    let out = gnslab(dir.path(), &["evolve-ks", "-c", "stiff.toml", "--out", "o"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stdout));
    let status: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(status["status"], "incomplete");
    assert!(dir.path().join("o/summary.json").exists());
}
