use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;
use thinfilm::report::{read_convergence_csv, read_moments_csv, read_trace_csv, CONVERGENCE_COLUMNS};

const MODEL: &str = r#"
[model]
bulk = { kind = "mass-spring", alpha = 1.0, beta = 0.5 }
surface = { kind = "mass-spring", alpha = 1.0, beta = 0.5 }
"#;

const CANONICAL: &str = r#"
[field]
family = "trig"
v = [{ amp = 1.0, k1 = 3.141592653589793, k2 = 3.141592653589793 }]
"#;

const SWEEP: &str = r#"
[sweep]
regime = "ultrathin"
lx = 1.0
ly = 1.0
eps = [0.125, 0.0625, 0.03125]
nu = 3
delta = 0.1

[quadrature]
per_unit = 128
"#;

fn thinfilm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thinfilm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn config(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn out_dir(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

#[test]
fn identities_hold_up_to_fifty_layers() {
    let o = thinfilm(&["identities", "--nu-max", "50"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.ends_with(" ok")).count(), 50);
    assert!(text.lines().any(|l| l.starts_with("nu    3") && l.contains("1/32")));
}

#[test]
fn exit_codes_are_distinct() {
    assert_eq!(code(&thinfilm(&["no-such-command"])), 1);
    assert_eq!(code(&thinfilm(&["identities", "--nu-max", "1"])), 2);
    let dir = TempDir::new().unwrap();
    let bad = config(&dir, "bad.toml", &format!("{MODEL}\nunknown_key = 3\n"));
    assert_eq!(code(&thinfilm(&["converge", "--config", &bad])), 2);
    let missing = dir.path().join("absent.toml");
    assert_eq!(code(&thinfilm(&["forms", "--config", missing.to_str().unwrap()])), 4);
    // a sweep without a field is a configuration error
    let no_field = config(&dir, "nofield.toml", &format!("{MODEL}{SWEEP}"));
    assert_eq!(
        code(&thinfilm(&[
            "converge",
            "--config",
            &no_field,
            "--out",
            &out_dir(&dir, "o")
        ])),
        2
    );
}

#[test]
fn zero_field_sweep_has_zero_gaps() {
    let dir = TempDir::new().unwrap();
    let cfg = config(
        &dir,
        "zero.toml",
        &format!("{MODEL}\n[field]\nfamily = \"zero\"\n{SWEEP}"),
    );
    let out = out_dir(&dir, "zero");
    let o = thinfilm(&["converge", "--config", &cfg, "--out", &out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_convergence_csv(fs::File::open(Path::new(&out).join("convergence.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.gap_abs == 0.0 && r.e_limit == 0.0));
}

#[test]
fn canonical_sweep_is_monotone_and_thread_independent() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, "canon.toml", &format!("{MODEL}{CANONICAL}{SWEEP}"));
    let (a, b) = (out_dir(&dir, "one"), out_dir(&dir, "two"));
    assert_eq!(
        code(&thinfilm(&[
            "--threads",
            "1",
            "converge",
            "--config",
            &cfg,
            "--out",
            &a
        ])),
        0
    );
    assert_eq!(
        code(&thinfilm(&[
            "--threads",
            "2",
            "converge",
            "--config",
            &cfg,
            "--out",
            &b
        ])),
        0
    );
    let bytes = |d: &str| fs::read(Path::new(d).join("convergence.csv")).unwrap();
    assert_eq!(bytes(&a), bytes(&b));
    let text = String::from_utf8(bytes(&a)).unwrap();
    assert_eq!(text.lines().next().unwrap(), CONVERGENCE_COLUMNS.join(","));
    let rows = read_convergence_csv(text.as_bytes()).unwrap();
    assert!(rows.windows(2).all(|w| w[1].gap_abs < w[0].gap_abs));
    assert!(Path::new(&a).join("barrier.json").exists());
}

#[test]
fn recovery_round_trips_through_energy() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, "canon.toml", &format!("{MODEL}{CANONICAL}{SWEEP}"));
    let out = out_dir(&dir, "rec");
    assert_eq!(code(&thinfilm(&["converge", "--config", &cfg, "--out", &out])), 0);
    assert_eq!(
        code(&thinfilm(&["recover", "--config", &cfg, "--out", &out, "--level", "1"])),
        0
    );
    let stored = Path::new(&out).join("recovery.json");
    let o = thinfilm(&["energy", "--config", &cfg, "--input", stored.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let rows = read_convergence_csv(fs::File::open(Path::new(&out).join("convergence.csv")).unwrap()).unwrap();
    let e = report["e_scaled"].as_f64().unwrap();
    assert!((e - rows[1].e_scaled).abs() <= 1e-12 * e);
    assert_eq!(
        code(&thinfilm(&["recover", "--config", &cfg, "--out", &out, "--level", "7"])),
        2
    );
}

#[test]
fn limit_matches_the_sweep_limit() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, "canon.toml", &format!("{MODEL}{CANONICAL}{SWEEP}"));
    let out = out_dir(&dir, "lim");
    assert_eq!(code(&thinfilm(&["converge", "--config", &cfg, "--out", &out])), 0);
    let rows = read_convergence_csv(fs::File::open(Path::new(&out).join("convergence.csv")).unwrap()).unwrap();
    let o = thinfilm(&["limit", "--config", &cfg, "--nu", "3"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["e_limit"].as_f64().unwrap(), rows[0].e_limit);
    let thin: serde_json::Value = serde_json::from_str(&stdout(&thinfilm(&["limit", "--config", &cfg]))).unwrap();
    assert!(thin["e_limit"].as_f64().unwrap() < rows[0].e_limit);
    // a force term needs its section
    assert_eq!(code(&thinfilm(&["limit", "--config", &cfg, "--with-force"])), 2);
}

#[test]
fn strain_and_forms_outputs() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir, "canon.toml", &format!("{MODEL}{CANONICAL}{SWEEP}"));
    let out = out_dir(&dir, "st");
    assert_eq!(code(&thinfilm(&["strain", "--config", &cfg, "--out", &out])), 0);
    let rows = read_moments_csv(fs::File::open(Path::new(&out).join("moments.csv")).unwrap()).unwrap();
    assert_eq!(rows.len() % 3, 0);
    let worst = |eps: f64| rows.iter().filter(|r| r.eps == eps).map(|r| r.gap).fold(0.0, f64::max);
    assert!(worst(0.03125) < worst(0.125));
    assert_eq!(
        code(&thinfilm(&[
            "forms", "--config", &cfg, "--out", &out, "--format", "json"
        ])),
        0
    );
    let forms: serde_json::Value =
        serde_json::from_slice(&fs::read(Path::new(&out).join("forms.json")).unwrap()).unwrap();
    assert_eq!(forms["cell"].as_array().unwrap().len(), 24);
    assert!(forms["min_eigenvalue_centered"].as_f64().unwrap() >= -1e-10);
}

#[test]
fn minimize_writes_a_monotone_trace() {
    let dir = TempDir::new().unwrap();
    let text = format!(
        "seed = 3\n{MODEL}\n[minimize]\neps = 0.125\nnu = 2\nn1 = 8\nn2 = 8\nperturbation = 0.05\noptions = {{ max_iter = 500, rel_tol = 1e-8 }}\n"
    );
    let cfg = config(&dir, "min.toml", &text);
    let out = out_dir(&dir, "min");
    let o = thinfilm(&["minimize", "--config", &cfg, "--out", &out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let trace = read_trace_csv(fs::File::open(Path::new(&out).join("trace.csv")).unwrap()).unwrap();
    assert!(trace.windows(2).all(|w| w[1].energy <= w[0].energy));
    assert!(trace.last().unwrap().energy <= 1e-8 * trace[0].energy);
    // same seed, same trace
    let again = out_dir(&dir, "again");
    assert_eq!(code(&thinfilm(&["minimize", "--config", &cfg, "--out", &again])), 0);
    assert_eq!(
        fs::read(Path::new(&out).join("trace.csv")).unwrap(),
        fs::read(Path::new(&again).join("trace.csv")).unwrap()
    );
    assert!(Path::new(&out).join("minimized.json").exists());
}
