//! End-to-end tests of the binary: exit codes, file outputs, determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn dib() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dib"))
}

fn write(dir: &Path, name: &str, content: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, content).unwrap();
    path
}

fn p4(dir: &Path) -> PathBuf {
    write(
        dir,
        "p4.json",
        r#"{"labels":["a","b","c","d"],"p":[0.4,0.4,0.1,0.1]}"#,
    )
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

#[test]
fn solve_beta_zero_is_constant() {
    let dir = TempDir::new().unwrap();
    let p = p4(dir.path());
    let out_path = dir.path().join("r.json");
    let out = run(dib()
        .args(["solve", "--family", "di", "--beta", "0"])
        .arg("--dist")
        .arg(&p)
        .arg("--out")
        .arg(&out_path));
    assert_eq!(code(&out), 0, "{out:?}");
    let v: Value = serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(v["units"], "nats");
    assert!(v["result"]["i_nats"].as_f64().unwrap().abs() < 1e-9);
    assert_eq!(v["result"]["eff_card"], 1);
}

#[test]
fn solve_lambda_hits_target_and_ignores_display_units() {
    let dir = TempDir::new().unwrap();
    let p = p4(dir.path());
    let out_nats = dir.path().join("nats.json");
    let out_bits = dir.path().join("bits.json");
    let out = run(dib()
        .args(["solve", "--family", "di", "--lambda", "0.1927448"])
        .arg("--dist")
        .arg(&p)
        .arg("--out")
        .arg(&out_nats));
    assert_eq!(code(&out), 0, "{out:?}");
    let v: Value = serde_json::from_str(&fs::read_to_string(&out_nats).unwrap()).unwrap();
    let d = v["result"]["d_nats"].as_f64().unwrap();
    assert!((d - 0.1927448).abs() < 1e-4, "d = {d}");
    assert_eq!(v["result"]["eff_card"], 2);
    let out = run(dib()
        .args(["solve", "--family", "di", "--lambda", "0.1927448", "--units", "bits"])
        .arg("--dist")
        .arg(&p)
        .arg("--out")
        .arg(&out_bits));
    assert_eq!(code(&out), 0);
    assert_eq!(
        fs::read(&out_nats).unwrap(),
        fs::read(&out_bits).unwrap(),
        "files must store nats regardless of display units"
    );
}

#[test]
fn solve_infeasible_lambda_exits_3() {
    let dir = TempDir::new().unwrap();
    let p = p4(dir.path());
    let out = run(dib()
        .args(["solve", "--family", "di", "--lambda", "9.9"])
        .arg("--dist")
        .arg(&p)
        .arg("--out")
        .arg(dir.path().join("r.json")));
    assert_eq!(code(&out), 3, "{out:?}");
}

#[test]
fn bad_input_exits_1() {
    let dir = TempDir::new().unwrap();
    let bad = write(dir.path(), "bad.json", r#"{"labels":["a"],"p":[0.5]}"#);
    let out = run(dib()
        .args(["solve", "--family", "di", "--beta", "1"])
        .arg("--dist")
        .arg(&bad)
        .arg("--out")
        .arg(dir.path().join("r.json")));
    assert_eq!(code(&out), 1, "{out:?}");
}

#[test]
fn anneal_writes_deterministic_trace_with_group_column() {
    let dir = TempDir::new().unwrap();
    let p = p4(dir.path());
    let g = write(
        dir.path(),
        "g.json",
        r#"{"generators":[{"images":[1,0,2,3]},{"images":[0,1,3,2]}]}"#,
    );
    let run_once = |name: &str| {
        let out_path = dir.path().join(name);
        let out = run(dib()
            .args(["anneal", "--family", "di", "--betas", "geometric:10,0.01,20"])
            .arg("--dist")
            .arg(&p)
            .arg("--group")
            .arg(format!("G={}", g.display()))
            .arg("--out")
            .arg(&out_path));
        assert_eq!(code(&out), 0, "{out:?}");
        fs::read_to_string(&out_path).unwrap()
    };
    let a = run_once("a.csv");
    let b = run_once("b.csv");
    assert_eq!(a, b, "identical invocations must produce identical bytes");
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines.len(), 21);
    assert!(lines[0].ends_with(",div_G"));
    // the swap group fixes p, so every residual stays at noise level
    for line in &lines[1..] {
        let residual: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(residual.abs() <= 1e-10, "{line}");
    }
}

#[test]
fn single_point_anneal_matches_solve() {
    let dir = TempDir::new().unwrap();
    let p = p4(dir.path());
    let csv_path = dir.path().join("t.csv");
    let out = run(dib()
        .args(["anneal", "--family", "di", "--betas", "geometric:50,25,2"])
        .arg("--dist")
        .arg(&p)
        .arg("--out")
        .arg(&csv_path));
    assert_eq!(code(&out), 0, "{out:?}");
    let json_path = dir.path().join("r.json");
    let out = run(dib()
        .args(["solve", "--family", "di", "--beta", "50"])
        .arg("--dist")
        .arg(&p)
        .arg("--out")
        .arg(&json_path));
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_str(&fs::read_to_string(&json_path).unwrap()).unwrap();
    let csv = fs::read_to_string(&csv_path).unwrap();
    let first: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let i_csv: f64 = first[1].parse().unwrap();
    let d_csv: f64 = first[2].parse().unwrap();
    assert!((i_csv - v["result"]["i_nats"].as_f64().unwrap()).abs() < 1e-9);
    assert!((d_csv - v["result"]["d_nats"].as_f64().unwrap()).abs() < 1e-9);
}

#[test]
fn partition_reports_ratio_cells() {
    let dir = TempDir::new().unwrap();
    let p = p4(dir.path());
    let out_path = dir.path().join("part.json");
    let out = run(dib()
        .args(["partition", "--family", "di"])
        .arg("--dist")
        .arg(&p)
        .arg("--out")
        .arg(&out_path));
    assert_eq!(code(&out), 0, "{out:?}");
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("2 cells"), "{text}");
    let v: Value = serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(v["cells"], serde_json::json!([[0, 1], [2, 3]]));
}

#[test]
fn ib_solve_writes_result() {
    let dir = TempDir::new().unwrap();
    let j = write(
        dir.path(),
        "j.json",
        r#"{"x_labels":["x0","x1"],"y_labels":["y0","y1","y2"],"p":[[0.2,0.1,0.1],[0.05,0.25,0.3]]}"#,
    );
    let out_path = dir.path().join("ib.json");
    let out = run(dib()
        .args(["ib", "solve", "--beta", "1000"])
        .arg("--joint")
        .arg(&j)
        .arg("--out")
        .arg(&out_path));
    assert_eq!(code(&out), 0, "{out:?}");
    let v: Value = serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(v["result"]["converged"], true);
    assert!(v["result"]["i_xt"].as_f64().unwrap() > 0.0);
}

#[test]
fn symmetry_check_and_divergence() {
    let dir = TempDir::new().unwrap();
    let p = p4(dir.path());
    let swap = write(dir.path(), "swap.json", r#"{"images":[1,0,2,3]}"#);
    let move_mass = write(dir.path(), "rot.json", r#"{"images":[2,0,1,3]}"#);
    let out = run(dib()
        .args(["symmetry", "check"])
        .arg("--dist")
        .arg(&p)
        .arg("--sigma")
        .arg(&swap));
    assert_eq!(code(&out), 0);
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "true");
    let out = run(dib()
        .args(["symmetry", "check"])
        .arg("--dist")
        .arg(&p)
        .arg("--sigma")
        .arg(&move_mass));
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "false");

    let ch = write(
        dir.path(),
        "ch.json",
        r#"{"input_labels":["a","b","c","d"],"output_labels":["t0","t1"],
            "rows":[[1.0,0.0],[1.0,0.0],[0.0,1.0],[0.0,1.0]]}"#,
    );
    let g = write(
        dir.path(),
        "g.json",
        r#"{"generators":[{"images":[1,0,2,3]}]}"#,
    );
    let out = run(dib()
        .args(["symmetry", "divergence"])
        .arg("--channel")
        .arg(&ch)
        .arg("--dist")
        .arg(&p)
        .arg("--group")
        .arg(&g));
    assert_eq!(code(&out), 0, "{out:?}");
    let text = String::from_utf8(out.stdout).unwrap();
    let v: f64 = text.split_whitespace().next().unwrap().parse().unwrap();
    assert!(v.abs() <= 1e-12, "{text}");
}

#[test]
fn symmetry_discover_finds_row_swap() {
    let dir = TempDir::new().unwrap();
    let ch = write(
        dir.path(),
        "ch.json",
        r#"{"input_labels":["a","b"],"output_labels":["y0","y1"],
            "rows":[[0.7,0.3],[0.3,0.7]]}"#,
    );
    let out_path = dir.path().join("g.json");
    let out = run(dib()
        .args(["symmetry", "discover"])
        .arg("--channel")
        .arg(&ch)
        .arg("--out")
        .arg(&out_path));
    assert_eq!(code(&out), 0, "{out:?}");
    let v: Value = serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    // identity plus the simultaneous row/column swap
    assert_eq!(v["order"], 2);
}

#[test]
fn gridworld_bundle_is_deterministic() {
    let run_once = |dir: &Path| {
        let out = run(dib()
            .args([
                "experiment",
                "gridworld",
                "--eps1",
                "0",
                "--eps2",
                "0",
                "--betas",
                "geometric:1000000,0.01,12",
            ])
            .arg("--out")
            .arg(dir));
        assert_eq!(code(&out), 0, "{out:?}");
    };
    let dir1 = TempDir::new().unwrap();
    let dir2 = TempDir::new().unwrap();
    run_once(dir1.path());
    run_once(dir2.path());
    for name in ["trace.csv", "info_curve.svg", "residuals.svg", "summary.json"] {
        let a = fs::read(dir1.path().join(name)).unwrap();
        let b = fs::read(dir2.path().join(name)).unwrap();
        assert!(!a.is_empty(), "{name} empty");
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    let v: Value =
        serde_json::from_str(&fs::read_to_string(dir1.path().join("summary.json")).unwrap())
            .unwrap();
    // unperturbed: every residual is at noise level, thresholds sit at the top β
    let c4 = v["beta_thresholds"]["C4"].as_f64().unwrap();
    let d4 = v["beta_thresholds"]["D4"].as_f64().unwrap();
    assert!((c4 - 1e6).abs() < 1e-6 * 1e6);
    assert!((d4 - 1e6).abs() < 1e-6 * 1e6);
    let trace = fs::read_to_string(dir1.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 13);
    assert!(trace.starts_with("beta,I_nats,D_nats,lagrangian,eff_card,converged,div_C4,div_D4"));
}
