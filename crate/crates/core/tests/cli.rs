//! End-to-end CLI checks: determinism, manifests, replay, exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_na-lattice")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .output()
        .expect("spawn")
}

#[test]
fn generate_is_bit_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let args = [
        "generate",
        "--spec",
        "multinomial:total=100",
        "--shape",
        "8x8",
        "--seed",
        "7",
        "--out",
        "f.naf",
        "--csv",
    ];
    let a = run_in(&tmp.path().join("a"), &args);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let b = run_in(&tmp.path().join("b"), &args);
    assert!(b.status.success());
    let fa = fs::read(tmp.path().join("a/f.naf")).unwrap();
    let fb = fs::read(tmp.path().join("b/f.naf")).unwrap();
    assert_eq!(fa, fb);
    assert_eq!(&fa[..4], b"NAF1");
    let ca = fs::read(tmp.path().join("a/f.csv")).unwrap();
    let cb = fs::read(tmp.path().join("b/f.csv")).unwrap();
    assert_eq!(ca, cb);
}

#[test]
fn lil_emits_nondecreasing_running_max() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_in(
        tmp.path(),
        &[
            "lil", "--spec", "iid-normal", "--d", "2", "--theta", "1.5", "--kmax", "10",
            "--seed", "1",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("trajectory_1.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "k,n_1,n_2,cells,statistic,running_max,sigma_ref"
    );
    let mut prev = f64::NEG_INFINITY;
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        let running: f64 = cols[5].parse().unwrap();
        assert!(running >= prev);
        prev = running;
    }
}

#[test]
fn manifest_replay_reproduces_outputs_byte_for_byte() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    let out = run_in(
        &first,
        &[
            "verify",
            "rosenthal",
            "--spec",
            "gaussian-nn:rho=0.2",
            "--shape",
            "8x8",
            "--p",
            "3",
            "--reps",
            "500",
            "--seed",
            "9",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json1 = fs::read(first.join("report.json")).unwrap();
    let csv1 = fs::read(first.join("report.csv")).unwrap();

    // replay into a second directory via the emitted manifest
    let manifest_text = fs::read_to_string(first.join("manifest.json")).unwrap();
    let second = tmp.path().join("second");
    fs::create_dir_all(&second).unwrap();
    let patched = manifest_text.replace(
        &first.to_string_lossy().to_string(),
        &second.to_string_lossy().to_string(),
    );
    let manifest_path = tmp.path().join("patched_manifest.json");
    fs::write(&manifest_path, patched).unwrap();
    let out = Command::new(bin())
        .arg("replay")
        .arg(&manifest_path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json2 = fs::read(second.join("report.json")).unwrap();
    let csv2 = fs::read(second.join("report.csv")).unwrap();
    assert_eq!(json1, json2);
    assert_eq!(csv1, csv2);
}

#[test]
fn run_config_file_with_flag_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("from_config");
    let config = format!(
        r#"
out_dir = "{}"
strict = false

[command]
command = "verify"
reps = 400

[command.check]
check = "convex"

[command.check.convex]
fn = "square"

[command.spec]
seed = 3
shape = [4, 4]

[command.spec.kind]
kind = "multinomial"
total_balls = 16
"#,
        out_dir.display()
    );
    let config_path = tmp.path().join("run.toml");
    fs::write(&config_path, config).unwrap();
    let out = Command::new(bin())
        .args(["run", "--config"])
        .arg(&config_path)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stdout: {} stderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out_dir.join("report.json").exists());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("HOLDS"), "stdout: {stdout}");
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    // usage error -> 2
    let out = Command::new(bin()).arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // config error (invalid rho) -> 2
    let out = run_in(
        &tmp.path().join("bad"),
        &["verify", "convex", "--spec", "gaussian-nn:rho=0.9", "--shape", "4x4"],
    );
    assert_eq!(out.status.code(), Some(2));

    // violated verdict -> 1 (the duplicated control on the convex check)
    let out = run_in(
        &tmp.path().join("violated"),
        &[
            "verify",
            "convex",
            "--spec",
            "duplicated:inner=iid-normal",
            "--shape",
            "8x8",
            "--reps",
            "3000",
            "--seed",
            "3",
        ],
    );
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stdout));

    // holding verdict -> 0
    let out = run_in(
        &tmp.path().join("holds"),
        &[
            "verify",
            "rosenthal",
            "--spec",
            "rademacher",
            "--shape",
            "4x4",
            "--reps",
            "10",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    // inconclusive verdict (few replications on the control): 0 normally, 3 under --strict
    let inconclusive_args = [
        "verify",
        "convex",
        "--spec",
        "duplicated:inner=iid-normal",
        "--shape",
        "2x2",
        "--reps",
        "30",
        "--seed",
        "4",
    ];
    let out = run_in(&tmp.path().join("inc"), &inconclusive_args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("INCONCLUSIVE"));
    let mut strict_args = inconclusive_args.to_vec();
    strict_args.push("--strict");
    let out = run_in(&tmp.path().join("inc_strict"), &strict_args);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn necessity_and_increments_and_oracle_check_run() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_in(
        &tmp.path().join("necessity"),
        &[
            "necessity",
            "--spec",
            "heavy-tail:a=3,q=0",
            "--d",
            "2",
            "--c",
            "0.5",
            "--kmax",
            "64",
            "--reps",
            "40",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(tmp.path().join("necessity/necessity.json")).unwrap();
    assert!(report.contains("\"condition_holds\": true"));

    let out = run_in(
        &tmp.path().join("increments"),
        &[
            "increments",
            "--spec",
            "rademacher",
            "--d",
            "2",
            "--theta",
            "1.5",
            "--kmax",
            "10",
            "--delta",
            "0.25",
            "--seed",
            "2",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("increments/increments_2.csv").exists());

    let out = run_in(
        &tmp.path().join("oracle"),
        &["oracle-check", "--cases", "40", "--probe-reps", "2000"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}
