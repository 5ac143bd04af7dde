//! End-to-end runs of the binary. Reports are compared with `tests/golden/*.json` after
//! removing `timings_ms`; set `UPDATE_GOLDEN=1` to rewrite the files.

use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_arakelov"))
}

fn run(args: &[&str], stdin: Option<&[u8]>) -> Output {
    run_with_threads(args, stdin, 2)
}

fn run_with_threads(args: &[&str], stdin: Option<&[u8]>, threads: usize) -> Output {
    let mut child = bin()
        .args(args)
        .env("ARAKELOV_THREADS", threads.to_string())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut pipe = child.stdin.take().unwrap();
    pipe.write_all(stdin.unwrap_or_default()).unwrap();
    drop(pipe);
    child.wait_with_output().unwrap()
}

fn builtin_text(args: &[&str]) -> Vec<u8> {
    let mut full = vec!["builtin"];
    full.extend_from_slice(args);
    let out = run(&full, None);
    assert!(out.status.success());
    out.stdout
}

fn report(out: &Output) -> Value {
    let mut v: Value = serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)));
    v.as_object_mut().unwrap().remove("timings_ms");
    v
}

fn golden(name: &str, value: &Value) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{name}.json"));
    let text = serde_json::to_string_pretty(value).unwrap() + "\n";
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, text).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(text, expected, "golden file {name} differs");
}

#[test]
fn builtin_then_analyze() {
    let p2 = builtin_text(&["Pn", "2"]);
    assert_eq!(String::from_utf8_lossy(&p2), "name P2\ndim 2\n-1 -1\n-1 2\n2 -1\n");
    let out = run(&["analyze", "-"], Some(&p2));
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["results"]["fano_report"]["k_semistable"], true);
    assert_eq!(r["results"]["fano_report"]["vol"], "9/2");
    golden("analyze_p2", &r);
}

#[test]
fn analyze_matrix_input_in_both_orientations() {
    let cols = run(&["analyze", "-", "--format", "matrix"], Some(b"2 4\n1 0 -1 0\n0 1 0 -1\n"));
    let rows = run(&["analyze", "-"], Some(b"4 2\n1 0\n0 1\n-1 0\n0 -1\n"));
    let (a, b) = (report(&cols), report(&rows));
    assert_eq!(a["results"], b["results"]);
    assert_eq!(a["results"]["fano_report"]["vol"], "2");
    let forced = run(&["analyze", "-", "--transpose"], Some(b"2 3\n1 0 -1\n0 1 -1\n"));
    assert_eq!(forced.status.code(), Some(2));
}

#[test]
fn bounds_report() {
    let hex = builtin_text(&["Hexagon"]);
    let out = run(&["bounds", "-"], Some(&hex));
    assert_eq!(out.status.code(), Some(0));
    golden("bounds_hexagon", &report(&out));
}

#[test]
fn ke_height_on_projective_line() {
    let p1 = builtin_text(&["Pn", "1"]);
    let out = run(&["ke-height", "-", "--grid", "25", "--certified"], Some(&p1));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    let h = r["results"]["ding"]["height"].as_f64().unwrap();
    assert!((h - 2.0 * (1.0 + std::f64::consts::PI.ln())).abs() < 1e-3);
    assert!(r["checks"].as_array().unwrap().iter().all(|c| c["holds"] == true));
    assert_eq!(r["seed"], 0);
    golden("ke_height_p1", &r);
}

#[test]
fn ke_height_rejects_unstable_input() {
    let bl = builtin_text(&["Bl1P2"]);
    let out = run(&["ke-height", "-"], Some(&bl));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("semistable"));
}

#[test]
fn mabuchi_without_ke_uses_guillemin() {
    let p1 = builtin_text(&["Pn", "1"]);
    let out = run(&["mabuchi", "-"], Some(&p1));
    assert_eq!(out.status.code(), Some(0));
    let v = report(&out)["results"]["guillemin"]["value"].as_f64().unwrap();
    assert!((v - (2.0 * 2f64.ln() - 2.0)).abs() < 1e-6);
}

#[test]
fn mabuchi_from_ke_on_projective_line() {
    let p1 = builtin_text(&["Pn", "1"]);
    let out = run(&["mabuchi", "-", "--from-ke", "--grid", "25", "--sweep"], Some(&p1));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert_eq!(r["checks"].as_array().unwrap().len(), 4);
    assert!(r["results"]["mabuchi"]["relative_gap"].as_f64().unwrap().abs() < 1e-3);
}

#[test]
fn verify_inequalities_report() {
    let out = run(&["verify-inequalities", "--max-n", "6"], None);
    assert_eq!(out.status.code(), Some(0));
    golden("verify_6", &report(&out));
    assert_eq!(run(&["verify-inequalities", "--max-n", "500"], None).status.code(), Some(0));
    assert_eq!(run(&["verify-inequalities", "--max-n", "1"], None).status.code(), Some(2));
}

#[test]
fn gap_scan_matches_per_file_analysis() {
    let dir = tempfile::tempdir().unwrap();
    let names = ["P2", "P1xP1", "Bl1P2", "Bl2P2", "dP6"];
    for (name, args) in names.iter().zip([&["Pn", "2"][..], &["Cube", "2"], &["Bl1P2"], &["Bl2P2"], &["Hexagon"]]) {
        std::fs::write(dir.path().join(format!("{name}.txt")), builtin_text(args)).unwrap();
    }
    std::fs::write(dir.path().join("broken.txt"), "dim 2\n0 0\n").unwrap();
    std::fs::write(dir.path().join("P3.txt"), builtin_text(&["Pn", "3"])).unwrap();
    let out = run(&["gap-scan", dir.path().to_str().unwrap(), "--dim", "2"], None);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["results"]["gap"]["second_max"], "4");
    assert_eq!(r["notes"].as_array().unwrap().len(), 2);
    let scanned: Vec<String> = r["results"]["semistable_files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["file"].as_str().unwrap().to_string())
        .collect();
    let mut individually = Vec::new();
    for name in names {
        let a = run(&["analyze", dir.path().join(format!("{name}.txt")).to_str().unwrap()], None);
        if report(&a)["results"]["fano_report"]["k_semistable"] == true {
            individually.push(format!("{name}.txt"));
        }
    }
    let mut sorted = scanned.clone();
    sorted.sort();
    individually.sort();
    assert_eq!(sorted, individually);
    golden("gap_scan_surfaces", &r["results"]["gap"]);
}

#[test]
fn input_errors_exit_with_two() {
    let bad = run(&["analyze", "-"], Some(b"dim 1\n1/0\n-1\n"));
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("line 2, column 1"));
    assert_eq!(run(&["analyze", "/nonexistent/file"], None).status.code(), Some(2));
    assert_eq!(run(&["builtin", "Pn"], None).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"], None).status.code(), Some(2));
    let flat = run(&["analyze", "-"], Some(b"dim 2\n0 0\n1 1\n2 2\n"));
    assert_eq!(flat.status.code(), Some(2));
}

#[test]
fn reports_are_deterministic() {
    let x = builtin_text(&["Xpq", "2", "3"]);
    let args = ["ke-height", "-", "--grid", "3"];
    let a = report(&run_with_threads(&args, Some(&x), 1));
    let b = report(&run_with_threads(&args, Some(&x), 4));
    assert_eq!(a, b);
}
