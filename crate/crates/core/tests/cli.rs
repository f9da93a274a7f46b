use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn jgap(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jgap"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn footer_value(csv: &str, key: &str) -> String {
    let line = csv.lines().find(|l| l.starts_with("# exponent=")).expect("footer");
    line.trim_start_matches("# ")
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
        .expect("key in footer")
        .to_string()
}

#[test]
fn moments_of_box() {
    let dir = tempfile::tempdir().unwrap();
    let o = jgap(dir.path(), &["moments", "--kernel", "box:1:1"]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(dir.path().join("moments.txt")).unwrap();
    assert!(text.contains("a = 0.333333"), "{text}");
    for line in text.lines() {
        assert!(line.contains(" = "), "{line}");
    }
}

#[test]
fn step_ladder_has_unit_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let o = jgap(
        dir.path(),
        &["ladder", "--fn", "step", "--eps-max", "0.16", "--rungs", "5"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("ladder.csv")).unwrap();
    let p: f64 = footer_value(&csv, "exponent").parse().unwrap();
    assert!((p - 1.0).abs() <= 0.02);
    assert_eq!(footer_value(&csv, "verdict"), "sub-W12");
    let dropped = csv.lines().find(|l| l.starts_with("# dropped=")).unwrap();
    let ndropped = match dropped.trim_start_matches("# dropped=") {
        "none" => 0,
        list => list.split(',').count(),
    };
    let rows = csv.lines().skip(1).filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, 5 - ndropped);
    let svg = fs::read_to_string(dir.path().join("ladder.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn gap_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = jgap(dir.path(), &["gap", "--fn", "step", "--eps", "0.1"]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(dir.path().join("gap.txt")).unwrap();
    let g: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("gap = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((g - 0.2 / 3.0).abs() <= 1e-4);
    assert!(!text.contains("limit_functional"));
    let o = jgap(dir.path(), &["gap", "--fn", "tent", "--dx", "1/256", "--eps", "0.1"]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(dir.path().join("gap.txt")).unwrap();
    assert!(text.contains("limit_functional = "));
}

#[test]
fn validation_failures_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["moments", "--kernel", "sphere:1:1"],
        vec!["moments", "--kernel", "tent:2:1"],
        vec!["gap", "--fn", "wave", "--eps", "0.1"],
        vec!["gap", "--f", "cubic", "--eps", "0.1"],
        vec!["gap", "--eps", "-1"],
        vec!["ladder", "--rungs", "3"],
        vec!["ladder", "--box", "2:1"],
        vec!["bilayer-solve", "--config", "/nonexistent/config.txt"],
        vec!["bilayer-solve", "--h", "0.3", "--dx", "1/64"],
        vec!["frobnicate"],
    ] {
        let o = jgap(dir.path(), &args);
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn numerical_failures_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    // kernel under-resolved
    let o = jgap(dir.path(), &["gap", "--fn", "tent", "--dx", "1/64", "--eps", "0.01"]);
    assert_eq!(code(&o), 3);
    // box too small for the padding contract
    let o = jgap(
        dir.path(),
        &["gap", "--fn", "tent", "--box", "-1.05:1.05", "--eps", "0.1"],
    );
    assert_eq!(code(&o), 3);
    // iteration cap
    let o = jgap(
        dir.path(),
        &[
            "bilayer-solve",
            "--alpha",
            "4",
            "--dx",
            "1/64",
            "--max-iter",
            "2",
            "--f",
            "square",
        ],
    );
    assert_eq!(code(&o), 3);
    assert!(dir.path().join("solution.dat").exists());
}

#[test]
fn config_file_and_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("problem.txt");
    fs::write(
        &cfg,
        "alpha = 0\nh = 1\nL = 4\ndx = 1/256\nf = square\neps_max = 0.5\nrungs = 4\n",
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();
    let o = jgap(dir.path(), &["bilayer-solve", "--config", cfg]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let sol = dir.path().join("solution.dat");
    let text = fs::read_to_string(&sol).unwrap();
    assert!(text.starts_with("# dim=1"));
    assert!(text.contains("# converged = true"));

    let o = jgap(
        dir.path(),
        &["bilayer-certify", "--config", cfg, "--solution", sol.to_str().unwrap()],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cert = fs::read_to_string(dir.path().join("certificate.txt")).unwrap();
    assert!(cert.contains("verdict = W12-consistent"), "{cert}");
    assert!(cert.contains("accepted = true"));
}

#[test]
fn refused_certificate_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // a half-height plateau is admissible but not a minimizer
    let dx = 1.0 / 512.0;
    let mut text = format!("# dim=1 origin={} dx={}\n", dx / 2.0, dx);
    for i in 0..4096 {
        let x = (i as f64 + 0.5) * dx;
        let v = if (3.0..5.0).contains(&x) { 0.5 } else { 0.0 };
        text.push_str(&format!("{x} {v}\n"));
    }
    let path = dir.path().join("plateau.dat");
    fs::write(&path, text).unwrap();
    let o = jgap(
        dir.path(),
        &[
            "bilayer-certify",
            "--dx",
            "1/512",
            "--eps-max",
            "0.2",
            "--rungs",
            "4",
            "--solution",
            path.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let cert = fs::read_to_string(dir.path().join("certificate.txt")).unwrap();
    assert!(cert.contains("minimal = false"));
    assert!(cert.contains("accepted = false"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let runs: [&[&str]; 3] = [
        &["moments", "--kernel", "epanechnikov:2:1"],
        &["ladder", "--fn", "cusp:0.75", "--dx", "1/1024"],
        &["bilayer-solve", "--alpha", "4", "--dx", "1/128", "--f", "square"],
    ];
    for args in runs {
        assert_eq!(code(&jgap(a.path(), args)), 0);
        assert_eq!(code(&jgap(b.path(), args)), 0);
    }
    for name in ["moments.txt", "ladder.csv", "ladder.svg", "solution.dat"] {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
}

#[test]
fn in_process_entry_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(jgap::cli::main_with_args(["jgap", "moments", "--out", out]), 0);
    assert_eq!(
        jgap::cli::main_with_args(["jgap", "moments", "--kernel", "box:9:1", "--out", out]),
        2
    );
}
