use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flatcluster"))
        .args(args)
        .env_remove("FLATCLUSTER_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

fn synth(dir: &TempDir, seed: &str) -> (String, String) {
    let (points, labels) = (path(dir, "points.csv"), path(dir, "truth.txt"));
    let o = run(&["synth", "--case", "2x2in4", "--outliers", "0", "--seed", seed, "--out", &points, "--labels", &labels]);
    assert!(o.status.success(), "{}", stderr(&o));
    (points, labels)
}

#[test]
fn synth_cluster_evaluate_pipeline() {
    let dir = TempDir::new().unwrap();
    let (points, truth) = synth(&dir, "7");
    assert_eq!(std::fs::read_to_string(&points).unwrap().lines().count(), 500);

    for algo in ["lbf", "lbf-ms", "slbf", "kflats"] {
        let pred = path(&dir, &format!("{algo}.txt"));
        let o = run(&["cluster", "--input", &points, "--algo", algo, "--d", "2", "--k", "2", "--seed", "3", "--output", &pred]);
        assert!(o.status.success(), "{algo}: {}", stderr(&o));
        assert!(stdout(&o).contains("time:"));
        assert!(stderr(&o).contains("seed=3"));

        let o = run(&["evaluate", "--pred", &pred, "--truth", &truth]);
        assert!(o.status.success());
        let line = stdout(&o);
        let value = line.trim().strip_prefix("misclassification: ").unwrap().strip_suffix('%').unwrap();
        assert_eq!(value.split('.').nth(1).map(str::len), Some(2), "{line}");
        let v: f64 = value.parse().unwrap();
        assert!((0.0..=100.0).contains(&v));
    }
}

#[test]
fn config_echo_lists_the_resolved_parameters() {
    let dir = TempDir::new().unwrap();
    let (points, _) = synth(&dir, "1");
    let out = path(&dir, "l.txt");
    let o = run(&["cluster", "--input", &points, "--algo", "lbf", "--d", "2", "--k", "2", "--seed", "5", "--output", &out]);
    let echo = stderr(&o);
    for key in ["C=140", "p=10", "S=4", "T=2", "seed=5"] {
        assert!(echo.contains(key), "{key} missing from {echo}");
    }
    let o = run(&["cluster", "--input", &points, "--algo", "slbf", "--d", "2", "--k", "2", "--seed", "5", "--output", &out]);
    assert!(stderr(&o).contains("lambdas=[2.000000, 5.436564"));
}

#[test]
fn clustering_is_deterministic_by_seed() {
    let dir = TempDir::new().unwrap();
    let (points, _) = synth(&dir, "11");
    let read = |p: &str| std::fs::read_to_string(p).unwrap();
    for algo in ["lbf", "slbf"] {
        let (a, b) = (path(&dir, "a.txt"), path(&dir, "b.txt"));
        for (out, threads) in [(&a, "1"), (&b, "2")] {
            let o = run(&[
                "--threads", threads, "cluster", "--input", &points, "--algo", algo, "--d", "2", "--k", "2", "--seed", "42", "--output", out,
            ]);
            assert!(o.status.success(), "{}", stderr(&o));
        }
        assert_eq!(read(&a), read(&b), "{algo}");
    }
}

#[test]
fn missing_seed_is_drawn_and_reported() {
    let dir = TempDir::new().unwrap();
    let o = run(&["synth", "--case", "1x2in2", "--per-flat", "20", "--out", &path(&dir, "p.csv")]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("drawn from entropy"));
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let (points, truth) = synth(&dir, "2");
    let out = path(&dir, "out.txt");

    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["cluster", "--input", &points, "--algo", "nope", "--d", "2", "--k", "2", "--output", &out]).status.code(), Some(1));
    assert_eq!(run(&["cluster", "--input", &points, "--algo", "lbf", "--d", "4", "--k", "2", "--output", &out]).status.code(), Some(1));
    assert_eq!(run(&["--threads", "0", "noise", "--input", &points, "--d", "2"]).status.code(), Some(1));

    let o = run(&["cluster", "--input", &path(&dir, "absent.csv"), "--algo", "lbf", "--d", "2", "--k", "2", "--output", &out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("absent.csv"));

    let bad = path(&dir, "bad.csv");
    std::fs::write(&bad, "x,y\n1,2\n3\n").unwrap();
    assert_eq!(run(&["noise", "--input", &bad, "--d", "1"]).status.code(), Some(2));

    let short = path(&dir, "short.txt");
    std::fs::write(&short, "0\n1\n").unwrap();
    assert_eq!(run(&["evaluate", "--pred", &short, "--truth", &truth]).status.code(), Some(2));

    let o = run(&["verify-theorem", "--x-star", "0,0", "--mc-samples", "10000", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(!Path::new(&out).exists());
}

#[test]
fn bench_prints_one_row_per_algorithm() {
    let o = run(&["bench", "--cases", "2x2in4", "--trials", "2", "--algos", "lbf,slbf", "--per-flat", "60", "--seed", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "case,algo,trials,mean_error_pct,std_error_pct,mean_time_s");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("2x2in4,lbf,2,"));
    assert!(lines[2].starts_with("2x2in4,slbf,2,"));
}

#[test]
fn theorem_and_model_order_commands() {
    let dir = TempDir::new().unwrap();
    let profile = path(&dir, "profile.csv");
    let o = run(&["verify-theorem", "--mc-samples", "10000", "--grid-density", "20", "--seed", "3", "--profile", &profile]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("claim c:"));
    assert!(std::fs::read_to_string(&profile).unwrap().starts_with("r,beta2,std\n"));

    let points = path(&dir, "p.csv");
    let o = run(&["synth", "--case", "1x3in3", "--per-flat", "100", "--sigma", "0.01", "--seed", "5", "--out", &points]);
    assert!(o.status.success());
    let o = run(&["estimate-k", "--input", &points, "--algo", "kflats", "--d", "1", "--kmax", "5", "--seed", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("K_hat: "));
    assert_eq!(text.lines().count(), 2 + 5);

    let o = run(&["noise", "--input", &points, "--d", "1"]);
    let eps: f64 = stdout(&o).trim().strip_prefix("epsilon: ").unwrap().parse().unwrap();
    assert!(eps > 0.0 && eps < 0.05);
}
