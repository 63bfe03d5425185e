use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn thoughtseq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thoughtseq")).args(args).output().expect("binary runs")
}

fn machine(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/machines").join(name)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn verify_core_passes() {
    let o = thoughtseq(&["verify", "--suite", "core"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.lines().filter(|l| l.starts_with("PASS core/")).count() >= 5);
    assert!(!text.contains("FAIL"));
}

#[test]
fn verify_rejects_unknown_suite() {
    assert_eq!(code(&thoughtseq(&["verify", "--suite", "everything"])), 2);
}

#[test]
fn simulate_increment_matches_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let tm = machine("binary_increment.tm");
    let o = thoughtseq(&["simulate", "--tm", tm.to_str().unwrap(), "--algo", "memory", "--steps", "100", "--input", "1011", "--out", out]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("ORACLE MATCH"));
    let configs = fs::read_to_string(dir.path().join("configs.csv")).unwrap();
    assert!(configs.starts_with("tm_step,state,head,tape_support\n"));
    assert_eq!(configs.lines().count(), 102);
    assert!(configs.lines().last().unwrap().contains("done"));
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("step,tag,slots,focus\n"));
}

#[test]
fn simulate_zero_steps_and_every_algo() {
    let tm = machine("busy_beaver_2.tm");
    for algo in ["search", "search-bounded", "constant", "memory"] {
        for steps in ["0", "20"] {
            let dir = tempfile::tempdir().unwrap();
            let o = thoughtseq(&["simulate", "--tm", tm.to_str().unwrap(), "--algo", algo, "--steps", steps, "--out", dir.path().to_str().unwrap()]);
            assert_eq!(code(&o), 0, "{algo} {steps}");
            assert!(stdout(&o).contains("ORACLE MATCH"));
        }
    }
}

#[test]
fn simulate_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let tm = machine("binary_increment.tm");
    let tm = tm.to_str().unwrap();
    assert_eq!(code(&thoughtseq(&["simulate", "--tm", tm, "--algo", "constant", "--input", "1", "--out", out])), 2);
    assert_eq!(code(&thoughtseq(&["simulate", "--tm", tm, "--algo", "quantum", "--out", out])), 2);
    assert_eq!(code(&thoughtseq(&["simulate", "--tm", tm, "--input", "x", "--out", out])), 2);
    let bad = dir.path().join("bad.tm");
    fs::write(&bad, "states: a h\nalphabet: 0\nblank: 0\nstart: a\nhalting: h\n").unwrap();
    assert_eq!(code(&thoughtseq(&["simulate", "--tm", bad.to_str().unwrap(), "--out", out])), 2);
    assert_eq!(code(&thoughtseq(&["simulate", "--tm", "/nonexistent.tm", "--out", out])), 2);
}

#[test]
fn complexity_exact_cross_checks() {
    let dir = tempfile::tempdir().unwrap();
    let o = thoughtseq(&["complexity", "--mode", "exact", "--N", "2,4,12", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.contains("N=2 E[search]=2 formula == enumeration"), "{text}");
    assert!(text.contains("N=4 E[search]=3 formula == enumeration"), "{text}");
    let report = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 1 + 6);
}

#[test]
fn complexity_rejects_short_walks() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(code(&thoughtseq(&["complexity", "--mode", "exact", "--N", "1", "--out", out])), 2);
    assert_eq!(code(&thoughtseq(&["complexity", "--mode", "montecarlo", "--N", "8", "--trials", "5", "--out", out])), 2);
    assert_eq!(code(&thoughtseq(&["complexity", "--mode", "sideways", "--N", "8", "--out", out])), 2);
}

#[test]
fn complexity_montecarlo_writes_fit_and_is_deterministic() {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let o = thoughtseq(&["complexity", "--mode", "montecarlo", "--N", "16,64,256", "--trials", "2000", "--seed", "3", "--out", dir.path().to_str().unwrap()]);
        assert_eq!(code(&o), 0);
        assert!(stdout(&o).contains("r^2"));
        let fit = fs::read_to_string(dir.path().join("fit.csv")).unwrap();
        let report = fs::read_to_string(dir.path().join("report.csv")).unwrap();
        (fit, report)
    };
    let (fit, report) = run();
    assert!(fit.starts_with("N,mean,fitted\n"));
    assert_eq!((fit.clone(), report.clone()), run());
}

fn write_data(path: &Path) {
    let mut text = String::from("40 3\n");
    let mut x: u64 = 12345;
    for _ in 0..40 {
        let row: Vec<String> = (0..3)
            .map(|_| {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                format!("{:.6}", (x >> 11) as f64 / (1u64 << 53) as f64 - 0.5)
            })
            .collect();
        text.push_str(&row.join(" "));
        text.push('\n');
    }
    fs::write(path, text).unwrap();
}

#[test]
fn train_writes_weights_and_history() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.txt");
    write_data(&data);
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        let o = thoughtseq(&["train", "--data", data.to_str().unwrap(), "--epochs", "500", "--seed", "1", "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        (fs::read_to_string(out.join("forward.txt")).unwrap(), fs::read_to_string(out.join("epochs.csv")).unwrap())
    };
    let (forward, history) = run("a");
    assert!(history.starts_with("epoch,objective,reconstruction_term,sparsity_term\n"));
    assert!(!forward.is_empty());
    assert_eq!(run("b"), (forward, history));
}

#[test]
fn train_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.txt");
    write_data(&data);
    let out = dir.path().join("o");
    let (data, out) = (data.to_str().unwrap(), out.to_str().unwrap());
    assert_eq!(code(&thoughtseq(&["train", "--data", data, "--epochs", "0", "--out", out])), 2);
    assert_eq!(code(&thoughtseq(&["train", "--data", "/missing.txt", "--out", out])), 2);
    assert_eq!(code(&thoughtseq(&["train", "--data", data, "--mode", "sideways", "--out", out])), 2);
}
