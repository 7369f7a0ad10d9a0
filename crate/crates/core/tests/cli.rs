use std::process::Command;

fn lfmimo(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_lfmimo"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn flops_table() {
    let out = lfmimo(&["flops", "--m", "8", "--n", "2", "--k", "4"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&row[..4], &["8", "2", "4", "2288"]);
}

#[test]
fn structured_error_and_exit_code() {
    let out = lfmimo(&["figure", "fig9"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(
        err.lines().any(|l| l.starts_with("error kind=config")),
        "{err}"
    );
}

#[test]
fn run_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.cfg");
    std::fs::write(&cfg, "# tiny sweep\nM = 4\nN = 1\nK = 4\nB = 3\nsnr_db = 0, 10\nschemes = mrt, rmmse\ntrials = 3\n").unwrap();
    let csv = dir.path().join("out/tiny.csv");
    let out = lfmimo(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
        "--seed",
        "4",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(&csv).unwrap();
    let recs = lfmimo::harness::parse_records(&text).unwrap();
    assert_eq!(recs.len(), 4);
    assert!(recs
        .iter()
        .all(|r| r.seed == 4 && r.trials == 3 && r.m == 4));
}
