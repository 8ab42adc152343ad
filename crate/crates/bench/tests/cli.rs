use std::fs;
use std::process::Command;

use tsmm_bench::cli;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = cli::run(std::iter::once("tsmm").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn tune_narrow_n_then_cache_hit() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().to_str().unwrap();
    let args = ["tune", "--m", "2048", "--k", "2048", "--n", "16", "--threads", "4", "--reps", "3", "--cache-dir", cache];
    let (code, first, err) = run(&args);
    assert_eq!(code, 0, "{err}");
    assert!(first.contains("(1 n-partitions x 4 m-partitions)"), "{first}");
    assert!(first.contains("source       measured"));

    let (code, second, _) = run(&args);
    assert_eq!(code, 0);
    assert!(second.contains("source       plan cache"));
    let strip = |s: &str| s.lines().filter(|l| !l.starts_with("source") && !l.starts_with("gflops")).collect::<Vec<_>>().join("\n");
    assert_eq!(strip(&first), strip(&second));

    let mut retune = args.to_vec();
    retune.push("--retune");
    assert!(run(&retune).1.contains("source       measured"));
    assert_eq!(fs::read_to_string(dir.path().join("plans.csv")).unwrap().lines().count(), 2);
}

#[test]
fn broken_profile_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.profile");
    fs::write(&path, "l1d_bytes = 32768\nl2_bytes = lots\n").unwrap();
    let (code, _, err) = run(&["tune", "--m", "64", "--k", "64", "--n", "4", "--profile", path.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn bad_flags_exit_2() {
    assert_eq!(run(&["bench", "--mode", "blas"]).0, 2);
    assert_eq!(run(&["bench", "--dtype", "f16"]).0, 2);
    assert_eq!(run(&["bench", "--m", "8", "--k", "8", "--n", "0", "--reps", "1"]).0, 2);
    assert_eq!(run(&["bench", "--m", "25600", "--k", "25600", "--n", "16", "--mode", "naive"]).0, 2);
    assert_eq!(run(&["frobnicate"]).0, 2);
    assert_eq!(run(&["--help"]).0, 0);
}

#[test]
fn bench_writes_csv_file() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("out.csv");
    let (code, _, err) = run(&[
        "bench", "--m", "96", "--k", "80", "--n-list", "4,9", "--reps", "3", "--dtype", "f64", "--threads", "2",
        "--cache-dir", dir.path().to_str().unwrap(), "--csv", csv.to_str().unwrap(), "--tune",
    ]);
    assert_eq!(code, 0, "{err}");
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "mode,m,k,n,reps,pack_s,compute_s,gflops,pack_fraction,plan");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("prepack,96,80,4,3,"));
    assert!(err.contains("GFlops"));
}

#[test]
fn model_defaults_and_explicit_values() {
    let (code, out, _) = run(&["model", "--z", "12288", "--l", "8", "--t", "8", "--n-list", "0,512"]);
    assert_eq!(code, 0);
    assert!(out.starts_with("n,naive,blocked,prepack\n0,0,0,4096\n"));
    let (code, out, _) = run(&["model"]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().count(), 8);
}

#[test]
fn threads_env_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let exe = env!("CARGO_BIN_EXE_tsmm");
    let tune = |extra: &[&str]| {
        let out = Command::new(exe)
            .args(["tune", "--m", "512", "--k", "64", "--n", "8", "--reps", "3", "--retune", "--cache-dir"])
            .arg(dir.path())
            .args(extra)
            .env("TSMM_THREADS", "3")
            .output()
            .unwrap();
        assert!(out.status.success());
        String::from_utf8(out.stdout).unwrap()
    };
    assert!(tune(&[]).contains("threads      3 "));
    assert!(tune(&["--threads", "2"]).contains("threads      2 "));
}

#[test]
fn oracle_mismatch_maps_to_exit_1() {
    let e = tsmm_bench::BenchError::OracleMismatch("x".into());
    assert_eq!(e.exit_code(), tsmm_bench::EXIT_ORACLE);
    let out = Command::new(env!("CARGO_BIN_EXE_tsmm")).args(["kernels", "--dtype", "f64", "--retune", "--cache-dir"])
        .arg(tempfile::tempdir().unwrap().path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("kernel,m_r,n_r"));
}
