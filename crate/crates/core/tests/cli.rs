use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sbzeno(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sbzeno"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn body(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n")
}

#[test]
fn chain_writes_csv_with_config_header() {
    let tmp = tempfile::tempdir().unwrap();
    let o = sbzeno(tmp.path(), &["chain", "--override", "chain.l=9", "--override", "model.s=0.5"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(tmp.path().join("chain.csv")).unwrap();
    assert!(text.contains("# model.s = 0.5"));
    assert!(text.contains("# chain.l = 9"));
    assert_eq!(body(&tmp.path().join("chain.csv")).lines().count(), 1 + 10);
}

#[test]
fn chain_double_doubles_the_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let o = sbzeno(tmp.path(), &["chain", "--chain-double", "--override", "chain.l=4"]);
    assert_eq!(code(&o), 0);
    assert_eq!(body(&tmp.path().join("chain.csv")).lines().count(), 1 + 10);
}

#[test]
fn config_file_and_override_order() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "[model]\nalpha = 0.3\ns = 0.75\n\n[chain]\nl = 5\n").unwrap();
    let o = sbzeno(tmp.path(), &["chain", "--config", cfg.to_str().unwrap(), "--override", "model.alpha=0.1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(tmp.path().join("chain.csv")).unwrap();
    assert!(text.contains("# model.alpha = 0.1"));
    assert!(text.contains("# model.s = 0.75"));
}

#[test]
fn configuration_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        &["chain", "--override", "model.alpha=abc"][..],
        &["chain", "--override", "nope.key=1"],
        &["chain", "--override", "model.s=-1"],
        &["chain", "--config", "/nonexistent/run.cfg"],
        &["verify", "--override", "verify.preset=unknown"],
        &["chain", "--threads", "0"],
    ] {
        let o = sbzeno(tmp.path(), args);
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn numerical_failure_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let o = sbzeno(
        tmp.path(),
        &[
            "evolve",
            "--override",
            "initial.kind=physical",
            "--override",
            "model.alpha=0.8",
            "--override",
            "mps.max_local_dim=4",
            "--override",
            "mps.local_dim=4",
            "--override",
            "mps.obb_dim=4",
            "--override",
            "chain.l=3",
        ],
    );
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("deficit"));
}

#[test]
fn verify_presets() {
    let tmp = tempfile::tempdir().unwrap();
    let o = sbzeno(tmp.path(), &["verify", "--override", "verify.preset=decoupled"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("PASS"));
    assert!(tmp.path().join("verify.csv").exists());

    let o = sbzeno(tmp.path(), &["verify", "--override", "verify.preset=coarse"]);
    assert_eq!(code(&o), 4);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.starts_with("FAIL") && out.contains("diagnostic"), "{out}");
}

#[test]
fn evolve_resume_continues_the_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let (full, first, second) = (tmp.path().join("full"), tmp.path().join("a"), tmp.path().join("b"));
    let common = ["evolve", "--override", "chain.l=5", "--override", "mps.local_dim=8", "--override", "mps.obb_dim=6", "--override", "model.alpha=0.2"];
    let run = |dir: &Path, extra: &[&str]| {
        let mut args = common.to_vec();
        args.extend_from_slice(extra);
        let o = sbzeno(dir, &args);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    };
    run(&full, &["--override", "evolve.t_final=4"]);
    run(&first, &["--override", "evolve.t_final=2"]);
    let ckpt = format!("evolve.resume={}", first.join("checkpoint.bin").display());
    run(&second, &["--override", "evolve.t_final=2", "--override", &ckpt, "--override", "evolve.resume_time=2"]);

    let last = |dir: &Path| {
        let b = body(&dir.join("trajectory.csv"));
        let line = b.lines().last().unwrap().to_string();
        line.split(',').map(|x| x.parse::<f64>().unwrap()).collect::<Vec<_>>()
    };
    let (a, b) = (last(&full), last(&second));
    assert_eq!(a[0], 4.0);
    assert_eq!(b[0], 4.0);
    // sigma_z and sigma_x
    assert!((a[1] - b[1]).abs() < 1e-10 && (a[2] - b[2]).abs() < 1e-10, "{a:?} vs {b:?}");
}

#[test]
fn resume_with_mismatched_chain_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let o = sbzeno(tmp.path(), &["evolve", "--override", "chain.l=3", "--override", "evolve.t_final=0.2", "--override", "mps.local_dim=6", "--override", "mps.obb_dim=6"]);
    assert_eq!(code(&o), 0);
    let ckpt = format!("evolve.resume={}", tmp.path().join("checkpoint.bin").display());
    let o = sbzeno(&tmp.path().join("r"), &["evolve", "--override", "chain.l=4", "--override", "mps.local_dim=6", "--override", "mps.obb_dim=6", "--override", &ckpt]);
    assert_eq!(code(&o), 2);
}

#[test]
fn zeno_output_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let args = [
        "zeno",
        "--override",
        "chain.l=5",
        "--override",
        "mps.local_dim=8",
        "--override",
        "mps.obb_dim=6",
        "--override",
        "model.alpha=0.4",
        "--override",
        "zeno.scheme=both",
        "--override",
        "zeno.delta_tau=0.1,0.3",
        "--override",
        "zeno.n=3",
        "--override",
        "zeno.star_occupations=true",
    ];
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(code(&sbzeno(&a, &args)), 0);
    let mut with_threads = args.to_vec();
    with_threads.extend_from_slice(&["--threads", "2"]);
    assert_eq!(code(&sbzeno(&b, &with_threads)), 0);
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.iter().any(|n| n == "decay_qubit.csv"));
    assert!(names.iter().any(|n| n.to_string_lossy().starts_with("star_qubit_tau")));
    for n in &names {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap(), "{n:?}");
    }
}

#[test]
fn template_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_sbzeno")).arg("template").output().unwrap();
    assert_eq!(code(&o), 0);
    let cfg = tmp.path().join("t.cfg");
    fs::write(&cfg, &o.stdout).unwrap();
    let o = sbzeno(tmp.path(), &["chain", "--config", cfg.to_str().unwrap(), "--override", "chain.l=3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}
