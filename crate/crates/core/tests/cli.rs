use std::path::Path;
use std::process::{Command, Output};

use quadinv::experiments::{order_of, OrderBasis, OrderSpec, RELATIVE_WINDOW};
use quadinv::linalg::frobenius_norm;
use quadinv::problem::{gen_invertible, RandomMatrixSpec};
use quadinv::trace::{self, Phase};

fn quadinv(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quadinv"))
        .args(args)
        .current_dir(dir)
        .env_remove("QUADINV_SEED")
        .output()
        .expect("spawn quadinv")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Order column of the first data row of a summary table.
fn summary_order(out: &str) -> f64 {
    let row = out.lines().nth(2).expect("data row");
    row.split_whitespace().nth(5).unwrap().parse().unwrap()
}

#[test]
fn unknown_preset_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = quadinv(&["preset", "fig7"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("fig7"));
}

#[test]
fn invalid_flag_pairs_name_the_pair() {
    let dir = tempfile::tempdir().unwrap();
    let o = quadinv(
        &["run", "--method", "newton", "--schedule", "iid", "--n", "4"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(
        msg.contains("--schedule") && msg.contains("newton"),
        "{msg}"
    );

    let o = quadinv(&["run", "--method", "fixed-gd", "--n", "4"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--eta"));

    let o = quadinv(
        &[
            "run",
            "--method",
            "adaptive-gd",
            "--coeffs",
            "0,1",
            "--n",
            "4",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn newton_run_converges_quadratically() {
    let dir = tempfile::tempdir().unwrap();
    let o = quadinv(
        &[
            "run",
            "--method",
            "newton",
            "--n",
            "50",
            "--init",
            "scaled-inverse:0.4",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("converged"), "{out}");
    assert!(summary_order(&out) >= 1.8, "{out}");
    assert!(dir.path().join("newton.csv").exists());
}

#[test]
fn zero_init_reports_a_stall() {
    let dir = tempfile::tempdir().unwrap();
    let o = quadinv(
        &[
            "run",
            "--method",
            "adaptive-gd",
            "--n",
            "10",
            "--init",
            "zero",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("stalled"), "{}", stdout(&o));
}

#[test]
fn divergence_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = quadinv(
        &[
            "run",
            "--method",
            "adaptive-gd",
            "--n",
            "5",
            "--init",
            "scaled-inverse:3",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));
    assert!(stdout(&o).contains("diverged"));
}

#[test]
fn unwritable_output_exits_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, b"x").unwrap();
    let o = quadinv(
        &[
            "run",
            "--method",
            "newton",
            "--n",
            "4",
            "--out",
            "file/sub/t.csv",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn impossible_condition_cap_exits_with_five() {
    let dir = tempfile::tempdir().unwrap();
    let o = quadinv(
        &[
            "run",
            "--method",
            "newton",
            "--n",
            "60",
            "--condition-cap",
            "1.0001",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));
}

#[test]
fn seed_env_is_a_default_and_the_flag_wins() {
    let dir = tempfile::tempdir().unwrap();
    let run = |env: Option<&str>, flag: Option<&str>, out: &str| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_quadinv"));
        cmd.args(["run", "--method", "adaptive-gd", "--n", "6", "--out", out])
            .current_dir(dir.path())
            .env_remove("QUADINV_SEED");
        if let Some(s) = env {
            cmd.env("QUADINV_SEED", s);
        }
        if let Some(s) = flag {
            cmd.args(["--seed", s]);
        }
        assert!(cmd.output().unwrap().status.success());
        std::fs::read(dir.path().join(out)).unwrap()
    };
    let env7 = run(Some("7"), None, "a.csv");
    let flag7 = run(None, Some("7"), "b.csv");
    let env9_flag7 = run(Some("9"), Some("7"), "c.csv");
    let default = run(None, None, "d.csv");
    assert_eq!(env7, flag7);
    assert_eq!(env7, env9_flag7);
    assert_ne!(env7, default);
}

#[test]
fn same_flags_give_identical_bytes_in_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    for ext in ["csv", "json"] {
        for name in ["x", "y"] {
            let out = format!("{name}.{ext}");
            let o = quadinv(
                &[
                    "run",
                    "--method",
                    "adaptive-sgd",
                    "--n",
                    "12",
                    "--schedule",
                    "iid",
                    "--out",
                    &out,
                ],
                dir.path(),
            );
            assert!(o.status.success(), "{}", stderr(&o));
        }
        let x = std::fs::read(dir.path().join(format!("x.{ext}"))).unwrap();
        let y = std::fs::read(dir.path().join(format!("y.{ext}"))).unwrap();
        assert_eq!(x, y);
    }
}

#[test]
fn summary_order_matches_the_written_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = quadinv(
        &[
            "run",
            "--method",
            "adaptive-sgd",
            "--n",
            "30",
            "--seed",
            "3",
            "--out",
            "s.json",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let t = trace::load(&dir.path().join("s.json")).unwrap();
    assert_eq!(t.meta["method"], "adaptive-sgd");
    let spec = RandomMatrixSpec::invertible(30, 3).with_condition_cap(1e4);
    let p = gen_invertible(&spec, &mut spec.rng()).unwrap();
    let est = order_of(
        &t,
        &OrderSpec {
            basis: OrderBasis::Epochs,
            window: RELATIVE_WINDOW.scaled(frobenius_norm(&p.w_star)),
        },
    )
    .unwrap();
    let printed = summary_order(&stdout(&o));
    assert!(
        (printed - est.order).abs() <= 5e-5,
        "{printed} vs {}",
        est.order
    );
}

#[test]
fn hybrid_and_kaczmarz_runs() {
    let dir = tempfile::tempdir().unwrap();
    let o = quadinv(
        &[
            "run",
            "--method",
            "hybrid",
            "--n",
            "20",
            "--condition-cap",
            "10",
            "--out",
            "h.csv",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let t = trace::load(&dir.path().join("h.csv")).unwrap();
    assert_eq!(t.phase_switches().len(), 1);
    assert_eq!(t.records()[0].phase, Some(Phase::Warm));
    assert_eq!(t.last().unwrap().phase, Some(Phase::Adaptive));

    let o = quadinv(
        &[
            "run",
            "--method",
            "kaczmarz",
            "--n",
            "8",
            "--max-iters",
            "50",
            "--record-every",
            "10",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let t = trace::load(&dir.path().join("kaczmarz.csv")).unwrap();
    assert!(t.len() <= 7);
}

#[test]
fn root_and_polyrate_runs() {
    let dir = tempfile::tempdir().unwrap();
    let o = quadinv(
        &["run", "--method", "root", "--n", "10", "--d", "3"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("converged"), "{}", stdout(&o));

    let o = quadinv(
        &[
            "run",
            "--method",
            "polyrate",
            "--n",
            "10",
            "--coeffs",
            "0,1",
            "--init",
            "scaled-inverse:0.5",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("converged"), "{}", stdout(&o));
}

#[test]
fn preset_writes_one_file_per_arm() {
    let dir = tempfile::tempdir().unwrap();
    let o = quadinv(
        &[
            "preset", "fig2a", "--n", "20", "--out", "traces", "--format", "json",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let t = trace::load(&dir.path().join("traces/fig2a_sgd.json")).unwrap();
    assert_eq!(t.meta["experiment"], "fig2a");
    let ends = t.epoch_ends();
    assert_eq!(ends.len() as u64, ends.last().unwrap().epoch.unwrap() + 1);
}
