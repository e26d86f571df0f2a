//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use quadinv::analysis::{epoch_cross_term, epoch_product};
use quadinv::experiments::{
    error_sequence, order_of, run_preset, ArmOutcome, ExperimentPreset, OrderBasis, PresetName,
    RunReport, DEFAULT_SEED,
};
use quadinv::linalg::{frobenius_norm, seeded_rng, Matrix};
use quadinv::problem::{gen_invertible, RandomMatrixSpec};
use quadinv::solvers::{adaptive_gd_step, StopReason};
use quadinv::trace::{self, TraceFormat};
use rand::seq::SliceRandom;

// Pinned tolerances and budgets.
const SCALAR_REL_TOL: f64 = 1e-12;
const SCALAR_MAX_RUNTIME: Duration = Duration::from_millis(1);
const LOSS_TARGET: f64 = 1e-24;
const QUADRATIC_MIN_ORDER: f64 = 1.8;
const MIN_PAIRS: usize = 3;
const FIG1A_GD_MAX_ITERS: u64 = 12;
const FIG1A_GD_MAX_RUNTIME: Duration = Duration::from_secs(5);
const FIG1A_SGD_MAX_RUNTIME: Duration = Duration::from_secs(30);
const SGD_EPOCH_EXPONENT: f64 = 1.8;
const SGD_EPOCH_START: f64 = 1e-3;
const SGD_EPOCH_FLOOR: f64 = 1e-12;
const PRODUCT_PAIRS: u64 = 20;
const PRODUCT_ORDERINGS: usize = 20;
const PRODUCT_N: usize = 10;
const PRODUCT_TOL: f64 = 1e-8;
const CROSS_TERM_TOL: f64 = 1e-10;
const PRODUCT_MAX_RUNTIME: Duration = Duration::from_secs(1);
const ROOT_RESIDUAL_TOL: f64 = 1e-10;
const ROOT_DRIFT_TOL: f64 = 1e-8;
const ROOT_MAX_RUNTIME: Duration = Duration::from_secs(5);
const HYBRID_MAX_ADAPTIVE_ITERS: u64 = 8;
const HYBRID_MAX_RUNTIME: Duration = Duration::from_secs(10);
const FIG2B_N: usize = 200;
const IID_MAX_ORDER: f64 = 1.5;
const FIG2B_MAX_RUNTIME: Duration = Duration::from_secs(60);
const LINEAR_ORDER_RANGE: (f64, f64) = (0.8, 1.2);
const LINEAR_TERM_MIN: f64 = 1e-8;
const THM3_MAX_RUNTIME: Duration = Duration::from_secs(5);
const NEWTON_MIN_GAP: f64 = 1e-6;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

struct Run {
    report: RunReport,
    elapsed: Duration,
}

fn preset(
    name: PresetName,
    n: Option<usize>,
    dir: &Path,
    format: TraceFormat,
) -> Result<Run, String> {
    let p = ExperimentPreset {
        name,
        n,
        seed: DEFAULT_SEED,
        output_dir: dir.to_path_buf(),
        format,
    };
    let start = Instant::now();
    let report = run_preset(&p).map_err(|e| format!("{name} failed: {e}"))?;
    Ok(Run {
        report,
        elapsed: start.elapsed(),
    })
}

fn arm<'a>(run: &'a Run, name: &str) -> Result<&'a ArmOutcome, String> {
    run.report
        .arm(name)
        .ok_or_else(|| format!("missing arm {name}"))
}

fn quadratic(a: &ArmOutcome) -> Result<(), String> {
    check(
        a.order.order >= QUADRATIC_MIN_ORDER && a.order.points_used >= MIN_PAIRS,
        format!(
            "{}: order {:.4} over {} pairs, need >= {QUADRATIC_MIN_ORDER} over >= {MIN_PAIRS}",
            a.arm, a.order.order, a.order.points_used
        ),
    )
}

fn converged(a: &ArmOutcome) -> Result<(), String> {
    check(
        a.stop == StopReason::Converged && a.final_loss <= LOSS_TARGET,
        format!("{}: stop {} with loss {:e}", a.arm, a.stop, a.final_loss),
    )
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(
        elapsed < limit,
        format!("took {elapsed:?}, limit {limit:?}"),
    )
}

fn scalar_recurrence() -> Outcome {
    let start = Instant::now();
    let x = Matrix::from_rows(&[[2.0]]);
    let w1 = adaptive_gd_step(&Matrix::from_rows(&[[0.4]]), &x).map_err(|e| e.to_string())?;
    let w2 = adaptive_gd_step(&w1, &x).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let (u1, u2) = (w1[(0, 0)] - 0.5, w2[(0, 0)] - 0.5);
    let rec = |u: f64| -(2.0 * u * u * 2.0 + u.powi(3) * 4.0);
    let e1 = -0.036;
    let e2 = rec(e1);
    let r1 = ((u1 - e1) / e1).abs();
    let r2 = ((u2 - e2) / e2).abs();
    check(
        r1 <= SCALAR_REL_TOL && r2 <= SCALAR_REL_TOL,
        format!("rel errors {r1:e}, {r2:e}"),
    )?;
    check(
        (rec(-0.1) - e1).abs() <= 1e-15,
        "hand value u1 = -0.036 does not follow the recurrence",
    )?;
    within(elapsed, SCALAR_MAX_RUNTIME)?;
    Ok(format!(
        "u1={u1:.12e} u2={u2:.12e} rel=({r1:.1e},{r2:.1e}) in {elapsed:?}"
    ))
}

fn fig1a_gd(run: &Run) -> Outcome {
    let a = arm(run, "gd")?;
    converged(a)?;
    check(
        a.iterations <= FIG1A_GD_MAX_ITERS,
        format!("{} iterations > {FIG1A_GD_MAX_ITERS}", a.iterations),
    )?;
    quadratic(a)?;
    within(run.elapsed, FIG1A_GD_MAX_RUNTIME)?;
    Ok(format!(
        "{} iters, loss {:.2e}, order {:.4} ({} pairs), preset {:?}",
        a.iterations, a.final_loss, a.order.order, a.order.points_used, run.elapsed
    ))
}

fn fig1a_sgd(run: &Run) -> Outcome {
    let a = arm(run, "sgd")?;
    converged(a)?;
    quadratic(a)?;
    let trace = trace::load(&a.path).map_err(|e| e.to_string())?;
    let errs = error_sequence(&trace, OrderBasis::Epochs).map_err(|e| e.to_string())?;
    // same problem as the preset, for ‖W*‖_F
    let spec = RandomMatrixSpec::invertible(100, DEFAULT_SEED).with_condition_cap(1e4);
    let p = gen_invertible(&spec, &mut spec.rng()).map_err(|e| e.to_string())?;
    let reference = frobenius_norm(&p.w_star);
    let rel: Vec<f64> = errs.iter().map(|e| e / reference).collect();
    let mut checked = 0;
    for p in rel.windows(2) {
        if p[0] <= SGD_EPOCH_START && p[1] >= SGD_EPOCH_FLOOR {
            check(
                p[1] <= p[0].powf(SGD_EPOCH_EXPONENT),
                format!(
                    "epoch error {:e} -> {:e} exceeds the {SGD_EPOCH_EXPONENT} power",
                    p[0], p[1]
                ),
            )?;
            checked += 1;
        }
    }
    check(checked >= 1, "no epoch pair below 1e-3 to check")?;
    within(run.elapsed, FIG1A_SGD_MAX_RUNTIME)?;
    Ok(format!(
        "{} epochs, order {:.4} ({} pairs), {checked} epoch pairs obey e' <= e^1.8",
        a.epochs, a.order.order, a.order.points_used
    ))
}

fn epoch_product_check() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut worst_cross: f64 = 0.0;
    let mut rng = seeded_rng(DEFAULT_SEED);
    let mut order: Vec<usize> = (0..PRODUCT_N).collect();
    for seed in 0..PRODUCT_PAIRS {
        let spec = RandomMatrixSpec::invertible(PRODUCT_N, seed).with_condition_cap(1e4);
        let p = gen_invertible(&spec, &mut spec.rng()).map_err(|e| e.to_string())?;
        for _ in 0..PRODUCT_ORDERINGS {
            order.shuffle(&mut rng);
            let prod = epoch_product(&p.x, &p.w_star, &order).map_err(|e| e.to_string())?;
            worst = worst.max(frobenius_norm(&prod));
        }
        for i in 0..PRODUCT_N {
            let j = (i + 1) % PRODUCT_N;
            worst_cross = worst_cross
                .max(epoch_cross_term(&p.x, &p.w_star, i, j).map_err(|e| e.to_string())?);
        }
    }
    let elapsed = start.elapsed();
    check(worst <= PRODUCT_TOL, format!("max product norm {worst:e}"))?;
    check(
        worst_cross <= CROSS_TERM_TOL,
        format!("max cross term {worst_cross:e}"),
    )?;
    within(elapsed, PRODUCT_MAX_RUNTIME)?;
    Ok(format!(
        "max product norm {worst:.2e}, max cross term {worst_cross:.2e} in {elapsed:?}"
    ))
}

fn root_demo(run: &Run) -> Outcome {
    let a = arm(run, "root")?;
    converged(a)?;
    quadratic(a)?;
    let residual = a.extras["root_residual"];
    let drift = a.extras["max_commutator_drift"];
    check(
        residual <= ROOT_RESIDUAL_TOL,
        format!("|W^2 X - I|_F = {residual:e}"),
    )?;
    check(
        drift <= ROOT_DRIFT_TOL,
        format!("commutator drift {drift:e}"),
    )?;
    within(run.elapsed, ROOT_MAX_RUNTIME)?;
    Ok(format!(
        "|W^2 X - I|_F {residual:.2e}, drift {drift:.2e}, order {:.4} ({} pairs), {:?}",
        a.order.order, a.order.points_used, run.elapsed
    ))
}

fn fig1b(run: &Run) -> Outcome {
    let a = arm(run, "hybrid")?;
    converged(a)?;
    let trace = trace::load(&a.path).map_err(|e| e.to_string())?;
    let switches = trace.phase_switches();
    check(
        switches.len() == 1,
        format!("{} phase switches", switches.len()),
    )?;
    let switch_iter = trace.records()[switches[0]].iter;
    let adaptive = a.iterations + 1 - switch_iter;
    check(
        adaptive <= HYBRID_MAX_ADAPTIVE_ITERS,
        format!("adaptive phase took {adaptive} iterations"),
    )?;
    check(
        trace.records()[switches[0] - 1].loss < 1e-4,
        "warm phase ended above the switch loss",
    )?;
    within(run.elapsed, HYBRID_MAX_RUNTIME)?;
    Ok(format!(
        "switch at iter {switch_iter}, {adaptive} adaptive iters, loss {:.2e}, {:?}",
        a.final_loss, run.elapsed
    ))
}

fn fig2b(run: &Run) -> Outcome {
    let cyclic = arm(run, "cyclic")?;
    let iid = arm(run, "iid")?;
    quadratic(cyclic)?;
    check(
        iid.order.order <= IID_MAX_ORDER,
        format!("iid order {:.4} > {IID_MAX_ORDER}", iid.order.order),
    )?;
    within(run.elapsed, FIG2B_MAX_RUNTIME)?;
    Ok(format!(
        "cyclic order {:.4} ({} pairs, {} epochs), iid order {:.4} ({} pairs, {} epochs), {:?}",
        cyclic.order.order,
        cyclic.order.points_used,
        cyclic.epochs,
        iid.order.order,
        iid.order.points_used,
        iid.epochs,
        run.elapsed
    ))
}

fn thm3(run: &Run) -> Outcome {
    let a = arm(run, "polyrate")?;
    let (lo, hi) = LINEAR_ORDER_RANGE;
    check(
        a.order.order >= lo && a.order.order <= hi && a.order.points_used >= MIN_PAIRS,
        format!(
            "order {:.4} over {} pairs",
            a.order.order, a.order.points_used
        ),
    )?;
    let c0 = a.extras["linear_term_norm"];
    check(c0 >= LINEAR_TERM_MIN, format!("linear term norm {c0:e}"))?;
    within(run.elapsed, THM3_MAX_RUNTIME)?;
    Ok(format!(
        "order {:.4} ({} pairs), linear term {c0:.3}, {} iters, {:?}",
        a.order.order, a.order.points_used, a.iterations, run.elapsed
    ))
}

fn newton(run: &Run) -> Outcome {
    let a = arm(run, "newton")?;
    converged(a)?;
    quadratic(a)?;
    let gap = a.extras["first_step_gap_vs_adaptive"];
    check(gap >= NEWTON_MIN_GAP, format!("first-step gap {gap:e}"))?;
    Ok(format!(
        "order {:.4} ({} pairs), first-step gap {gap:.3e}",
        a.order.order, a.order.points_used
    ))
}

fn same_bytes(a: &Path, b: &Path) -> Result<usize, String> {
    let mut files: Vec<_> = fs::read_dir(a)
        .map_err(|e| e.to_string())?
        .map(|e| e.map(|e| e.file_name()).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    files.sort();
    for f in &files {
        let x = fs::read(a.join(f)).map_err(|e| e.to_string())?;
        let y = fs::read(b.join(f)).map_err(|e| format!("{f:?} missing in rerun: {e}"))?;
        check(x == y, format!("{f:?} differs between runs"))?;
    }
    Ok(files.len())
}

fn determinism(first: &Path, jobs: &[(PresetName, Option<usize>, TraceFormat)]) -> Outcome {
    let second = tempfile::tempdir().map_err(|e| e.to_string())?;
    for &(name, n, format) in jobs {
        preset(name, n, second.path(), format)?;
    }
    let files = same_bytes(first, second.path())?;
    check(files >= 10, format!("only {files} trace files compared"))?;
    Ok(format!(
        "{files} trace files byte-identical across two runs"
    ))
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("tempdir");
    let out = dir.path();
    let jobs = [
        (PresetName::Fig1a, None, TraceFormat::Csv),
        (PresetName::Fig1b, None, TraceFormat::Csv),
        (PresetName::Fig2b, Some(FIG2B_N), TraceFormat::Csv),
        (PresetName::Thm3, None, TraceFormat::Csv),
        (PresetName::RootDemo, None, TraceFormat::Csv),
        (PresetName::RootDemo, None, TraceFormat::Json),
    ];
    let mut runs = Vec::new();
    for &(name, n, format) in &jobs {
        runs.push(preset(name, n, out, format));
    }
    let get = |i: usize| runs[i].as_ref().map_err(|e| e.clone());

    let criteria: Vec<(&str, Outcome)> = vec![
        ("scalar recurrence oracle", scalar_recurrence()),
        ("fig1a adaptive GD quadratic", get(0).and_then(fig1a_gd)),
        (
            "fig1a cyclic SGD quadratic per epoch",
            get(0).and_then(fig1a_sgd),
        ),
        ("epoch product vanishes", epoch_product_check()),
        ("root-demo inverse square root", get(4).and_then(root_demo)),
        ("fig1b hybrid warm start", get(1).and_then(fig1b)),
        ("fig2b cyclic vs iid", get(2).and_then(fig2b)),
        ("thm3 rank-deficient linear rate", get(3).and_then(thm3)),
        ("newton baseline", get(0).and_then(newton)),
        ("determinism", determinism(out, &jobs)),
    ];

    // the summary order must be what the written file yields
    let mut failed = 0;
    for run in runs.iter().flatten() {
        for a in &run.report.arms {
            let t = trace::load(&a.path).expect("reload");
            let again = order_of(&t, &a.order_spec).expect("order");
            if again != a.order && !(again.order.is_nan() && a.order.order.is_nan()) {
                println!(
                    "FAIL  summary order for {} differs from its file",
                    a.path.display()
                );
                failed += 1;
            }
        }
    }

    for (i, (name, outcome)) in criteria.iter().enumerate() {
        match outcome {
            Ok(detail) => println!("PASS  [{:>2}] {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL  [{:>2}] {name}: {why}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - criteria.iter().filter(|c| c.1.is_err()).count(),
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
