//! Experiment presets and single custom runs. Every arm writes one trace
//! file; the reported order is computed from the file as written.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analysis::{estimate_order, linear_term_coefficient, OrderEstimate, Window};
use crate::error::{Error, Result};
use crate::linalg::{frobenius_norm, matmul, Matrix};
use crate::problem::{
    gen_invertible, gen_rank_deficient, gen_spd, make_init, InitContext, InitScheme,
    RandomMatrixSpec, SpectrumLaw, DEFAULT_CONDITION_CAP,
};
use crate::solvers::{
    adaptive_gd_step, newton_step, solve_hybrid, solve_inverse_gd, solve_inverse_root,
    solve_inverse_sgd, solve_kaczmarz, solve_newton, solve_polyrate, EpochSchedule, HybridConfig,
    Solution, SolverConfig, StepRule, StopReason, WarmStart,
};
use crate::trace::{self, Trace, TraceFormat};

pub const DEFAULT_SEED: u64 = 42;

/// Relative error band used for the quadratic-rate arms. Multiplied by the
/// norm of the reference solution before use.
pub const RELATIVE_WINDOW: Window = Window { hi: 0.2, lo: 1e-12 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PresetName {
    Fig1a,
    Fig1b,
    Fig2a,
    Fig2b,
    Thm3,
    RootDemo,
}

impl PresetName {
    pub const ALL: [PresetName; 6] = [
        PresetName::Fig1a,
        PresetName::Fig1b,
        PresetName::Fig2a,
        PresetName::Fig2b,
        PresetName::Thm3,
        PresetName::RootDemo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PresetName::Fig1a => "fig1a",
            PresetName::Fig1b => "fig1b",
            PresetName::Fig2a => "fig2a",
            PresetName::Fig2b => "fig2b",
            PresetName::Thm3 => "thm3",
            PresetName::RootDemo => "root-demo",
        }
    }

    pub fn default_n(self) -> usize {
        match self {
            PresetName::Fig1a | PresetName::Fig1b => 100,
            PresetName::Fig2a | PresetName::RootDemo => 50,
            PresetName::Fig2b => 1000,
            PresetName::Thm3 => 8,
        }
    }

    /// Arm names in output order.
    pub fn arms(self) -> &'static [&'static str] {
        match self {
            PresetName::Fig1a => &["gd", "sgd", "newton"],
            PresetName::Fig1b => &["hybrid", "fixed-gd"],
            PresetName::Fig2a => &["sgd"],
            PresetName::Fig2b => &["cyclic", "iid"],
            PresetName::Thm3 => &["polyrate"],
            PresetName::RootDemo => &["root"],
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PresetName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown preset `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPreset {
    pub name: PresetName,
    /// Dimension override; the preset default otherwise.
    pub n: Option<usize>,
    pub seed: u64,
    /// Directory receiving `<preset>_<arm>.<ext>`.
    pub output_dir: PathBuf,
    pub format: TraceFormat,
}

impl ExperimentPreset {
    pub fn new(name: PresetName, output_dir: impl Into<PathBuf>) -> Self {
        ExperimentPreset {
            name,
            n: None,
            seed: DEFAULT_SEED,
            output_dir: output_dir.into(),
            format: TraceFormat::Csv,
        }
    }

    pub fn n(&self) -> usize {
        self.n.unwrap_or_else(|| self.name.default_n())
    }

    pub fn arm_path(&self, arm: &str) -> PathBuf {
        self.output_dir
            .join(format!("{}_{}.{}", self.name, arm, self.format.extension()))
    }
}

/// Which error sequence an order is fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderBasis {
    /// Every record.
    Iterations,
    /// The initial record and each epoch end.
    Epochs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderSpec {
    pub basis: OrderBasis,
    pub window: Window,
}

impl OrderSpec {
    /// [`RELATIVE_WINDOW`] scaled by `reference`.
    pub fn relative(basis: OrderBasis, reference: f64) -> Self {
        OrderSpec {
            basis,
            window: RELATIVE_WINDOW.scaled(reference),
        }
    }
}

/// The `err_fro` sequence selected by `basis`.
pub fn error_sequence(trace: &Trace, basis: OrderBasis) -> Result<Vec<f64>> {
    let pick: Vec<Option<f64>> = match basis {
        OrderBasis::Iterations => trace.records().iter().map(|r| r.err_fro).collect(),
        OrderBasis::Epochs => trace.epoch_ends().iter().map(|r| r.err_fro).collect(),
    };
    pick.into_iter()
        .collect::<Option<Vec<f64>>>()
        .ok_or_else(|| Error::invalid("trace has records without err_fro"))
}

pub fn order_of(trace: &Trace, spec: &OrderSpec) -> Result<OrderEstimate> {
    estimate_order(&error_sequence(trace, spec.basis)?, spec.window)
}

#[derive(Debug, Clone)]
pub struct ArmOutcome {
    pub arm: String,
    pub path: PathBuf,
    pub stop: StopReason,
    pub final_loss: f64,
    pub iterations: u64,
    pub epochs: u64,
    pub order: OrderEstimate,
    pub order_spec: OrderSpec,
    /// Arm-specific diagnostics, printed under the table.
    pub extras: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub title: String,
    pub arms: Vec<ArmOutcome>,
}

impl RunReport {
    pub fn arm(&self, name: &str) -> Option<&ArmOutcome> {
        self.arms.iter().find(|a| a.arm == name)
    }

    pub fn any_diverged(&self) -> bool {
        self.arms.iter().any(|a| a.stop == StopReason::Diverged)
    }

    pub fn summary_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.title);
        let _ = writeln!(
            s,
            "{:<10} {:<19} {:>8} {:>7} {:>12} {:>8} {:>6}  file",
            "arm", "stop", "iters", "epochs", "final_loss", "order", "pairs"
        );
        for a in &self.arms {
            let order = if a.order.order.is_finite() {
                format!("{:.4}", a.order.order)
            } else {
                "n/a".to_string()
            };
            let flag = if a.order.insufficient_data { "*" } else { "" };
            let _ = writeln!(
                s,
                "{:<10} {:<19} {:>8} {:>7} {:>12.3e} {:>8} {:>5}{:<1}  {}",
                a.arm,
                a.stop.to_string(),
                a.iterations,
                a.epochs,
                a.final_loss,
                order,
                a.order.points_used,
                flag,
                a.path.display()
            );
        }
        for a in &self.arms {
            for (k, v) in &a.extras {
                let _ = writeln!(s, "  {}.{} = {:e}", a.arm, k, v);
            }
        }
        if self.arms.iter().any(|a| a.order.insufficient_data) {
            let _ = writeln!(s, "  * fewer than 3 in-window pairs");
        }
        s
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

/// Stamps meta, writes the trace and reads it back to compute the order.
fn emit(
    arm: &str,
    mut sol: Solution,
    order_spec: OrderSpec,
    mut meta: BTreeMap<String, Value>,
    path: &Path,
    format: TraceFormat,
    extras: BTreeMap<String, f64>,
) -> Result<ArmOutcome> {
    meta.insert("arm".into(), json!(arm));
    meta.insert("order".into(), to_value(&order_spec));
    meta.insert("stop".into(), to_value(&sol.stop));
    if let Some(s) = sol.switch_iter {
        meta.insert("switch_iter".into(), json!(s));
    }
    sol.trace.meta = meta;
    trace::save(&sol.trace, path, format)?;
    let written = trace::load(path)?;
    let order = order_of(&written, &order_spec)?;
    Ok(ArmOutcome {
        arm: arm.to_string(),
        path: path.to_path_buf(),
        stop: sol.stop,
        final_loss: sol.final_loss(),
        iterations: sol.iterations,
        epochs: sol.epochs,
        order,
        order_spec,
        extras,
    })
}

fn base_meta(
    title: &str,
    n: usize,
    seed: u64,
    problem: &RandomMatrixSpec,
) -> BTreeMap<String, Value> {
    let mut m = BTreeMap::new();
    m.insert("experiment".into(), json!(title));
    m.insert("n".into(), json!(n));
    m.insert("seed".into(), json!(seed));
    m.insert("problem".into(), to_value(problem));
    m
}

fn with(mut m: BTreeMap<String, Value>, pairs: &[(&str, Value)]) -> BTreeMap<String, Value> {
    for (k, v) in pairs {
        m.insert((*k).to_string(), v.clone());
    }
    m
}

/// `0.9 · (tr X / n)^(−1/d)`: a scaled identity that commutes with `X` and
/// starts inside the basin when the spectrum is tight.
pub fn root_init_scale(x: &Matrix, d: u32) -> f64 {
    0.9 * (x.trace() / x.rows() as f64).powf(-1.0 / f64::from(d))
}

fn run_spec(base: SolverConfig, seed: u64) -> SolverConfig {
    SolverConfig { seed, ..base }
}

pub fn run_preset(preset: &ExperimentPreset) -> Result<RunReport> {
    let n = preset.n();
    if n < 2 {
        return Err(Error::invalid(format!(
            "preset dimension must be >= 2, got {n}"
        )));
    }
    std::fs::create_dir_all(&preset.output_dir)?;
    let seed = preset.seed;
    let name = preset.name.as_str();
    let fmt = preset.format;
    let title = format!("preset {name}  n={n}  seed={seed}");
    let mut arms = Vec::new();

    match preset.name {
        PresetName::Fig1a => {
            let spec =
                RandomMatrixSpec::invertible(n, seed).with_condition_cap(DEFAULT_CONDITION_CAP);
            let p = gen_invertible(&spec, &mut spec.rng())?;
            let order = OrderSpec::relative(OrderBasis::Iterations, frobenius_norm(&p.w_star));
            let meta = base_meta(name, n, seed, &spec);
            let ctx = InitContext::inverse(&p.x, Some(&p.w_star));

            let w0 = make_init(&InitScheme::ScaledTrueInverse(0.4), &ctx)?;
            let cfg = run_spec(
                SolverConfig {
                    max_iters: 100,
                    ..Default::default()
                },
                seed,
            );
            let sol = solve_inverse_gd(&p.x, &w0, Some(&p.w_star), &cfg)?;
            let m = with(
                meta.clone(),
                &[
                    ("init", json!("scaled-inverse:0.4")),
                    ("solver", to_value(&cfg)),
                    ("method", json!("adaptive-gd")),
                ],
            );
            arms.push(emit(
                "gd",
                sol,
                order,
                m,
                &preset.arm_path("gd"),
                fmt,
                BTreeMap::new(),
            )?);

            let w0_sgd = make_init(&InitScheme::ScaledTrueInverse(0.5), &ctx)?;
            let cfg = run_spec(
                SolverConfig {
                    max_epochs: 100,
                    ..Default::default()
                },
                seed,
            );
            let sol = solve_inverse_sgd(&p.x, &w0_sgd, Some(&p.w_star), &cfg)?;
            let epoch_order = OrderSpec {
                basis: OrderBasis::Epochs,
                ..order
            };
            let m = with(
                meta.clone(),
                &[
                    ("init", json!("scaled-inverse:0.5")),
                    ("solver", to_value(&cfg)),
                    ("method", json!("adaptive-sgd")),
                ],
            );
            arms.push(emit(
                "sgd",
                sol,
                epoch_order,
                m,
                &preset.arm_path("sgd"),
                fmt,
                BTreeMap::new(),
            )?);

            let cfg = run_spec(
                SolverConfig {
                    max_iters: 100,
                    ..Default::default()
                },
                seed,
            );
            let sol = solve_newton(&p.x, &w0, Some(&p.w_star), &cfg)?;
            let gap = frobenius_norm(&newton_step(&w0, &p.x)?.sub(&adaptive_gd_step(&w0, &p.x)?)?);
            let extras = BTreeMap::from([("first_step_gap_vs_adaptive".to_string(), gap)]);
            let m = with(
                meta,
                &[
                    ("init", json!("scaled-inverse:0.4")),
                    ("solver", to_value(&cfg)),
                    ("method", json!("newton")),
                ],
            );
            arms.push(emit(
                "newton",
                sol,
                order,
                m,
                &preset.arm_path("newton"),
                fmt,
                extras,
            )?);
        }
        PresetName::Fig1b => {
            let spec = RandomMatrixSpec::invertible(n, seed)
                .with_spectrum(SpectrumLaw::Shifted { offset: 1.0 })
                .with_condition_cap(4.0);
            let p = gen_invertible(&spec, &mut spec.rng())?;
            let order = OrderSpec::relative(OrderBasis::Iterations, frobenius_norm(&p.w_star));
            let meta = base_meta(name, n, seed, &spec);
            let w0 = Matrix::zeros(n, n);
            let eta = 0.1;

            let hybrid = HybridConfig {
                warm: WarmStart::FixedGd,
                warm_config: run_spec(
                    SolverConfig {
                        step_rule: StepRule::Fixed { eta },
                        max_iters: 100_000,
                        ..Default::default()
                    },
                    seed,
                ),
                adaptive_config: run_spec(
                    SolverConfig {
                        max_iters: 100,
                        ..Default::default()
                    },
                    seed,
                ),
                switch_loss: 1e-4,
            };
            let sol = solve_hybrid(&p.x, &w0, Some(&p.w_star), &hybrid)?;
            let mut extras = BTreeMap::new();
            if let Some(s) = sol.switch_iter {
                extras.insert("switch_iter".to_string(), s as f64);
                extras.insert(
                    "adaptive_iters".to_string(),
                    (sol.iterations + 1 - s) as f64,
                );
            }
            let m = with(
                meta.clone(),
                &[
                    ("init", json!("zero")),
                    ("solver", to_value(&hybrid)),
                    ("method", json!("hybrid")),
                ],
            );
            arms.push(emit(
                "hybrid",
                sol,
                order,
                m,
                &preset.arm_path("hybrid"),
                fmt,
                extras,
            )?);

            let cfg = run_spec(
                SolverConfig {
                    step_rule: StepRule::Fixed { eta },
                    max_iters: 100_000,
                    ..Default::default()
                },
                seed,
            );
            let sol = solve_inverse_gd(&p.x, &w0, Some(&p.w_star), &cfg)?;
            let m = with(
                meta,
                &[
                    ("init", json!("zero")),
                    ("solver", to_value(&cfg)),
                    ("method", json!("fixed-gd")),
                ],
            );
            arms.push(emit(
                "fixed-gd",
                sol,
                order,
                m,
                &preset.arm_path("fixed-gd"),
                fmt,
                BTreeMap::new(),
            )?);
        }
        PresetName::Fig2a | PresetName::Fig2b => {
            let spec =
                RandomMatrixSpec::invertible(n, seed).with_condition_cap(DEFAULT_CONDITION_CAP);
            let p = gen_invertible(&spec, &mut spec.rng())?;
            let meta = base_meta(name, n, seed, &spec);
            let ctx = InitContext::inverse(&p.x, Some(&p.w_star));
            let reference = frobenius_norm(&p.w_star);
            let (c, schedules, window): (f64, &[(&str, EpochSchedule)], Window) =
                if preset.name == PresetName::Fig2a {
                    (0.5, &[("sgd", EpochSchedule::Cyclic)], RELATIVE_WINDOW)
                } else {
                    (
                        0.1,
                        &[
                            ("cyclic", EpochSchedule::Cyclic),
                            ("iid", EpochSchedule::Iid),
                        ],
                        Window { hi: 0.1, lo: 1e-11 },
                    )
                };
            let order = OrderSpec {
                basis: OrderBasis::Epochs,
                window: window.scaled(reference),
            };
            let init = InitScheme::ScaledTrueInverse(c);
            let w0 = make_init(&init, &ctx)?;
            for &(arm, schedule) in schedules {
                let cfg = run_spec(
                    SolverConfig {
                        schedule,
                        max_epochs: 100,
                        ..Default::default()
                    },
                    seed,
                );
                let sol = solve_inverse_sgd(&p.x, &w0, Some(&p.w_star), &cfg)?;
                let m = with(
                    meta.clone(),
                    &[
                        ("init", json!(init.to_string())),
                        ("solver", to_value(&cfg)),
                        ("method", json!("adaptive-sgd")),
                    ],
                );
                arms.push(emit(
                    arm,
                    sol,
                    order,
                    m,
                    &preset.arm_path(arm),
                    fmt,
                    BTreeMap::new(),
                )?);
            }
        }
        PresetName::Thm3 => {
            let spec = RandomMatrixSpec::rank_deficient(n, n, n, n / 2, seed);
            let p = gen_rank_deficient(&spec, &mut spec.rng())?;
            let coeffs = vec![0.0, 1.0];
            let init = InitScheme::ScaledTrueInverse(0.9);
            let w0 = make_init(&init, &InitContext::target(&p.x, &p.y, Some(&p.w_star)))?;
            let cfg = run_spec(
                SolverConfig {
                    step_rule: StepRule::MatrixPolynomial {
                        coeffs: coeffs.clone(),
                    },
                    max_iters: 200_000,
                    ..Default::default()
                },
                seed,
            );
            let sol = solve_polyrate(&p.x, &p.y, &w0, Some(&p.w_star), &cfg)?;
            let order = OrderSpec {
                basis: OrderBasis::Iterations,
                window: Window::default().scaled(frobenius_norm(&p.w_star)),
            };
            let c0 = linear_term_coefficient(&p.w_star, &p.x, &coeffs)?;
            let extras = BTreeMap::from([("linear_term_norm".to_string(), frobenius_norm(&c0))]);
            let m = with(
                base_meta(name, n, seed, &spec),
                &[
                    ("init", json!(init.to_string())),
                    ("solver", to_value(&cfg)),
                    ("method", json!("polyrate")),
                ],
            );
            arms.push(emit(
                "polyrate",
                sol,
                order,
                m,
                &preset.arm_path("polyrate"),
                fmt,
                extras,
            )?);
        }
        PresetName::RootDemo => {
            let d = 2;
            let spec = RandomMatrixSpec::spd(n, seed)
                .with_spectrum(SpectrumLaw::Shifted { offset: 4.0 })
                .with_condition_cap(1.5);
            let p = gen_spd(&spec, &mut spec.rng())?;
            let truth = p.inverse_root(d);
            let c = root_init_scale(&p.x, d);
            let init = InitScheme::ScaledIdentity(c);
            let w0 = make_init(&init, &InitContext::root(&p.x, Some(&truth)))?;
            let cfg = run_spec(
                SolverConfig {
                    step_rule: StepRule::AdaptiveRoot { d },
                    max_iters: 100,
                    ..Default::default()
                },
                seed,
            );
            let sol = solve_inverse_root(&p.x, &w0, d, Some(&truth), &cfg)?;
            let order = OrderSpec::relative(OrderBasis::Iterations, frobenius_norm(&truth));
            let residual =
                frobenius_norm(&matmul(&matmul(&sol.w, &sol.w)?, &p.x)?.sub(&Matrix::identity(n))?);
            let extras = BTreeMap::from([
                (
                    "max_commutator_drift".to_string(),
                    sol.max_commutator_drift.unwrap_or(0.0),
                ),
                ("root_residual".to_string(), residual),
            ]);
            let m = with(
                base_meta(name, n, seed, &spec),
                &[
                    ("init", json!(init.to_string())),
                    ("solver", to_value(&cfg)),
                    ("method", json!("root")),
                    ("d", json!(d)),
                ],
            );
            arms.push(emit(
                "root",
                sol,
                order,
                m,
                &preset.arm_path("root"),
                fmt,
                extras,
            )?);
        }
    }
    Ok(RunReport { title, arms })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    AdaptiveGd,
    AdaptiveSgd,
    Root,
    Newton,
    FixedGd,
    Kaczmarz,
    Hybrid,
    Polyrate,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::AdaptiveGd => "adaptive-gd",
            Method::AdaptiveSgd => "adaptive-sgd",
            Method::Root => "root",
            Method::Newton => "newton",
            Method::FixedGd => "fixed-gd",
            Method::Kaczmarz => "kaczmarz",
            Method::Hybrid => "hybrid",
            Method::Polyrate => "polyrate",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One solver on one generated problem.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomRun {
    pub method: Method,
    pub n: usize,
    /// Root degree (root method only).
    pub d: Option<u32>,
    pub seed: u64,
    pub init: Option<InitScheme>,
    pub schedule: Option<EpochSchedule>,
    pub eta: Option<f64>,
    pub coeffs: Option<Vec<f64>>,
    pub switch_loss: Option<f64>,
    pub tol: f64,
    pub max_iters: u64,
    pub max_epochs: Option<u64>,
    pub record_every: u64,
    pub condition_cap: Option<f64>,
    pub out: PathBuf,
    pub format: TraceFormat,
}

impl CustomRun {
    pub fn new(method: Method, out: impl Into<PathBuf>) -> Self {
        let defaults = SolverConfig::default();
        CustomRun {
            method,
            n: 100,
            d: None,
            seed: DEFAULT_SEED,
            init: None,
            schedule: None,
            eta: None,
            coeffs: None,
            switch_loss: None,
            tol: defaults.tol_loss,
            max_iters: defaults.max_iters,
            max_epochs: None,
            record_every: defaults.record_every,
            condition_cap: None,
            out: out.into(),
            format: TraceFormat::Csv,
        }
    }

    /// Rejects flags that do not apply to the chosen method.
    pub fn validate(&self) -> Result<()> {
        let m = self.method;
        let pair = |flag: &str| {
            Err(Error::invalid(format!(
                "--{flag} cannot be used with --method {m}"
            )))
        };
        if self.schedule.is_some() && m != Method::AdaptiveSgd {
            return pair("schedule");
        }
        if self.max_epochs.is_some() && m != Method::AdaptiveSgd {
            return pair("max-epochs");
        }
        if self.eta.is_some() && !matches!(m, Method::FixedGd | Method::Hybrid) {
            return pair("eta");
        }
        if self.coeffs.is_some() && m != Method::Polyrate {
            return pair("coeffs");
        }
        if self.switch_loss.is_some() && m != Method::Hybrid {
            return pair("switch-loss");
        }
        if self.d.is_some() && m != Method::Root {
            return pair("d");
        }
        if m == Method::FixedGd && self.eta.is_none() {
            return Err(Error::invalid("--method fixed-gd requires --eta"));
        }
        if self.n == 0 {
            return Err(Error::invalid("--n must be >= 1"));
        }
        if self.d == Some(0) {
            return Err(Error::invalid("--d must be >= 1"));
        }
        Ok(())
    }

    fn default_init(&self) -> InitScheme {
        match self.method {
            Method::FixedGd | Method::Kaczmarz | Method::Hybrid => InitScheme::Zero,
            Method::AdaptiveSgd => InitScheme::ScaledTrueInverse(0.5),
            _ => InitScheme::ScaledTrueInverse(0.4),
        }
    }

    fn config(&self) -> SolverConfig {
        let mut cfg = SolverConfig {
            tol_loss: self.tol,
            max_iters: self.max_iters,
            seed: self.seed,
            record_every: self.record_every,
            ..Default::default()
        };
        if let Some(e) = self.max_epochs {
            cfg.max_epochs = e;
        }
        if let Some(s) = self.schedule {
            cfg.schedule = s;
        }
        cfg
    }
}

pub fn run_custom(run: &CustomRun) -> Result<RunReport> {
    run.validate()?;
    if let Some(dir) = run.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let n = run.n;
    let method = run.method;
    let mut cfg = run.config();
    let title = format!("run {method}  n={n}  seed={}", run.seed);
    let mut meta_pairs: Vec<(&str, Value)> = vec![("method", json!(method.as_str()))];
    let mut extras = BTreeMap::new();

    let outcome = if method == Method::Root {
        let d = run.d.unwrap_or(2);
        let spec = RandomMatrixSpec::spd(n, run.seed)
            .with_spectrum(SpectrumLaw::Shifted { offset: 4.0 })
            .with_condition_cap(run.condition_cap.unwrap_or(1.5));
        let p = gen_spd(&spec, &mut spec.rng())?;
        let truth = p.inverse_root(d);
        let init = run
            .init
            .clone()
            .unwrap_or_else(|| InitScheme::ScaledIdentity(root_init_scale(&p.x, d)));
        let w0 = make_init(&init, &InitContext::root(&p.x, Some(&truth)))?;
        cfg.step_rule = StepRule::AdaptiveRoot { d };
        let sol = solve_inverse_root(&p.x, &w0, d, Some(&truth), &cfg)?;
        extras.insert(
            "max_commutator_drift".to_string(),
            sol.max_commutator_drift.unwrap_or(0.0),
        );
        meta_pairs.extend([
            ("init", json!(init.to_string())),
            ("solver", to_value(&cfg)),
            ("d", json!(d)),
        ]);
        let order = OrderSpec::relative(OrderBasis::Iterations, frobenius_norm(&truth));
        let meta = with(base_meta("run", n, run.seed, &spec), &meta_pairs);
        emit(
            method.as_str(),
            sol,
            order,
            meta,
            &run.out,
            run.format,
            extras,
        )?
    } else {
        let spec = RandomMatrixSpec::invertible(n, run.seed)
            .with_condition_cap(run.condition_cap.unwrap_or(DEFAULT_CONDITION_CAP));
        let p = gen_invertible(&spec, &mut spec.rng())?;
        let init = run.init.clone().unwrap_or_else(|| run.default_init());
        let w0 = make_init(&init, &InitContext::inverse(&p.x, Some(&p.w_star)))?;
        let reference = frobenius_norm(&p.w_star);
        let ws = Some(&p.w_star);
        let mut basis = OrderBasis::Iterations;
        let sol = match method {
            Method::AdaptiveGd => solve_inverse_gd(&p.x, &w0, ws, &cfg)?,
            Method::AdaptiveSgd => {
                basis = OrderBasis::Epochs;
                solve_inverse_sgd(&p.x, &w0, ws, &cfg)?
            }
            Method::Newton => solve_newton(&p.x, &w0, ws, &cfg)?,
            Method::FixedGd => {
                cfg.step_rule = StepRule::Fixed {
                    eta: run.eta.unwrap_or_default(),
                };
                solve_inverse_gd(&p.x, &w0, ws, &cfg)?
            }
            Method::Kaczmarz => solve_kaczmarz(&p.x, &w0, ws, &cfg)?,
            Method::Polyrate => {
                let coeffs = run.coeffs.clone().unwrap_or_else(|| vec![0.0, 1.0]);
                cfg.step_rule = StepRule::MatrixPolynomial { coeffs };
                solve_polyrate(&p.x, &Matrix::identity(n), &w0, ws, &cfg)?
            }
            Method::Hybrid => {
                let hybrid = HybridConfig {
                    warm: WarmStart::FixedGd,
                    warm_config: SolverConfig {
                        step_rule: StepRule::Fixed {
                            eta: run.eta.unwrap_or(0.1),
                        },
                        ..cfg.clone()
                    },
                    adaptive_config: cfg.clone(),
                    switch_loss: run.switch_loss.unwrap_or(1e-4),
                };
                meta_pairs.push(("hybrid", to_value(&hybrid)));
                let sol = solve_hybrid(&p.x, &w0, ws, &hybrid)?;
                if let Some(s) = sol.switch_iter {
                    extras.insert("switch_iter".to_string(), s as f64);
                }
                sol
            }
            Method::Root => unreachable!("handled above"),
        };
        meta_pairs.extend([
            ("init", json!(init.to_string())),
            ("solver", to_value(&cfg)),
        ]);
        let order = OrderSpec::relative(basis, reference);
        let meta = with(base_meta("run", n, run.seed, &spec), &meta_pairs);
        emit(
            method.as_str(),
            sol,
            order,
            meta,
            &run.out,
            run.format,
            extras,
        )?
    };
    Ok(RunReport {
        title,
        arms: vec![outcome],
    })
}
