use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{frobenius_norm, matmul, seeded_rng, Matrix};
use crate::trace::Phase;

use super::record::{Point, Recorder};
use super::steps::{
    adaptive_gd_step, commutator_drift, fixed_gd_step, inverse_loss, kaczmarz_sweep, newton_step,
    polyrate_gd_step, root_loss, root_update, COMMUTATOR_TOLERANCE,
};
use super::{Solution, SolverConfig, StepRule, StopReason};

enum Outcome {
    Reached,
    Budget,
    Diverged,
    Stalled,
}

/// Iterate state shared by the phases of one run.
struct Run {
    iter: u64,
    w: Matrix,
    loss: f64,
    /// Loss of the very first iterate; the divergence reference.
    loss0: f64,
}

impl Run {
    fn start<'a>(w0: &Matrix, loss: f64, rec: &mut Recorder<'a>) -> Result<Self> {
        if !loss.is_finite() {
            return Err(Error::invalid("initial loss is not finite"));
        }
        rec.record(Point::new(0, loss), w0, true)?;
        Ok(Run {
            iter: 0,
            w: w0.clone(),
            loss,
            loss0: loss,
        })
    }

    /// Takes up to `budget` steps until `target(loss)` holds.
    fn advance(
        &mut self,
        rec: &mut Recorder<'_>,
        budget: u64,
        divergence_factor: f64,
        target: impl Fn(f64) -> bool,
        loss_fn: impl Fn(&Matrix) -> Result<f64>,
        mut step: impl FnMut(&Matrix) -> Result<Matrix>,
    ) -> Result<Outcome> {
        if target(self.loss) {
            return Ok(Outcome::Reached);
        }
        let limit = divergence_factor * self.loss0;
        for _ in 0..budget {
            let next = match step(&self.w) {
                Ok(next) => next,
                Err(Error::NonFinite { .. }) => return Ok(Outcome::Diverged),
                Err(e) => return Err(e),
            };
            if next == self.w {
                return Ok(Outcome::Stalled);
            }
            let loss = match loss_fn(&next) {
                Ok(l) if l.is_finite() => l,
                Ok(_) | Err(Error::NonFinite { .. }) => return Ok(Outcome::Diverged),
                Err(e) => return Err(e),
            };
            self.iter += 1;
            self.w = next;
            self.loss = loss;
            rec.record(Point::new(self.iter, loss), &self.w, false)?;
            if target(loss) {
                return Ok(Outcome::Reached);
            }
            if loss > limit {
                return Ok(Outcome::Diverged);
            }
        }
        Ok(Outcome::Budget)
    }

    fn close(&self, rec: &mut Recorder<'_>) -> Result<()> {
        rec.record(Point::new(self.iter, self.loss), &self.w, true)
    }
}

fn single_phase(
    w0: &Matrix,
    w_star: Option<&Matrix>,
    config: &SolverConfig,
    loss_fn: impl Fn(&Matrix) -> Result<f64>,
    step: impl FnMut(&Matrix) -> Result<Matrix>,
) -> Result<Solution> {
    config.validate()?;
    let mut rec = Recorder::new(config, w_star);
    let mut run = Run::start(w0, loss_fn(w0)?, &mut rec)?;
    let tol = config.tol_loss;
    let outcome = run.advance(
        &mut rec,
        config.max_iters,
        config.divergence_factor,
        |l| l <= tol,
        &loss_fn,
        step,
    )?;
    run.close(&mut rec)?;
    let stop = match outcome {
        Outcome::Reached => StopReason::Converged,
        Outcome::Budget => StopReason::MaxIters,
        Outcome::Diverged => StopReason::Diverged,
        Outcome::Stalled => StopReason::Stalled,
    };
    Ok(Solution {
        w: run.w,
        trace: rec.finish(),
        stop,
        iterations: run.iter,
        epochs: 0,
        switch_iter: None,
        max_commutator_drift: None,
    })
}

fn check_square(op: &'static str, x: &Matrix, w0: &Matrix) -> Result<()> {
    if !x.is_square() || w0.shape() != x.shape() {
        return Err(Error::DimensionMismatch {
            op,
            left: w0.shape(),
            right: x.shape(),
        });
    }
    Ok(())
}

/// Minimizes `½‖I − W X‖²_F` with the adaptive, fixed or polynomial step.
///
/// `w_star`, when given, fills `err_fro = ‖W − W*‖_F` in the trace.
pub fn solve_inverse_gd(
    x: &Matrix,
    w0: &Matrix,
    w_star: Option<&Matrix>,
    config: &SolverConfig,
) -> Result<Solution> {
    check_square("solve_inverse_gd", x, w0)?;
    let loss = |w: &Matrix| inverse_loss(w, x);
    match &config.step_rule {
        StepRule::AdaptiveRight => {
            single_phase(w0, w_star, config, loss, |w| adaptive_gd_step(w, x))
        }
        StepRule::Fixed { eta } => {
            let eta = *eta;
            single_phase(w0, w_star, config, loss, |w| fixed_gd_step(w, x, eta))
        }
        StepRule::MatrixPolynomial { coeffs } => {
            let id = Matrix::identity(x.rows());
            single_phase(w0, w_star, config, loss, |w| {
                polyrate_gd_step(w, x, &id, coeffs)
            })
        }
        StepRule::AdaptiveRoot { .. } => Err(Error::invalid(
            "the root step rule belongs to solve_inverse_root",
        )),
    }
}

/// Newton's iteration `2W − W X W`. Ignores `config.step_rule`.
pub fn solve_newton(
    x: &Matrix,
    w0: &Matrix,
    w_star: Option<&Matrix>,
    config: &SolverConfig,
) -> Result<Solution> {
    check_square("solve_newton", x, w0)?;
    single_phase(
        w0,
        w_star,
        config,
        |w| inverse_loss(w, x),
        |w| newton_step(w, x),
    )
}

/// One randomized Kaczmarz sweep per iteration, seeded from `config.seed`.
/// Ignores `config.step_rule`.
pub fn solve_kaczmarz(
    x: &Matrix,
    w0: &Matrix,
    w_star: Option<&Matrix>,
    config: &SolverConfig,
) -> Result<Solution> {
    check_square("solve_kaczmarz", x, w0)?;
    let mut rng = seeded_rng(config.seed);
    single_phase(
        w0,
        w_star,
        config,
        |w| inverse_loss(w, x),
        |w| kaczmarz_sweep(w, x, &mut rng),
    )
}

/// Minimizes `½‖I − W^d X‖²_F` for SPD `X`.
///
/// Every iterate must commute with `X` to within [`COMMUTATOR_TOLERANCE`];
/// a violation is returned as `CommutatorDrift`. `truth` is `X^(−1/d)`.
pub fn solve_inverse_root(
    x: &Matrix,
    w0: &Matrix,
    d: u32,
    truth: Option<&Matrix>,
    config: &SolverConfig,
) -> Result<Solution> {
    check_square("solve_inverse_root", x, w0)?;
    if d == 0 {
        return Err(Error::invalid("root degree d must be >= 1"));
    }
    let mut max_drift = 0.0f64;
    let mut checked_step = |w: &Matrix| {
        let drift = commutator_drift(w, x)?;
        max_drift = max_drift.max(drift);
        if drift > COMMUTATOR_TOLERANCE {
            return Err(Error::CommutatorDrift {
                drift,
                tolerance: COMMUTATOR_TOLERANCE,
            });
        }
        root_update(w, x, d)
    };
    let mut sol = single_phase(w0, truth, config, |w| root_loss(w, x, d), &mut checked_step)?;
    let last = commutator_drift(&sol.w, x)?;
    let drift = max_drift.max(last);
    sol.max_commutator_drift = Some(drift);
    if last > COMMUTATOR_TOLERANCE {
        return Err(Error::CommutatorDrift {
            drift: last,
            tolerance: COMMUTATOR_TOLERANCE,
        });
    }
    Ok(sol)
}

/// Minimizes `½‖Y − W X‖²_F` for rectangular `W` with the step
/// `Σ cᵢ (WᵀW)ⁱ`. `AdaptiveRight` is read as `[0, 1]` and `Fixed` as `[eta]`.
pub fn solve_polyrate(
    x: &Matrix,
    y: &Matrix,
    w0: &Matrix,
    w_star: Option<&Matrix>,
    config: &SolverConfig,
) -> Result<Solution> {
    if w0.cols() != x.rows() || y.shape() != (w0.rows(), x.cols()) {
        return Err(Error::DimensionMismatch {
            op: "solve_polyrate",
            left: w0.shape(),
            right: x.shape(),
        });
    }
    let coeffs = match &config.step_rule {
        StepRule::MatrixPolynomial { coeffs } => coeffs.clone(),
        StepRule::AdaptiveRight => vec![0.0, 1.0],
        StepRule::Fixed { eta } => vec![*eta],
        StepRule::AdaptiveRoot { .. } => {
            return Err(Error::invalid(
                "the root step rule does not apply to targets",
            ))
        }
    };
    let loss = |w: &Matrix| -> Result<f64> {
        let r = y.sub(&matmul(w, x)?)?;
        Ok(0.5 * frobenius_norm(&r).powi(2))
    };
    single_phase(w0, w_star, config, loss, |w| {
        polyrate_gd_step(w, x, y, &coeffs)
    })
}

/// Linear-rate method used to reach the quadratic basin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WarmStart {
    /// Step size taken from the warm config's `Fixed { eta }` rule.
    FixedGd,
    Kaczmarz,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridConfig {
    pub warm: WarmStart,
    /// Budget, seed and recording options for the warm phase. Recording
    /// options apply to the whole trace.
    pub warm_config: SolverConfig,
    /// Budget and tolerance of the adaptive phase; the step rule is always
    /// adaptive-right.
    pub adaptive_config: SolverConfig,
    /// The warm phase ends once the loss drops below this.
    pub switch_loss: f64,
}

/// Warm phase until `loss < switch_loss`, then adaptive GD to `tol_loss`.
///
/// Records carry `phase`. The warm phase ends on the first iterate below
/// the switch loss; adaptive records start at the next iteration, which is
/// reported as `switch_iter`.
pub fn solve_hybrid(
    x: &Matrix,
    w0: &Matrix,
    w_star: Option<&Matrix>,
    hybrid: &HybridConfig,
) -> Result<Solution> {
    check_square("solve_hybrid", x, w0)?;
    let warm_cfg = &hybrid.warm_config;
    let adaptive_cfg = &hybrid.adaptive_config;
    warm_cfg.validate()?;
    adaptive_cfg.validate()?;
    let switch = hybrid.switch_loss;
    if !(switch.is_finite() && switch > adaptive_cfg.tol_loss) {
        return Err(Error::invalid(format!(
            "switch loss {switch} must exceed the tolerance {}",
            adaptive_cfg.tol_loss
        )));
    }

    let loss_fn = |w: &Matrix| inverse_loss(w, x);
    let mut rec = Recorder::new(warm_cfg, w_star);
    rec.phase = Some(Phase::Warm);
    let mut run = Run::start(w0, loss_fn(w0)?, &mut rec)?;

    let warm_outcome = match hybrid.warm {
        WarmStart::FixedGd => {
            let eta = match warm_cfg.step_rule {
                StepRule::Fixed { eta } => eta,
                _ => {
                    return Err(Error::invalid(
                        "fixed-step warm start needs a fixed step rule in the warm config",
                    ))
                }
            };
            run.advance(
                &mut rec,
                warm_cfg.max_iters,
                warm_cfg.divergence_factor,
                |l| l < switch,
                loss_fn,
                |w| fixed_gd_step(w, x, eta),
            )?
        }
        WarmStart::Kaczmarz => {
            let mut rng = seeded_rng(warm_cfg.seed);
            run.advance(
                &mut rec,
                warm_cfg.max_iters,
                warm_cfg.divergence_factor,
                |l| l < switch,
                loss_fn,
                |w| kaczmarz_sweep(w, x, &mut rng),
            )?
        }
    };
    run.close(&mut rec)?;

    let finish = |run: Run, rec: Recorder<'_>, stop, switch_iter| Solution {
        w: run.w,
        trace: rec.finish(),
        stop,
        iterations: run.iter,
        epochs: 0,
        switch_iter,
        max_commutator_drift: None,
    };
    match warm_outcome {
        Outcome::Reached => {}
        Outcome::Budget | Outcome::Stalled => {
            return Ok(finish(run, rec, StopReason::WarmPhaseStalled, None))
        }
        Outcome::Diverged => return Ok(finish(run, rec, StopReason::Diverged, None)),
    }

    let switch_iter = run.iter + 1;
    rec.phase = Some(Phase::Adaptive);
    let tol = adaptive_cfg.tol_loss;
    let outcome = run.advance(
        &mut rec,
        adaptive_cfg.max_iters,
        adaptive_cfg.divergence_factor,
        |l| l <= tol,
        loss_fn,
        |w| adaptive_gd_step(w, x),
    )?;
    if run.iter >= switch_iter {
        run.close(&mut rec)?;
    }
    let stop = match outcome {
        Outcome::Reached => StopReason::Converged,
        Outcome::Budget => StopReason::MaxIters,
        Outcome::Diverged => StopReason::Diverged,
        Outcome::Stalled => StopReason::Stalled,
    };
    Ok(finish(run, rec, stop, Some(switch_iter)))
}
