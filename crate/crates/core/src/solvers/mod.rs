//! Iteration rules and the drivers that run them to a stop condition.

mod dense;
mod record;
mod sgd;
pub mod steps;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::trace::Trace;

pub use dense::{
    solve_hybrid, solve_inverse_gd, solve_inverse_root, solve_kaczmarz, solve_newton,
    solve_polyrate, HybridConfig, WarmStart,
};
pub use sgd::solve_inverse_sgd;
pub use steps::{
    adaptive_gd_step, adaptive_sgd_step, commutator_drift, fixed_gd_step, inverse_loss,
    kaczmarz_sweep, newton_step, polyrate_gd_step, root_gd_step, root_loss, COMMUTATOR_TOLERANCE,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepRule {
    Fixed {
        eta: f64,
    },
    /// `γ = WᵀW`.
    AdaptiveRight,
    AdaptiveRoot {
        d: u32,
    },
    /// `γ = Σ cᵢ (WᵀW)ⁱ`.
    MatrixPolynomial {
        coeffs: Vec<f64>,
    },
}

impl StepRule {
    pub fn validate(&self) -> Result<()> {
        match self {
            StepRule::Fixed { eta } if !(eta.is_finite() && *eta > 0.0) => Err(Error::invalid(
                format!("fixed step needs a finite eta > 0, got {eta}"),
            )),
            StepRule::AdaptiveRoot { d: 0 } => Err(Error::invalid("root degree d must be >= 1")),
            StepRule::MatrixPolynomial { coeffs } => {
                if coeffs.iter().any(|c| !c.is_finite()) {
                    Err(Error::invalid("polynomial coefficients must be finite"))
                } else if coeffs.iter().all(|&c| c == 0.0) {
                    Err(Error::invalid(
                        "polynomial step needs a nonzero coefficient",
                    ))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// Order in which SGD visits the columns within an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpochSchedule {
    /// A fresh uniform permutation per epoch.
    #[default]
    Cyclic,
    /// `n` independent uniform draws per epoch.
    Iid,
}

impl FromStr for EpochSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cyclic" => Ok(EpochSchedule::Cyclic),
            "iid" => Ok(EpochSchedule::Iid),
            _ => Err(Error::invalid(format!(
                "unknown schedule `{s}` (expected cyclic or iid)"
            ))),
        }
    }
}

impl fmt::Display for EpochSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EpochSchedule::Cyclic => "cyclic",
            EpochSchedule::Iid => "iid",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub step_rule: StepRule,
    /// Stop once the loss is at or below this.
    pub tol_loss: f64,
    pub max_iters: u64,
    /// SGD budget; dense solvers ignore it.
    pub max_epochs: u64,
    /// Stop as diverged once the loss exceeds this multiple of the initial loss.
    pub divergence_factor: f64,
    pub schedule: EpochSchedule,
    pub seed: u64,
    /// Keep every k-th record. The first and last are always kept, as are
    /// SGD epoch ends.
    pub record_every: u64,
    /// Fill `wallclock_ns`. Off by default so traces are reproducible.
    pub record_wallclock: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            step_rule: StepRule::AdaptiveRight,
            tol_loss: 1e-24,
            max_iters: 1000,
            max_epochs: 100,
            divergence_factor: 1e6,
            schedule: EpochSchedule::Cyclic,
            seed: 0,
            record_every: 1,
            record_wallclock: false,
        }
    }
}

impl SolverConfig {
    pub fn with_rule(step_rule: StepRule) -> Self {
        SolverConfig {
            step_rule,
            ..SolverConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.step_rule.validate()?;
        if !(self.tol_loss.is_finite() && self.tol_loss > 0.0) {
            return Err(Error::invalid(format!(
                "tol_loss must be > 0, got {}",
                self.tol_loss
            )));
        }
        if self.max_iters == 0 || self.max_epochs == 0 {
            return Err(Error::invalid("iteration and epoch budgets must be >= 1"));
        }
        if self.divergence_factor.is_nan() || self.divergence_factor <= 1.0 {
            return Err(Error::invalid(format!(
                "divergence_factor must be > 1, got {}",
                self.divergence_factor
            )));
        }
        if self.record_every == 0 {
            return Err(Error::invalid("record_every must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Converged,
    MaxIters,
    MaxEpochs,
    /// Loss blew past the divergence factor or went non-finite.
    Diverged,
    /// A step left the iterate bit-for-bit unchanged.
    Stalled,
    /// The warm phase of a hybrid run used its budget without reaching the
    /// switch loss.
    WarmPhaseStalled,
}

impl StopReason {
    /// True for stops where the loss target was met.
    pub fn is_converged(self) -> bool {
        self == StopReason::Converged
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Converged => "converged",
            StopReason::MaxIters => "max-iters",
            StopReason::MaxEpochs => "max-epochs",
            StopReason::Diverged => "diverged",
            StopReason::Stalled => "stalled",
            StopReason::WarmPhaseStalled => "warm-phase-stalled",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub w: Matrix,
    pub trace: Trace,
    pub stop: StopReason,
    /// Steps taken. For SGD this counts single-column updates.
    pub iterations: u64,
    /// Completed epochs (SGD only, otherwise 0).
    pub epochs: u64,
    /// First iteration of the adaptive phase of a hybrid run.
    pub switch_iter: Option<u64>,
    /// Largest relative commutator seen by the root solver.
    pub max_commutator_drift: Option<f64>,
}

impl Solution {
    pub fn final_loss(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.loss)
    }
}
