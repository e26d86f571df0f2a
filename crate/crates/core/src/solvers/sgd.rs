use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::linalg::{frobenius_norm, seeded_rng, Matrix};

use super::record::{Point, Recorder};
use super::steps::{inverse_residual, sgd_update};
use super::{EpochSchedule, Solution, SolverConfig, StepRule, StopReason};

fn half_sq(r: &Matrix) -> f64 {
    0.5 * frobenius_norm(r).powi(2)
}

/// Single-column adaptive SGD on `½‖I − W X‖²_F`.
///
/// Each epoch visits `n` columns in the order given by `config.schedule`.
/// Every step is recorded with its `sample_index`; `epoch` holds the number
/// of completed epochs, so the last step of epoch `k` is the first record
/// carrying `epoch = k`.
///
/// The residual `I − W X` is updated in O(n²) per step and recomputed
/// exactly at every epoch end. Convergence is tested at epoch ends,
/// divergence after every step. Only `max_epochs` bounds the run.
pub fn solve_inverse_sgd(
    x: &Matrix,
    w0: &Matrix,
    w_star: Option<&Matrix>,
    config: &SolverConfig,
) -> Result<Solution> {
    config.validate()?;
    if !x.is_square() || w0.shape() != x.shape() {
        return Err(Error::DimensionMismatch {
            op: "solve_inverse_sgd",
            left: w0.shape(),
            right: x.shape(),
        });
    }
    if config.step_rule != StepRule::AdaptiveRight {
        return Err(Error::invalid(
            "SGD only supports the adaptive-right step rule",
        ));
    }
    let n = x.rows();
    let xt = x.transpose();
    let mut rng = seeded_rng(config.seed);
    let mut rec = Recorder::new(config, w_star);

    let mut w = w0.clone();
    let mut residual = inverse_residual(&w, x)?;
    let mut loss = half_sq(&residual);
    if !loss.is_finite() {
        return Err(Error::invalid("initial loss is not finite"));
    }
    let loss0 = loss;
    let limit = config.divergence_factor * loss0;
    let mut iter = 0u64;
    let mut epochs = 0u64;
    let point = |iter, loss, epoch, sample| Point {
        iter,
        loss,
        epoch: Some(epoch),
        sample_index: sample,
    };
    rec.record(point(0, loss, 0, None), &w, true)?;

    let mut unit = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    let mut stop = if loss <= config.tol_loss {
        Some(StopReason::Converged)
    } else {
        None
    };
    let mut last_sample = None;

    while stop.is_none() {
        if epochs == config.max_epochs {
            stop = Some(StopReason::MaxEpochs);
            break;
        }
        match config.schedule {
            EpochSchedule::Cyclic => order.shuffle(&mut rng),
            EpochSchedule::Iid => {
                for slot in order.iter_mut() {
                    *slot = rng.random_range(0..n);
                }
            }
        }
        let w_before = w.clone();
        for (k, &i) in order.iter().enumerate() {
            unit[i] = 1.0;
            let stepped = sgd_update(&mut w, xt.row(i), &unit);
            unit[i] = 0.0;
            let (r, v) = match stepped {
                Ok(rv) => rv,
                Err(Error::NonFinite { .. }) => {
                    stop = Some(StopReason::Diverged);
                    break;
                }
                Err(e) => return Err(e),
            };
            // I − W'X = (I − WX) − r (Xᵀv)ᵀ
            let xtv = x.matvec_t(&v)?;
            let neg_r: Vec<f64> = r.iter().map(|a| -a).collect();
            let last_in_epoch = k + 1 == n;
            let updated = residual.rank_one_update(&neg_r, &xtv);
            let new_loss = match updated {
                Ok(()) if last_in_epoch => {
                    residual = inverse_residual(&w, x)?;
                    half_sq(&residual)
                }
                Ok(()) => half_sq(&residual),
                Err(Error::NonFinite { .. }) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            if !new_loss.is_finite() {
                // keep the last finite state
                stop = Some(StopReason::Diverged);
                break;
            }
            iter += 1;
            loss = new_loss;
            last_sample = Some(i as u64);
            if last_in_epoch {
                epochs += 1;
            }
            rec.record(point(iter, loss, epochs, last_sample), &w, last_in_epoch)?;
            if loss > limit {
                stop = Some(StopReason::Diverged);
                break;
            }
        }
        if stop.is_some() {
            break;
        }
        if loss <= config.tol_loss {
            stop = Some(StopReason::Converged);
        } else if w == w_before {
            stop = Some(StopReason::Stalled);
        }
    }

    let p = Point {
        iter,
        loss,
        epoch: Some(epochs),
        sample_index: last_sample,
    };
    rec.record(p, &w, true)?;
    Ok(Solution {
        w,
        trace: rec.finish(),
        stop: stop.unwrap_or(StopReason::MaxEpochs),
        iterations: iter,
        epochs,
        switch_iter: None,
        max_commutator_drift: None,
    })
}
