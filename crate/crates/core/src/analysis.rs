//! Convergence-order estimation and direct numerical checks of the error
//! recursions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{frobenius_norm, matmul, Matrix};
use crate::trace::TraceRecord;

/// Minimum number of consecutive in-window pairs for a trusted estimate.
pub const MIN_PAIRS: usize = 3;

/// Slack added to the right side of [`verify_quadratic_bound`].
pub const BOUND_SLACK: f64 = 1e-12;

/// Inclusive error band `[lo, hi]` used by [`estimate_order`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub hi: f64,
    pub lo: f64,
}

impl Default for Window {
    /// `(1e-2, 1e-13)`: drops the pre-asymptotic phase and the float floor.
    fn default() -> Self {
        Window {
            hi: 1e-2,
            lo: 1e-13,
        }
    }
}

impl Window {
    pub fn new(hi: f64, lo: f64) -> Result<Self> {
        let w = Window { hi, lo };
        w.validate()?;
        Ok(w)
    }

    /// Both bounds multiplied by `s`, for errors measured in absolute units
    /// against a reference of size `s`.
    pub fn scaled(self, s: f64) -> Self {
        Window {
            hi: self.hi * s,
            lo: self.lo * s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hi.is_finite() && self.lo > 0.0 && self.hi > self.lo {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "order window needs hi > lo > 0, got ({}, {})",
                self.hi, self.lo
            )))
        }
    }

    pub fn contains(&self, e: f64) -> bool {
        e >= self.lo && e <= self.hi
    }
}

/// Fit of `log e_{t+1} = order · log e_t + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderEstimate {
    /// NaN when fewer than two usable pairs exist.
    pub order: f64,
    /// `log C`.
    pub intercept: f64,
    pub points_used: usize,
    /// Root-mean-square residual of the fit in log space.
    pub fit_residual: f64,
    pub window: Window,
    pub insufficient_data: bool,
}

/// Least-squares estimate of the convergence order from an error sequence.
///
/// Uses every consecutive pair `(e_t, e_{t+1})` with both values inside
/// `window`. Zeros count as outside any window. Fewer than [`MIN_PAIRS`]
/// pairs sets `insufficient_data` instead of failing.
pub fn estimate_order(errs: &[f64], window: Window) -> Result<OrderEstimate> {
    window.validate()?;
    if let Some(bad) = errs.iter().find(|e| e.is_nan() || **e < 0.0) {
        return Err(Error::invalid(format!("error sequence contains {bad}")));
    }
    let pairs: Vec<(f64, f64)> = errs
        .windows(2)
        .filter(|p| window.contains(p[0]) && window.contains(p[1]))
        .map(|p| (p[0].ln(), p[1].ln()))
        .collect();
    let m = pairs.len();
    let mut est = OrderEstimate {
        order: f64::NAN,
        intercept: f64::NAN,
        points_used: m,
        fit_residual: f64::NAN,
        window,
        insufficient_data: m < MIN_PAIRS,
    };
    if m < 2 {
        return Ok(est);
    }
    let mf = m as f64;
    let mean_x = pairs.iter().map(|p| p.0).sum::<f64>() / mf;
    let mean_y = pairs.iter().map(|p| p.1).sum::<f64>() / mf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in &pairs {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if sxx == 0.0 {
        est.insufficient_data = true;
        return Ok(est);
    }
    let order = sxy / sxx;
    let intercept = mean_y - order * mean_x;
    let ss: f64 = pairs
        .iter()
        .map(|&(x, y)| (y - order * x - intercept).powi(2))
        .sum();
    est.order = order;
    est.intercept = intercept;
    est.fit_residual = (ss / mf).sqrt();
    Ok(est)
}

fn check_inverse(x: &Matrix, w_star: &Matrix) -> Result<()> {
    if !x.is_square() || w_star.shape() != x.shape() {
        return Err(Error::DimensionMismatch {
            op: "check_inverse",
            left: w_star.shape(),
            right: x.shape(),
        });
    }
    let n = x.rows();
    let residual = frobenius_norm(&matmul(w_star, x)?.sub(&Matrix::identity(n))?);
    let tolerance = 1e-8 * n as f64;
    if residual > tolerance {
        return Err(Error::NotAnInverse {
            residual,
            tolerance,
        });
    }
    Ok(())
}

/// Ordered product `Π (I − Xᵢ Xᵢᵀ W*ᵀ W*)` over `ordering`, left to right.
///
/// This is the coefficient of the initial error after one cyclic SGD epoch.
/// For an exact inverse it vanishes for every ordering.
pub fn epoch_product(x: &Matrix, w_star: &Matrix, ordering: &[usize]) -> Result<Matrix> {
    check_inverse(x, w_star)?;
    let n = x.rows();
    let mut seen = vec![false; n];
    if ordering.len() != n
        || !ordering
            .iter()
            .all(|&i| i < n && !std::mem::replace(&mut seen[i], true))
    {
        return Err(Error::invalid(
            "ordering is not a permutation of the columns",
        ));
    }
    let m = matmul(&w_star.transpose(), w_star)?;
    let mut p = Matrix::identity(n);
    for &i in ordering {
        // P (I − xᵢ xᵢᵀ M) = P − (P xᵢ)(M xᵢ)ᵀ, M symmetric
        let xi = x.column(i);
        let u: Vec<f64> = p.matvec(&xi)?.into_iter().map(|a| -a).collect();
        let v = m.matvec(&xi)?;
        p.rank_one_update(&u, &v)?;
    }
    Ok(p)
}

/// `‖Xᵢ Xᵢᵀ W*ᵀ W* · Xⱼ Xⱼᵀ W*ᵀ W*‖_F`, which vanishes for `i ≠ j`.
pub fn epoch_cross_term(x: &Matrix, w_star: &Matrix, i: usize, j: usize) -> Result<f64> {
    check_inverse(x, w_star)?;
    let n = x.rows();
    if i >= n || j >= n {
        return Err(Error::invalid(format!(
            "column index out of range for n = {n}"
        )));
    }
    let m = matmul(&w_star.transpose(), w_star)?;
    let factor = |k: usize| -> Result<Matrix> {
        let xk = Matrix::column_vector(&x.column(k))?;
        matmul(&matmul(&xk, &xk.transpose())?, &m)
    };
    Ok(frobenius_norm(&matmul(&factor(i)?, &factor(j)?)?))
}

/// `I − X Xᵀ Σ cᵢ (W*ᵀ W*)ⁱ`, the coefficient of the linear error term for
/// the polynomial step on a target problem. Zero means the linear term
/// cancels.
pub fn linear_term_coefficient(w_star: &Matrix, x: &Matrix, coeffs: &[f64]) -> Result<Matrix> {
    if w_star.cols() != x.rows() {
        return Err(Error::DimensionMismatch {
            op: "linear_term_coefficient",
            left: w_star.shape(),
            right: x.shape(),
        });
    }
    if coeffs.is_empty() {
        return Err(Error::invalid("coefficient list is empty"));
    }
    let d = x.rows();
    let m = matmul(&w_star.transpose(), w_star)?;
    let mut power = Matrix::identity(d);
    let mut c0 = Matrix::zeros(d, d);
    for (i, &c) in coeffs.iter().enumerate() {
        if i > 0 {
            power = matmul(&power, &m)?;
        }
        c0 = c0.add(&power.scale(c)?)?;
    }
    let xxt = matmul(x, &x.transpose())?;
    Matrix::identity(d).sub(&matmul(&xxt, &c0)?)
}

/// Extreme singular values of `X`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumInfo {
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub n: usize,
}

impl SpectrumInfo {
    pub fn new(sigma_max: f64, sigma_min: f64, n: usize) -> Result<Self> {
        if !(sigma_min > 0.0 && sigma_max >= sigma_min && sigma_max.is_finite()) || n == 0 {
            return Err(Error::invalid(format!(
                "spectrum needs sigma_max >= sigma_min > 0, got ({sigma_max}, {sigma_min})"
            )));
        }
        Ok(SpectrumInfo {
            sigma_max,
            sigma_min,
            n,
        })
    }

    /// From a list of singular values in any order.
    pub fn from_singular_values(sigma: &[f64]) -> Result<Self> {
        let max = sigma.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = sigma.iter().copied().fold(f64::INFINITY, f64::min);
        SpectrumInfo::new(max, min, sigma.len())
    }
}

fn err_of(r: &TraceRecord) -> Result<f64> {
    r.err_fro
        .ok_or_else(|| Error::invalid(format!("record {} has no err_fro", r.iter)))
}

/// Checks `e'² ≤ σ₁⁴ e⁶ + n σ₁⁴ σₙ⁻² e⁴` (plus [`BOUND_SLACK`]) for a
/// consecutive pair of adaptive-GD records, `e = ‖U‖_F`.
///
/// Only meaningful close to the solution. The inequality is checked as
/// written; it can fail even there (e.g. the 1×1 case `x = 2`, `u = −0.1`).
pub fn verify_quadratic_bound(
    prev: &TraceRecord,
    next: &TraceRecord,
    spectrum: &SpectrumInfo,
) -> Result<bool> {
    let e = err_of(prev)?;
    let e_next = err_of(next)?;
    let s4 = spectrum.sigma_max.powi(4);
    let bound = s4 * e.powi(6)
        + spectrum.n as f64 * s4 * spectrum.sigma_min.powi(-2) * e.powi(4)
        + BOUND_SLACK;
    Ok(e_next * e_next <= bound)
}

/// `σ₁⁴ e⁴ (2‖W*‖_F + e)²`, a bound on `‖U'‖²_F` that follows from
/// [`predicted_error_update`] by submultiplicativity.
pub fn quadratic_bound_sq(err: f64, sigma_max: f64, w_star_fro: f64) -> f64 {
    sigma_max.powi(4) * err.powi(4) * (2.0 * w_star_fro + err).powi(2)
}

/// Error after one adaptive-GD step, `U' = −U X Xᵀ (UᵀU + W*ᵀU + UᵀW*)`,
/// where `U = W − W*`.
pub fn predicted_error_update(u: &Matrix, x: &Matrix, w_star: &Matrix) -> Result<Matrix> {
    let ut = u.transpose();
    let inner = matmul(&ut, u)?
        .add(&matmul(&w_star.transpose(), u)?)?
        .add(&matmul(&ut, w_star)?)?;
    let xxt = matmul(x, &x.transpose())?;
    matmul(&matmul(u, &xxt)?, &inner)?.scale(-1.0)
}
