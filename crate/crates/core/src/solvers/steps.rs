//! Single-iteration update rules. All are pure functions of their inputs.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;

use crate::error::{Error, Result};
use crate::linalg::{frobenius_norm, matmul, norm2, Matrix, Rng};

/// Commutator tolerance enforced by [`root_gd_step`], relative to `‖W‖_F ‖X‖_F`.
pub const COMMUTATOR_TOLERANCE: f64 = 1e-6;

fn require_square_pair(op: &'static str, w: &Matrix, x: &Matrix) -> Result<()> {
    if !x.is_square() || w.shape() != x.shape() {
        return Err(Error::DimensionMismatch {
            op,
            left: w.shape(),
            right: x.shape(),
        });
    }
    Ok(())
}

/// `I − W X`.
pub fn inverse_residual(w: &Matrix, x: &Matrix) -> Result<Matrix> {
    let wx = matmul(w, x)?;
    Matrix::identity(wx.rows()).sub(&wx)
}

/// `½ ‖I − W X‖²_F`.
pub fn inverse_loss(w: &Matrix, x: &Matrix) -> Result<f64> {
    Ok(0.5 * frobenius_norm(&inverse_residual(w, x)?).powi(2))
}

/// Gradient step on `½‖I − W X‖²_F` with the right-multiplicative step size
/// `γ = WᵀW`: returns `W + (I − W X) Xᵀ Wᵀ W`, evaluated left to right.
pub fn adaptive_gd_step(w: &Matrix, x: &Matrix) -> Result<Matrix> {
    require_square_pair("adaptive_gd_step", w, x)?;
    let r = inverse_residual(w, x)?;
    let g = matmul(&r, &x.transpose())?;
    let update = matmul(&matmul(&g, &w.transpose())?, w)?;
    w.add(&update)
}

/// One stochastic step on the column pair `(x, e)`:
/// `W + (e − W x) xᵀ Wᵀ W`, using only matrix-vector products.
pub fn adaptive_sgd_step(w: &Matrix, x_col: &Matrix, e_col: &Matrix) -> Result<Matrix> {
    let n = w.rows();
    if !w.is_square() || x_col.shape() != (n, 1) || e_col.shape() != (n, 1) {
        return Err(Error::DimensionMismatch {
            op: "adaptive_sgd_step",
            left: w.shape(),
            right: x_col.shape(),
        });
    }
    let mut out = w.clone();
    sgd_update(&mut out, x_col.as_slice(), e_col.as_slice())?;
    Ok(out)
}

/// In-place form of [`adaptive_sgd_step`]. Returns the residual
/// `r = e − W x` and `v = Wᵀ W x` so callers can update derived state.
pub(crate) fn sgd_update(w: &mut Matrix, x: &[f64], e: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let wx = w.matvec(x)?;
    let r: Vec<f64> = e.iter().zip(&wx).map(|(a, b)| a - b).collect();
    let v = w.matvec_t(&wx)?;
    w.rank_one_update(&r, &v)?;
    Ok((r, v))
}

/// Relative commutator `‖W X − X W‖_F / (‖W‖_F ‖X‖_F)`; zero for `W = 0`.
pub fn commutator_drift(w: &Matrix, x: &Matrix) -> Result<f64> {
    let c = matmul(w, x)?.sub(&matmul(x, w)?)?;
    let scale = frobenius_norm(w) * frobenius_norm(x);
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok(frobenius_norm(&c) / scale)
}

/// `W^d` by repeated right multiplication; `d ≥ 1`.
pub(crate) fn power(w: &Matrix, d: u32) -> Result<Matrix> {
    let mut p = w.clone();
    for _ in 1..d {
        p = matmul(&p, w)?;
    }
    Ok(p)
}

/// `½ ‖I − W^d X‖²_F`.
pub fn root_loss(w: &Matrix, x: &Matrix, d: u32) -> Result<f64> {
    let r = inverse_residual(&power(w, d)?, x)?;
    Ok(0.5 * frobenius_norm(&r).powi(2))
}

/// Step for the inverse `d`-th root of an SPD `X`:
/// `W + (1/d) W^(d+1) (I − W^d X) X`.
///
/// Only valid while `W` commutes with `X`; fails with `CommutatorDrift`
/// once the relative commutator exceeds [`COMMUTATOR_TOLERANCE`].
pub fn root_gd_step(w: &Matrix, x: &Matrix, d: u32) -> Result<Matrix> {
    require_square_pair("root_gd_step", w, x)?;
    if d == 0 {
        return Err(Error::invalid("root degree d must be >= 1"));
    }
    let drift = commutator_drift(w, x)?;
    if drift > COMMUTATOR_TOLERANCE {
        return Err(Error::CommutatorDrift {
            drift,
            tolerance: COMMUTATOR_TOLERANCE,
        });
    }
    root_update(w, x, d)
}

/// The root update without the commutator check.
pub(crate) fn root_update(w: &Matrix, x: &Matrix, d: u32) -> Result<Matrix> {
    let wd = power(w, d)?;
    let wd1 = matmul(&wd, w)?;
    let r = inverse_residual(&wd, x)?;
    let update = matmul(&matmul(&wd1, &r)?, x)?.scale(1.0 / f64::from(d))?;
    w.add(&update)
}

/// Gradient step on `½‖Y − W X‖²_F` with step size `Σ cᵢ (WᵀW)ⁱ`:
/// `W + (Y − W X) Xᵀ Σ cᵢ (WᵀW)ⁱ`.
///
/// The term `G (WᵀW)ⁱ` with `G = (Y − W X) Xᵀ` is formed as
/// `((G Wᵀ) W) ...`, and zero coefficients are skipped, so `coeffs = [0, 1]`
/// reproduces [`adaptive_gd_step`] bit for bit and `[η]` reproduces
/// [`fixed_gd_step`].
pub fn polyrate_gd_step(w: &Matrix, x: &Matrix, y: &Matrix, coeffs: &[f64]) -> Result<Matrix> {
    if w.cols() != x.rows() || y.shape() != (w.rows(), x.cols()) {
        return Err(Error::DimensionMismatch {
            op: "polyrate_gd_step",
            left: w.shape(),
            right: x.shape(),
        });
    }
    if coeffs.is_empty() {
        return Err(Error::invalid(
            "polynomial step needs at least one coefficient",
        ));
    }
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid("polynomial coefficients must be finite"));
    }
    let residual = y.sub(&matmul(w, x)?)?;
    let mut term = matmul(&residual, &x.transpose())?;
    let wt = w.transpose();
    let mut acc: Option<Matrix> = None;
    for (i, &c) in coeffs.iter().enumerate() {
        if i > 0 {
            term = matmul(&matmul(&term, &wt)?, w)?;
        }
        if c == 0.0 {
            continue;
        }
        let scaled = if c == 1.0 {
            term.clone()
        } else {
            term.scale(c)?
        };
        acc = Some(match acc {
            None => scaled,
            Some(a) => a.add(&scaled)?,
        });
    }
    match acc {
        Some(update) => w.add(&update),
        None => Ok(w.clone()),
    }
}

/// Newton's iteration for the inverse: `2W − W X W`.
pub fn newton_step(w: &Matrix, x: &Matrix) -> Result<Matrix> {
    require_square_pair("newton_step", w, x)?;
    let wxw = matmul(&matmul(w, x)?, w)?;
    w.scale(2.0)?.sub(&wxw)
}

/// Plain gradient step with scalar learning rate: `W + η (I − W X) Xᵀ`.
pub fn fixed_gd_step(w: &Matrix, x: &Matrix, eta: f64) -> Result<Matrix> {
    require_square_pair("fixed_gd_step", w, x)?;
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::invalid(format!(
            "learning rate must be finite and > 0, got {eta}"
        )));
    }
    let r = inverse_residual(w, x)?;
    let g = matmul(&r, &x.transpose())?;
    w.add(&g.scale(eta)?)
}

/// One randomized Kaczmarz sweep per row of `W`.
///
/// Row `j` of `W` solves `Xᵀ w = e_j`, one equation `⟨Xᵢ, w⟩ = δᵢⱼ` per
/// column of `X`. Each sweep makes `n` projections onto equations drawn
/// with probability proportional to `‖Xᵢ‖²`, drawing independently for
/// every row.
pub fn kaczmarz_sweep(w: &Matrix, x: &Matrix, rng: &mut Rng) -> Result<Matrix> {
    require_square_pair("kaczmarz_sweep", w, x)?;
    let n = x.rows();
    let xt = x.transpose();
    let norms_sq: Vec<f64> = (0..n).map(|i| norm2(xt.row(i)).powi(2)).collect();
    if let Some(index) = norms_sq.iter().position(|&s| s == 0.0) {
        return Err(Error::ZeroColumn { index });
    }
    let sampler = WeightedIndex::new(&norms_sq)
        .map_err(|e| Error::invalid(format!("column weights: {e}")))?;

    let mut rows: Vec<f64> = w.as_slice().to_vec();
    for (j, row) in rows.chunks_mut(n).enumerate() {
        for _ in 0..n {
            let i = sampler.sample(rng);
            let col = xt.row(i);
            let mut dot = 0.0;
            for (a, b) in col.iter().zip(row.iter()) {
                dot += a * b;
            }
            let target = if i == j { 1.0 } else { 0.0 };
            let step = (target - dot) / norms_sq[i];
            for (r, c) in row.iter_mut().zip(col) {
                *r += step * c;
            }
        }
    }
    Matrix::from_vec(n, n, rows).map_err(|_| Error::NonFinite {
        op: "kaczmarz_sweep",
    })
}
