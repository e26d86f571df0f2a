//! Random test problems with known solutions, and initial iterates.
//!
//! Generators always return the exact solution they were built from
//! (`W*`, the SPD inverse root, ...) so that error norms are measured
//! against a reference that does not depend on any solver in this crate.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    frobenius_norm, gaussian_matrix, haar_orthogonal, matmul, seeded_rng, spectral_norm, Matrix,
    Rng,
};

/// Redraws allowed when a spectrum violates the condition cap.
pub const MAX_REDRAWS: usize = 1000;

/// Condition cap the experiment presets use unless they say otherwise.
pub const DEFAULT_CONDITION_CAP: f64 = 1e4;

/// How singular values (or eigenvalues) are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "law")]
pub enum SpectrumLaw {
    /// `|z|` with `z ~ N(0, 1)`.
    AbsNormal,
    /// `offset + |z|`; keeps the spectrum away from zero.
    Shifted { offset: f64 },
}

impl SpectrumLaw {
    fn draw(&self, n: usize, rng: &mut Rng) -> Vec<f64> {
        let offset = match *self {
            SpectrumLaw::AbsNormal => 0.0,
            SpectrumLaw::Shifted { offset } => offset,
        };
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                offset + z.abs()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum MatrixKind {
    GeneralInvertible,
    Spd,
    /// `X` is `n x samples`, `W*` is `targets x n` with the given rank.
    RankDeficientTarget {
        rank: usize,
        targets: usize,
        samples: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomMatrixSpec {
    pub n: usize,
    pub seed: u64,
    pub kind: MatrixKind,
    /// Upper bound on `max / min` of the drawn spectrum; the whole spectrum
    /// is redrawn when it is exceeded.
    pub condition_cap: Option<f64>,
    pub spectrum: SpectrumLaw,
}

impl RandomMatrixSpec {
    pub fn invertible(n: usize, seed: u64) -> Self {
        RandomMatrixSpec {
            n,
            seed,
            kind: MatrixKind::GeneralInvertible,
            condition_cap: None,
            spectrum: SpectrumLaw::AbsNormal,
        }
    }

    pub fn spd(n: usize, seed: u64) -> Self {
        RandomMatrixSpec {
            kind: MatrixKind::Spd,
            ..RandomMatrixSpec::invertible(n, seed)
        }
    }

    pub fn rank_deficient(
        d: usize,
        targets: usize,
        samples: usize,
        rank: usize,
        seed: u64,
    ) -> Self {
        RandomMatrixSpec {
            kind: MatrixKind::RankDeficientTarget {
                rank,
                targets,
                samples,
            },
            ..RandomMatrixSpec::invertible(d, seed)
        }
    }

    pub fn with_condition_cap(mut self, cap: f64) -> Self {
        self.condition_cap = Some(cap);
        self
    }

    pub fn with_spectrum(mut self, law: SpectrumLaw) -> Self {
        self.spectrum = law;
        self
    }

    /// Fresh generator for this spec's seed.
    pub fn rng(&self) -> Rng {
        seeded_rng(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("dimension n must be at least 1"));
        }
        if let Some(cap) = self.condition_cap {
            if !cap.is_finite() || cap <= 1.0 {
                return Err(Error::invalid(format!(
                    "condition cap must be a finite value > 1, got {cap}"
                )));
            }
        }
        if let SpectrumLaw::Shifted { offset } = self.spectrum {
            if !offset.is_finite() || offset < 0.0 {
                return Err(Error::invalid(format!(
                    "spectrum offset must be finite and >= 0, got {offset}"
                )));
            }
        }
        if let MatrixKind::RankDeficientTarget {
            rank,
            targets,
            samples,
        } = self.kind
        {
            if rank == 0 || rank >= self.n {
                return Err(Error::invalid(format!(
                    "rank must satisfy 1 <= rank < d = {}, got {rank}",
                    self.n
                )));
            }
            if rank > targets {
                return Err(Error::invalid(format!(
                    "rank {rank} exceeds the number of targets {targets}"
                )));
            }
            if samples < self.n {
                return Err(Error::invalid(format!(
                    "need at least d = {} samples, got {samples}",
                    self.n
                )));
            }
        }
        Ok(())
    }

    fn draw_spectrum(&self, rng: &mut Rng) -> Result<Vec<f64>> {
        for _ in 0..MAX_REDRAWS {
            let mut s = self.spectrum.draw(self.n, rng);
            s.sort_by(|a, b| b.total_cmp(a));
            let (max, min) = (s[0], s[s.len() - 1]);
            let ok = min > 0.0 && self.condition_cap.is_none_or(|cap| max / min <= cap);
            if ok {
                return Ok(s);
            }
        }
        Err(Error::GenerationFailed {
            cap: self.condition_cap.unwrap_or(f64::INFINITY),
            attempts: MAX_REDRAWS,
        })
    }
}

/// `X = U diag(σ) Vᵀ` together with `W* = V diag(1/σ) Uᵀ`.
#[derive(Debug, Clone)]
pub struct InvertibleProblem {
    pub x: Matrix,
    pub w_star: Matrix,
    /// Singular values of `X`, descending.
    pub sigma: Vec<f64>,
}

pub fn gen_invertible(spec: &RandomMatrixSpec, rng: &mut Rng) -> Result<InvertibleProblem> {
    spec.validate()?;
    if spec.kind != MatrixKind::GeneralInvertible {
        return Err(Error::invalid(
            "gen_invertible needs a general-invertible spec",
        ));
    }
    let sigma = spec.draw_spectrum(rng)?;
    let u = haar_orthogonal(spec.n, rng);
    let v = haar_orthogonal(spec.n, rng);
    let inv: Vec<f64> = sigma.iter().map(|s| 1.0 / s).collect();
    let x = matmul(&u.scale_columns(&sigma)?, &v.transpose())?;
    let w_star = matmul(&v.scale_columns(&inv)?, &u.transpose())?;
    Ok(InvertibleProblem { x, w_star, sigma })
}

/// `X = Q diag(λ) Qᵀ`, exactly symmetric.
#[derive(Debug, Clone)]
pub struct SpdProblem {
    pub x: Matrix,
    /// Eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    q: Matrix,
}

impl SpdProblem {
    /// Ground-truth `X^(-1/d)`.
    pub fn inverse_root(&self, d: u32) -> Matrix {
        assert!(d >= 1, "root degree must be >= 1");
        let scaled: Vec<f64> = self
            .eigenvalues
            .iter()
            .map(|l| l.powf(-1.0 / f64::from(d)))
            .collect();
        let m = matmul(
            &self.q.scale_columns(&scaled).expect("finite"),
            &self.q.transpose(),
        )
        .expect("square");
        m.symmetrized().expect("square")
    }

    pub fn eigenvectors(&self) -> &Matrix {
        &self.q
    }
}

pub fn gen_spd(spec: &RandomMatrixSpec, rng: &mut Rng) -> Result<SpdProblem> {
    spec.validate()?;
    if spec.kind != MatrixKind::Spd {
        return Err(Error::invalid("gen_spd needs an spd spec"));
    }
    let eigenvalues = spec.draw_spectrum(rng)?;
    let q = haar_orthogonal(spec.n, rng);
    let x = matmul(&q.scale_columns(&eigenvalues)?, &q.transpose())?.symmetrized()?;
    Ok(SpdProblem { x, eigenvalues, q })
}

/// Linear system `W X = Y` whose exact solution `W*` has rank below `d`.
#[derive(Debug, Clone)]
pub struct RankDeficientProblem {
    /// `d x samples`
    pub x: Matrix,
    /// `targets x samples`
    pub y: Matrix,
    /// `targets x d`
    pub w_star: Matrix,
}

/// `W* = A B` with Gaussian factors `A` (`targets x rank`) and `B`
/// (`rank x d`), `X` Gaussian `d x samples`. Both `X` and `W*` are scaled
/// to unit spectral norm so that `Y Yᵀ` has spectrum in `(0, 1]`, which is
/// the range where the matrix-polynomial rate `WᵀW` is locally stable.
pub fn gen_rank_deficient(spec: &RandomMatrixSpec, rng: &mut Rng) -> Result<RankDeficientProblem> {
    spec.validate()?;
    let MatrixKind::RankDeficientTarget {
        rank,
        targets,
        samples,
    } = spec.kind
    else {
        return Err(Error::invalid(
            "gen_rank_deficient needs a rank-deficient-target spec",
        ));
    };
    let a = gaussian_matrix(targets, rank, rng);
    let b = gaussian_matrix(rank, spec.n, rng);
    let x = gaussian_matrix(spec.n, samples, rng);
    let w = matmul(&a, &b)?;
    let x = x.scale(1.0 / spectral_norm(&x, 500, rng))?;
    let w_star = w.scale(1.0 / spectral_norm(&w, 500, rng))?;
    let y = matmul(&w_star, &x)?;
    Ok(RankDeficientProblem { x, y, w_star })
}

/// Initial iterate.
#[derive(Debug, Clone, PartialEq)]
pub enum InitScheme {
    /// `c · W*`; needs the generator's ground truth.
    ScaledTrueInverse(f64),
    Zero,
    ScaledIdentity(f64),
    /// `Σ cᵢ Xⁱ`; commutes with `X`. Only for the SPD root problem.
    CommutingPolynomial(Vec<f64>),
}

impl fmt::Display for InitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitScheme::ScaledTrueInverse(c) => write!(f, "scaled-inverse:{c}"),
            InitScheme::Zero => write!(f, "zero"),
            InitScheme::ScaledIdentity(c) => write!(f, "scaled-identity:{c}"),
            InitScheme::CommutingPolynomial(cs) => {
                write!(f, "poly:")?;
                for (i, c) in cs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{c}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for InitScheme {
    type Err = Error;

    /// Accepts `zero`, `scaled-inverse:<c>`, `scaled-identity:<c>` and
    /// `poly:<c0>,<c1>,...`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "zero" {
            return Ok(InitScheme::Zero);
        }
        let (kind, arg) = s
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("unknown init scheme `{s}`")))?;
        match kind {
            "scaled-inverse" => Ok(InitScheme::ScaledTrueInverse(parse_finite(arg)?)),
            "scaled-identity" => Ok(InitScheme::ScaledIdentity(parse_finite(arg)?)),
            "poly" => Ok(InitScheme::CommutingPolynomial(parse_coeffs(arg)?)),
            _ => Err(Error::invalid(format!("unknown init scheme `{kind}`"))),
        }
    }
}

fn parse_finite(s: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("`{s}` is not a number")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::invalid(format!("`{s}` is not finite")))
    }
}

/// Parses a comma-separated list of finite coefficients, e.g. `0,1`.
pub fn parse_coeffs(s: &str) -> Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Err(Error::invalid("coefficient list is empty"));
    }
    s.split(',').map(parse_finite).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    /// `W X = I`, square.
    Inverse,
    /// `W^d X = I` with `X` SPD.
    Root,
    /// `W X = Y` with a rectangular `W`.
    Target,
}

/// What `make_init` needs to know about the problem.
#[derive(Debug, Clone, Copy)]
pub struct InitContext<'a> {
    pub kind: ProblemKind,
    pub x: &'a Matrix,
    pub w_star: Option<&'a Matrix>,
    /// Shape of the iterate `W`.
    pub shape: (usize, usize),
}

impl<'a> InitContext<'a> {
    pub fn inverse(x: &'a Matrix, w_star: Option<&'a Matrix>) -> Self {
        InitContext {
            kind: ProblemKind::Inverse,
            x,
            w_star,
            shape: (x.cols(), x.rows()),
        }
    }

    pub fn root(x: &'a Matrix, truth: Option<&'a Matrix>) -> Self {
        InitContext {
            kind: ProblemKind::Root,
            x,
            w_star: truth,
            shape: (x.rows(), x.rows()),
        }
    }

    pub fn target(x: &'a Matrix, y: &'a Matrix, w_star: Option<&'a Matrix>) -> Self {
        InitContext {
            kind: ProblemKind::Target,
            x,
            w_star,
            shape: (y.rows(), x.rows()),
        }
    }
}

pub fn make_init(scheme: &InitScheme, ctx: &InitContext<'_>) -> Result<Matrix> {
    let (rows, cols) = ctx.shape;
    match scheme {
        InitScheme::Zero => Ok(Matrix::zeros(rows, cols)),
        InitScheme::ScaledTrueInverse(c) => {
            let w = ctx.w_star.ok_or_else(|| {
                Error::invalid("scaled-inverse init needs the generator's ground truth")
            })?;
            w.scale(*c)
        }
        InitScheme::ScaledIdentity(c) => {
            if rows != cols {
                return Err(Error::invalid(format!(
                    "scaled-identity init needs a square iterate, problem has {rows}x{cols}"
                )));
            }
            Matrix::identity(rows).scale(*c)
        }
        InitScheme::CommutingPolynomial(coeffs) => {
            if ctx.kind != ProblemKind::Root {
                return Err(Error::invalid(
                    "commuting-polynomial init only applies to the SPD root problem",
                ));
            }
            if coeffs.is_empty() {
                return Err(Error::invalid("commuting-polynomial needs coefficients"));
            }
            let n = ctx.x.rows();
            let mut power = Matrix::identity(n);
            let mut acc = Matrix::zeros(n, n);
            for (i, &c) in coeffs.iter().enumerate() {
                if i > 0 {
                    power = matmul(&power, ctx.x)?;
                }
                acc = acc.add(&power.scale(c)?)?;
            }
            Ok(acc)
        }
    }
}

/// Rewrites `W X = Y` for orthogonal `Y` as `W (X Yᵀ) = I`.
///
/// Since `Yᵀ Y = I`, any `W` with `W (X Yᵀ) = I` satisfies `W X = Y`
/// directly: the solution of the reduced problem needs no post-processing.
pub fn reduce_target(x: &Matrix, y: &Matrix) -> Result<Matrix> {
    if !y.is_square() || y.rows() != x.cols() {
        return Err(Error::DimensionMismatch {
            op: "reduce_target",
            left: x.shape(),
            right: y.shape(),
        });
    }
    let n = y.rows();
    let deviation = frobenius_norm(&matmul(&y.transpose(), y)?.sub(&Matrix::identity(n))?);
    let tolerance = 1e-8 * n as f64;
    if deviation > tolerance {
        return Err(Error::NotOrthogonal {
            deviation,
            tolerance,
        });
    }
    matmul(x, &y.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inverse_residual(w: &Matrix, x: &Matrix) -> f64 {
        frobenius_norm(
            &matmul(w, x)
                .unwrap()
                .sub(&Matrix::identity(x.rows()))
                .unwrap(),
        )
    }

    /// Top singular values by power iteration on `AᵀA` with deflation.
    fn top_singular_values(a: &Matrix, count: usize) -> Vec<f64> {
        let mut m = matmul(&a.transpose(), a).unwrap();
        let n = m.rows();
        let mut out = Vec::new();
        for k in 0..count {
            let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i * (k + 3)) as f64 % 7.0).collect();
            let mut lambda = 0.0;
            for _ in 0..50_000 {
                let w = m.matvec(&v).unwrap();
                let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm == 0.0 {
                    break;
                }
                lambda = norm;
                v = w.iter().map(|x| x / norm).collect();
            }
            out.push(lambda.sqrt());
            let mut deflated = m.clone();
            for i in 0..n {
                for j in 0..n {
                    deflated[(i, j)] -= lambda * v[i] * v[j];
                }
            }
            m = deflated;
        }
        out
    }

    #[test]
    fn one_by_one_inverse_is_exact() {
        for seed in 0..5 {
            let spec = RandomMatrixSpec::invertible(1, seed);
            let p = gen_invertible(&spec, &mut spec.rng()).unwrap();
            assert!((p.x[(0, 0)].abs() - p.sigma[0]).abs() < 1e-15);
            assert!((p.w_star[(0, 0)] * p.x[(0, 0)] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn ground_truth_inverts_x() {
        for (n, seed) in [(2, 1), (10, 2), (50, 3), (120, 4)] {
            let spec = RandomMatrixSpec::invertible(n, seed).with_condition_cap(1e4);
            let p = gen_invertible(&spec, &mut spec.rng()).unwrap();
            assert!(inverse_residual(&p.w_star, &p.x) <= 1e-10 * n as f64);
            assert!(p.sigma.windows(2).all(|w| w[0] >= w[1]));
            assert!(p.sigma[0] / p.sigma[n - 1] <= 1e4);
        }
    }

    #[test]
    fn singular_values_match_deflation_oracle() {
        let spec = RandomMatrixSpec::invertible(50, 17);
        let p = gen_invertible(&spec, &mut spec.rng()).unwrap();
        let top = top_singular_values(&p.x, 3);
        for (est, s) in top.iter().zip(&p.sigma) {
            assert!((est - s).abs() < 1e-6, "{est} vs {s}");
        }
    }

    #[test]
    fn regeneration_is_bit_identical() {
        let spec = RandomMatrixSpec::invertible(30, 9).with_condition_cap(1e4);
        let a = gen_invertible(&spec, &mut spec.rng()).unwrap();
        let b = gen_invertible(&spec, &mut spec.rng()).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.w_star, b.w_star);
    }

    #[test]
    fn unattainable_cap_fails_generation() {
        let spec = RandomMatrixSpec::invertible(50, 1).with_condition_cap(1.0001);
        assert!(matches!(
            gen_invertible(&spec, &mut spec.rng()),
            Err(Error::GenerationFailed { .. })
        ));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(RandomMatrixSpec::invertible(0, 1).validate().is_err());
        assert!(RandomMatrixSpec::invertible(3, 1)
            .with_condition_cap(1.0)
            .validate()
            .is_err());
        assert!(RandomMatrixSpec::rank_deficient(4, 4, 4, 4, 1)
            .validate()
            .is_err());
        assert!(RandomMatrixSpec::rank_deficient(4, 4, 3, 2, 1)
            .validate()
            .is_err());
        let spd = RandomMatrixSpec::spd(3, 1);
        assert!(gen_invertible(&spd, &mut spd.rng()).is_err());
    }

    #[test]
    fn spd_is_exactly_symmetric_and_positive() {
        let spec = RandomMatrixSpec::spd(40, 5).with_condition_cap(1e4);
        let p = gen_spd(&spec, &mut spec.rng()).unwrap();
        assert_eq!(p.x, p.x.transpose());
        let root1 = p.inverse_root(1);
        assert!(inverse_residual(&root1, &p.x) <= 1e-10 * 40.0);
        let mut rng = seeded_rng(77);
        for _ in 0..100 {
            let v = gaussian_matrix(40, 1, &mut rng).column(0);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let v: Vec<f64> = v.iter().map(|x| x / norm).collect();
            let xv = p.x.matvec(&v).unwrap();
            let q: f64 = v.iter().zip(&xv).map(|(a, b)| a * b).sum();
            assert!(q > 0.0);
        }
    }

    #[test]
    fn spd_square_root_of_four() {
        let p = SpdProblem {
            x: Matrix::from_rows(&[[4.0]]),
            eigenvalues: vec![4.0],
            q: Matrix::identity(1),
        };
        assert_eq!(p.inverse_root(2), Matrix::from_rows(&[[0.5]]));
    }

    #[test]
    fn rank_deficient_has_requested_rank() {
        let spec = RandomMatrixSpec::rank_deficient(4, 4, 4, 2, 3);
        let p = gen_rank_deficient(&spec, &mut spec.rng()).unwrap();
        let sv = top_singular_values(&p.w_star, 4);
        let rank = sv.iter().filter(|&&s| s > 1e-6 * sv[0]).count();
        assert_eq!(rank, 2, "{sv:?}");
        let resid = frobenius_norm(&matmul(&p.w_star, &p.x).unwrap().sub(&p.y).unwrap());
        assert!(resid <= 1e-12 * frobenius_norm(&p.y));
    }

    #[test]
    fn init_schemes() {
        let x = Matrix::from_rows(&[[2.0]]);
        let w = Matrix::from_rows(&[[0.5]]);
        let ctx = InitContext::inverse(&x, Some(&w));
        let w0 = make_init(&InitScheme::ScaledTrueInverse(0.4), &ctx).unwrap();
        assert!((w0[(0, 0)] - 0.2).abs() < 1e-16);

        let x3 = Matrix::identity(3);
        let ctx3 = InitContext::inverse(&x3, None);
        assert_eq!(
            make_init(&InitScheme::Zero, &ctx3).unwrap(),
            Matrix::zeros(3, 3)
        );
        assert!(make_init(&InitScheme::ScaledTrueInverse(0.5), &ctx3).is_err());
        assert!(make_init(&InitScheme::CommutingPolynomial(vec![1.0]), &ctx3).is_err());

        let xs = Matrix::from_rows(&[[2.0, 1.0], [1.0, 3.0]]);
        let root_ctx = InitContext::root(&xs, None);
        let w = make_init(&InitScheme::CommutingPolynomial(vec![0.7]), &root_ctx).unwrap();
        assert_eq!(w, Matrix::identity(2).scale(0.7).unwrap());
        let w = make_init(
            &InitScheme::CommutingPolynomial(vec![0.3, -0.1, 0.01]),
            &root_ctx,
        )
        .unwrap();
        let comm = matmul(&w, &xs)
            .unwrap()
            .sub(&matmul(&xs, &w).unwrap())
            .unwrap();
        assert!(frobenius_norm(&comm) < 1e-14);
    }

    #[test]
    fn init_scheme_parse_and_display() {
        for s in [
            "zero",
            "scaled-inverse:0.4",
            "scaled-identity:-2",
            "poly:1,0.5,-0.25",
        ] {
            let parsed: InitScheme = s.parse().unwrap();
            assert_eq!(parsed.to_string().parse::<InitScheme>().unwrap(), parsed);
        }
        for bad in [
            "",
            "ones",
            "scaled-inverse:",
            "scaled-inverse:nan",
            "poly:",
            "poly:1,,2",
        ] {
            assert!(bad.parse::<InitScheme>().is_err(), "{bad}");
        }
    }

    #[test]
    fn reduce_target_examples() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(reduce_target(&x, &Matrix::identity(2)).unwrap(), x);
        let r = reduce_target(&Matrix::from_rows(&[[2.0]]), &Matrix::from_rows(&[[-1.0]])).unwrap();
        assert_eq!(r, Matrix::from_rows(&[[-2.0]]));
        assert!(matches!(
            reduce_target(&Matrix::from_rows(&[[2.0]]), &Matrix::from_rows(&[[2.0]])),
            Err(Error::NotOrthogonal { .. })
        ));
    }
}
