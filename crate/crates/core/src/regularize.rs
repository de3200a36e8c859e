//! Covariance regularizers applied to the M-step statistic `G`.
//!
//! * diagonal: keep only the diagonal of `G`;
//! * interpolated: MAP update under a Wishart prior, `G/(1+γ) + γ/(1+γ)·G₀`;
//! * sparse: the precision `B` solving `min_{B ⪰ 0} ½‖B − G⁻¹‖²_F + λ‖B‖₁` by ADMM,
//!   with the PSD-constrained quadratic step solved by projected gradient descent
//!   and the L1 step by soft thresholding.
//!
//! The diagonal and interpolated strategies return a covariance; the sparse one
//! returns a precision.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RegKind {
    #[default]
    None,
    Diag,
    Interp,
    Sparse,
}

/// Which covariance(s) a regularizer is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RegTarget {
    /// B⁻¹ only.
    #[default]
    Between,
    /// W⁻¹ only.
    Within,
    Both,
}

impl RegTarget {
    pub fn between(self) -> bool {
        matches!(self, RegTarget::Between | RegTarget::Both)
    }

    pub fn within(self) -> bool {
        matches!(self, RegTarget::Within | RegTarget::Both)
    }
}

/// Prior matrix `G₀` of the interpolated regularizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PriorMatrix {
    /// `G₀ = I`, the covariance under which PLDA and cosine scoring coincide.
    #[default]
    Identity,
}

impl PriorMatrix {
    pub fn matrix(self, dim: usize) -> DMatrix<f64> {
        match self {
            PriorMatrix::Identity => DMatrix::identity(dim, dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularizerConfig {
    pub kind: RegKind,
    pub target: RegTarget,
    pub gamma: f64,
    pub g0: PriorMatrix,
    pub lambda: f64,
    pub beta: f64,
    pub eps: f64,
    pub max_admm_iters: usize,
    pub max_pgd_iters: usize,
}

impl Default for RegularizerConfig {
    fn default() -> Self {
        RegularizerConfig {
            kind: RegKind::None,
            target: RegTarget::Between,
            gamma: 2.0,
            g0: PriorMatrix::Identity,
            lambda: 1e-3,
            beta: 0.1,
            eps: 1e-6,
            max_admm_iters: 2000,
            max_pgd_iters: 500,
        }
    }
}

impl RegularizerConfig {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn diag(target: RegTarget) -> Self {
        RegularizerConfig {
            kind: RegKind::Diag,
            target,
            ..Self::default()
        }
    }

    pub fn interp(target: RegTarget, gamma: f64) -> Self {
        RegularizerConfig {
            kind: RegKind::Interp,
            target,
            gamma,
            ..Self::default()
        }
    }

    pub fn sparse(target: RegTarget, lambda: f64) -> Self {
        RegularizerConfig {
            kind: RegKind::Sparse,
            target,
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Usage(msg));
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be finite and >= 0, got {}", self.gamma));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            ));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be > 0, got {}", self.beta));
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps must be > 0, got {}", self.eps));
        }
        if self.max_admm_iters == 0 || self.max_pgd_iters == 0 {
            return bad("iteration caps must be >= 1".into());
        }
        Ok(())
    }
}

/// The unregularized statistic `G` (or its within-speaker analog).
#[derive(Debug, Clone, PartialEq)]
pub struct RegInput(DMatrix<f64>);

impl RegInput {
    /// Checks symmetry (1e-10 relative) and near-PSD-ness (eigenvalues ≥ −1e-10·scale).
    pub fn new(g: DMatrix<f64>) -> Result<Self> {
        if g.nrows() != g.ncols() || g.nrows() == 0 {
            return Err(Error::Data(format!(
                "statistic must be square and non-empty, got {}x{}",
                g.nrows(),
                g.ncols()
            )));
        }
        let scale = g.amax().max(f64::MIN_POSITIVE);
        if linalg::asymmetry(&g) > 1e-10 * scale {
            return Err(Error::Numerical("statistic is not symmetric".into()));
        }
        let min_eig = linalg::min_eigenvalue(&g)?;
        if min_eig < -1e-10 * scale {
            return Err(Error::Numerical(format!(
                "statistic is not positive semidefinite (smallest eigenvalue {min_eig:e})"
            )));
        }
        Ok(RegInput(linalg::symmetrized(&g)))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

pub fn regularize_diagonal(g: &RegInput) -> DMatrix<f64> {
    DMatrix::from_diagonal(&g.0.diagonal())
}

/// `G/(1+γ) + γ/(1+γ)·G₀`.
pub fn regularize_interpolate(g: &RegInput, gamma: f64, g0: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !(gamma >= 0.0) {
        return Err(Error::Usage(format!("gamma must be >= 0, got {gamma}")));
    }
    if g0.shape() != g.0.shape() {
        return Err(Error::Data("prior matrix dimension mismatch".into()));
    }
    let w_data = 1.0 / (1.0 + gamma);
    let w_prior = gamma / (1.0 + gamma);
    let mut out = g.0.zip_map(g0, |a, b| w_data * a + w_prior * b);
    linalg::symmetrize(&mut out);
    Ok(out)
}

/// Elementwise `max(0, |x| − t)·sgn(x)`, with `sgn(0) = 0`.
pub fn soft_threshold(x: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    debug_assert!(t >= 0.0);
    x.map(|v| {
        let mag = (v.abs() - t).max(0.0);
        if v > 0.0 {
            mag
        } else if v < 0.0 {
            -mag
        } else {
            0.0
        }
    })
}

/// Frobenius-nearest PSD matrix: symmetrize, clamp negative eigenvalues to zero.
pub fn project_psd(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = linalg::sym_eigen(x)?;
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    let u = &eig.eigenvectors;
    let mut out = u * DMatrix::from_diagonal(&clamped) * u.transpose();
    linalg::symmetrize(&mut out);
    Ok(out)
}

/// The B-subproblem of the ADMM split: minimize the augmented Lagrangian over
/// `B ⪰ 0` for fixed `A` and `Φ`.
#[derive(Debug, Clone, Copy)]
pub struct PgdProblem<'a> {
    pub g_inv: &'a DMatrix<f64>,
    pub a: &'a DMatrix<f64>,
    pub phi: &'a DMatrix<f64>,
    pub beta: f64,
}

impl PgdProblem<'_> {
    /// `∇L_B = B − G⁻¹ − Φ + β(B − A)`
    pub fn gradient(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        b - self.g_inv - self.phi + (b - self.a) * self.beta
    }

    /// Step size `1/(1+β)`, the inverse Lipschitz constant of the gradient.
    pub fn step(&self) -> f64 {
        1.0 / (1.0 + self.beta)
    }
}

#[derive(Debug, Clone)]
pub struct PgdOutcome {
    pub b: DMatrix<f64>,
    pub iterations: usize,
}

/// Gradient step plus PSD projection until `‖Bᵏ⁺¹ − Bᵏ‖_F < eps`.
pub fn pgd_solve_b(
    problem: &PgdProblem<'_>,
    start: &DMatrix<f64>,
    eps: f64,
    max_iters: usize,
) -> Result<PgdOutcome> {
    pgd_iterate(problem, start, eps, max_iters, true)
}

pub(crate) fn pgd_iterate(
    problem: &PgdProblem<'_>,
    start: &DMatrix<f64>,
    eps: f64,
    max_iters: usize,
    project: bool,
) -> Result<PgdOutcome> {
    if !(problem.beta > 0.0) {
        return Err(Error::Usage("beta must be > 0".into()));
    }
    let step = problem.step();
    let mut b = start.clone();
    let mut last_change = f64::INFINITY;
    for it in 1..=max_iters {
        let mut next = &b - problem.gradient(&b) * step;
        linalg::symmetrize(&mut next);
        if project {
            next = project_psd(&next)?;
        }
        last_change = (&next - &b).norm();
        b = next;
        if last_change < eps {
            return Ok(PgdOutcome { b, iterations: it });
        }
    }
    Err(Error::PgdNotConverged {
        iterations: max_iters,
        step: last_change,
    })
}

/// `½‖B − G⁻¹‖²_F + λ‖A‖₁`
pub fn sparse_objective(
    b: &DMatrix<f64>,
    a: &DMatrix<f64>,
    g_inv: &DMatrix<f64>,
    lambda: f64,
) -> f64 {
    0.5 * (b - g_inv).norm_squared() + lambda * a.iter().map(|v| v.abs()).sum::<f64>()
}

#[derive(Debug, Clone)]
pub struct SparseSolution {
    /// The returned precision (PSD, projected iterate).
    pub b: DMatrix<f64>,
    /// The sparse split variable at termination; within `eps` of `b`.
    pub a: DMatrix<f64>,
    pub iterations: usize,
    pub residual: f64,
    /// Objective `½‖B − G⁻¹‖² + λ‖A‖₁` after each outer iteration.
    pub objective_trace: Vec<f64>,
}

/// ADMM for `min_{B ⪰ 0} ½‖B − G⁻¹‖²_F + λ‖B‖₁`, started from `b_init` with
/// `A⁰ = B⁰` and `Φ⁰ = 0`. Stops when the primal residual `‖A − B‖_F` and the
/// dual residual `β‖Aᵏ⁺¹ − Aᵏ‖_F` are both below `eps`.
pub fn sparse_admm(
    g: &RegInput,
    cfg: &RegularizerConfig,
    b_init: &DMatrix<f64>,
) -> Result<SparseSolution> {
    cfg.validate()?;
    if b_init.shape() != g.0.shape() {
        return Err(Error::Data("initial precision dimension mismatch".into()));
    }
    let g_inv = linalg::spd_inverse(&g.0, "statistic G")?;
    let beta = cfg.beta;
    let threshold = cfg.lambda / beta;

    let mut b = linalg::symmetrized(b_init);
    let mut a = b.clone();
    let mut phi = DMatrix::zeros(g.dim(), g.dim());
    let mut trace = Vec::new();
    let mut residual = f64::INFINITY;

    for it in 1..=cfg.max_admm_iters {
        let problem = PgdProblem {
            g_inv: &g_inv,
            a: &a,
            phi: &phi,
            beta,
        };
        b = pgd_solve_b(&problem, &b, cfg.eps, cfg.max_pgd_iters)?.b;

        let a_star = &b - &phi / beta;
        let mut a_next = soft_threshold(&a_star, threshold);
        linalg::symmetrize(&mut a_next);
        let dual_residual = beta * (&a_next - &a).norm();
        a = a_next;

        let gap = &a - &b;
        phi += &gap * beta;
        linalg::symmetrize(&mut phi);

        residual = gap.norm();
        trace.push(sparse_objective(&b, &a, &g_inv, cfg.lambda));
        // The primal test alone passes spuriously when A and B move together
        // (λ = 0, Φ = 0 makes A = B after the first step); require A to have
        // settled as well.
        if residual < cfg.eps && dual_residual < cfg.eps {
            return Ok(SparseSolution {
                b,
                a,
                iterations: it,
                residual,
                objective_trace: trace,
            });
        }
    }
    Err(Error::AdmmNotConverged {
        iterations: cfg.max_admm_iters,
        residual,
    })
}

impl fmt::Display for RegKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegKind::None => "none",
            RegKind::Diag => "diag",
            RegKind::Interp => "interp",
            RegKind::Sparse => "sparse",
        })
    }
}

impl FromStr for RegKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(RegKind::None),
            "diag" => Ok(RegKind::Diag),
            "interp" => Ok(RegKind::Interp),
            "sparse" => Ok(RegKind::Sparse),
            _ => Err(Error::Usage(format!("unknown regularizer {s:?}"))),
        }
    }
}

impl fmt::Display for RegTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegTarget::Between => "B",
            RegTarget::Within => "W",
            RegTarget::Both => "both",
        })
    }
}

impl FromStr for RegTarget {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "B" | "between" => Ok(RegTarget::Between),
            "W" | "within" => Ok(RegTarget::Within),
            "both" => Ok(RegTarget::Both),
            _ => Err(Error::Usage(format!("unknown regularization target {s:?}"))),
        }
    }
}
