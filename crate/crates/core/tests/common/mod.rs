//! Independent reference implementations used by the integration tests.
//!
//! Each oracle takes a different route from the library: Jacobi rotations
//! instead of LAPACK-style eigensolvers, a projected subgradient method instead
//! of ADMM, stacked joint Gaussians instead of per-speaker posteriors, and
//! quadratic-time threshold enumeration instead of a sorted sweep.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn randn_matrix(rng: &mut ChaCha20Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn randn_vector(rng: &mut ChaCha20Rng, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample(StandardNormal))
}

/// `AAᵀ + floor·I` for a Gaussian `A`.
pub fn random_spd(rng: &mut ChaCha20Rng, d: usize, floor: f64) -> DMatrix<f64> {
    let a = randn_matrix(rng, d, d);
    let mut s = &a * a.transpose() / d as f64 + DMatrix::identity(d, d) * floor;
    s = (&s + s.transpose()) * 0.5;
    s
}

pub fn random_symmetric(rng: &mut ChaCha20Rng, d: usize) -> DMatrix<f64> {
    let a = randn_matrix(rng, d, d);
    (&a + a.transpose()) * 0.5
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix: `(values, vectors)`
/// with eigenvectors as columns.
pub fn jacobi_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let mut a = m.clone();
    let mut v = DMatrix::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off < 1e-30 * (1.0 + a.norm_squared()) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)]).collect(), v)
}

pub fn oracle_min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    jacobi_eigen(m).0.into_iter().fold(f64::INFINITY, f64::min)
}

pub fn oracle_project_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let (vals, vecs) = jacobi_eigen(&sym);
    let d = DMatrix::from_diagonal(&DVector::from_iterator(
        vals.len(),
        vals.iter().map(|l| l.max(0.0)),
    ));
    let out = &vecs * d * vecs.transpose();
    (&out + out.transpose()) * 0.5
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn gauss_jordan_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    let mut inv = DMatrix::identity(n, n);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[(i, col)].abs().total_cmp(&a[(j, col)].abs()))
            .unwrap();
        a.swap_rows(col, pivot);
        inv.swap_rows(col, pivot);
        let p = a[(col, col)];
        for k in 0..n {
            a[(col, k)] /= p;
            inv[(col, k)] /= p;
        }
        for r in 0..n {
            if r != col {
                let f = a[(r, col)];
                for k in 0..n {
                    a[(r, k)] -= f * a[(col, k)];
                    inv[(r, k)] -= f * inv[(col, k)];
                }
            }
        }
    }
    inv
}

/// `½‖B − G⁻¹‖²_F + λ‖B‖₁`
pub fn sparse_objective_oracle(b: &DMatrix<f64>, g_inv: &DMatrix<f64>, lambda: f64) -> f64 {
    0.5 * (b - g_inv).norm_squared() + lambda * b.iter().map(|v| v.abs()).sum::<f64>()
}

/// Long-run projected subgradient descent for the sparse precision problem.
/// The objective is 1-strongly convex, so steps `1/k` converge; the best
/// iterate is returned with its objective.
pub fn sparse_subgradient_oracle(
    g: &DMatrix<f64>,
    lambda: f64,
    iters: usize,
) -> (DMatrix<f64>, f64) {
    let g_inv = gauss_jordan_inverse(g);
    let g_inv = (&g_inv + g_inv.transpose()) * 0.5;
    let mut b = oracle_project_psd(&g_inv);
    let mut best = (b.clone(), sparse_objective_oracle(&b, &g_inv, lambda));
    for k in 1..=iters {
        let sign = b.map(|v| {
            if v > 0.0 {
                1.0
            } else if v < 0.0 {
                -1.0
            } else {
                0.0
            }
        });
        let sub = (&b - &g_inv) + sign * lambda;
        b = oracle_project_psd(&(&b - sub / k as f64));
        let f = sparse_objective_oracle(&b, &g_inv, lambda);
        if f < best.1 {
            best = (b.clone(), f);
        }
    }
    best
}

/// Cholesky-free log density of `N(mean, cov)` via Gauss-Jordan and a
/// Jacobi log-determinant.
pub fn gaussian_logpdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let n = x.len() as f64;
    let r = x - mean;
    let inv = gauss_jordan_inverse(cov);
    let logdet: f64 = jacobi_eigen(cov).0.iter().map(|l| l.ln()).sum();
    -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + logdet + r.dot(&(&inv * &r)))
}

/// Covariance of the stacked utterances of one speaker:
/// `I ⊗ W⁻¹ + 11ᵀ ⊗ B⁻¹`.
pub fn stacked_covariance(
    n: usize,
    between_cov: &DMatrix<f64>,
    within_cov: &DMatrix<f64>,
) -> DMatrix<f64> {
    let d = between_cov.nrows();
    DMatrix::from_fn(n * d, n * d, |r, c| {
        let (i, a) = (r / d, r % d);
        let (j, b) = (c / d, c % d);
        between_cov[(a, b)] + if i == j { within_cov[(a, b)] } else { 0.0 }
    })
}

pub fn stack(xs: &[DVector<f64>]) -> DVector<f64> {
    let d = xs[0].len();
    DVector::from_fn(xs.len() * d, |r, _| xs[r / d][r % d])
}

/// Marginal log-likelihood of one speaker's utterances under the joint Gaussian.
pub fn speaker_loglik_oracle(
    xs: &[DVector<f64>],
    mu: &DVector<f64>,
    between_cov: &DMatrix<f64>,
    within_cov: &DMatrix<f64>,
) -> f64 {
    let n = xs.len();
    let mean = stack(&vec![mu.clone(); n]);
    gaussian_logpdf(
        &stack(xs),
        &mean,
        &stacked_covariance(n, between_cov, within_cov),
    )
}

/// Posterior mean of the speaker variable by Gaussian conditioning on the
/// stacked observation: `μ + Cov(y, x) Cov(x)⁻¹ (x − 1⊗μ)`.
pub fn posterior_mean_oracle(
    xs: &[DVector<f64>],
    mu: &DVector<f64>,
    between_cov: &DMatrix<f64>,
    within_cov: &DMatrix<f64>,
) -> DVector<f64> {
    let n = xs.len();
    let d = mu.len();
    let cov_x = stacked_covariance(n, between_cov, within_cov);
    let cov_yx = DMatrix::from_fn(d, n * d, |a, c| between_cov[(a, c % d)]);
    let r = stack(xs) - stack(&vec![mu.clone(); n]);
    mu + cov_yx * gauss_jordan_inverse(&cov_x) * r
}

/// Same-versus-different log-likelihood ratio from explicit 2D-dimensional
/// Gaussians.
pub fn llr_oracle(
    e: &DVector<f64>,
    t: &DVector<f64>,
    mu: &DVector<f64>,
    between_cov: &DMatrix<f64>,
    within_cov: &DMatrix<f64>,
) -> f64 {
    let x = stack(&[e.clone(), t.clone()]);
    let m2 = stack(&[mu.clone(), mu.clone()]);
    let same = stacked_covariance(2, between_cov, within_cov);
    let total = between_cov + within_cov;
    gaussian_logpdf(&x, &m2, &same)
        - gaussian_logpdf(e, mu, &total)
        - gaussian_logpdf(t, mu, &total)
}

/// Direct counting at one threshold: `(P_miss, P_fa)`.
pub fn rates_at(scores: &[(f64, bool)], thr: f64) -> (f64, f64) {
    let nt = scores.iter().filter(|s| s.1).count() as f64;
    let nn = scores.len() as f64 - nt;
    let miss = scores.iter().filter(|s| s.1 && s.0 < thr).count() as f64;
    let fa = scores.iter().filter(|s| !s.1 && s.0 >= thr).count() as f64;
    (miss / nt, fa / nn)
}

/// Candidate thresholds: every distinct score, ascending, then `+∞`.
pub fn brute_thresholds(scores: &[(f64, bool)]) -> Vec<f64> {
    let mut t: Vec<f64> = scores.iter().map(|s| s.0).collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    t.push(f64::INFINITY);
    t
}

/// Exhaustive minimum normalized DCF over all thresholds.
pub fn brute_min_dcf(scores: &[(f64, bool)], p: f64, c_miss: f64, c_fa: f64) -> f64 {
    let norm = (c_miss * p).min(c_fa * (1.0 - p));
    brute_thresholds(scores)
        .into_iter()
        .map(|thr| {
            let (pm, pf) = rates_at(scores, thr);
            (c_miss * pm * p + c_fa * pf * (1.0 - p)) / norm
        })
        .fold(f64::INFINITY, f64::min)
}

/// EER by exhaustive search: the first threshold where `P_miss ≥ P_fa`, linearly
/// interpolated against the preceding threshold.
pub fn brute_eer(scores: &[(f64, bool)]) -> f64 {
    let thr = brute_thresholds(scores);
    let mut prev: Option<(f64, f64)> = None;
    for t in thr {
        let (pm, pf) = rates_at(scores, t);
        if pm >= pf {
            return match prev {
                Some((qm, qf)) if pm != pf => {
                    let dq = qm - qf;
                    let alpha = -dq / ((pm - pf) - dq);
                    qm + alpha * (pm - qm)
                }
                _ => pm,
            };
        }
        prev = Some((pm, pf));
    }
    unreachable!("the +inf threshold has P_miss = 1 and P_fa = 0")
}

/// Average ranks (ties share the mean rank).
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

pub fn rel_frobenius(a: &DMatrix<f64>, truth: &DMatrix<f64>) -> f64 {
    (a - truth).norm() / truth.norm()
}
