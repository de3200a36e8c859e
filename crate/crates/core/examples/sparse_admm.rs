//! Convergence and sparsity of the ADMM solver as the L1 weight grows.

use nalgebra::{DMatrix, DVector};
use regplda::regularize::{sparse_admm, RegInput, RegTarget, RegularizerConfig};

fn main() -> regplda::Result<()> {
    // A covariance with a tridiagonal inverse, seen through a small perturbation.
    let d = 6;
    let mut precision = DMatrix::from_diagonal(&DVector::from_element(d, 2.0));
    for i in 0..d - 1 {
        precision[(i, i + 1)] = -0.8;
        precision[(i + 1, i)] = -0.8;
    }
    let mut g = precision.try_inverse().expect("diagonally dominant");
    for i in 0..d {
        for j in 0..d {
            g[(i, j)] += 0.01 * ((i * 7 + j * 3) % 5) as f64 * if i == j { 1.0 } else { 0.2 };
        }
    }
    let g = (&g + g.transpose()) * 0.5;

    for lambda in [0.0, 1e-3, 1e-2, 5e-2, 2e-1] {
        let cfg = RegularizerConfig::sparse(RegTarget::Between, lambda);
        let sol = sparse_admm(&RegInput::new(g.clone())?, &cfg, &DMatrix::identity(d, d))?;
        let zeros = sol.a.iter().filter(|v| **v == 0.0).count();
        let head: Vec<String> = sol
            .objective_trace
            .iter()
            .take(4)
            .map(|f| format!("{f:.4}"))
            .collect();
        println!(
            "lambda {lambda:<6} iterations {:4}  zeros {zeros:2}/{}  residual {:.1e}  objective {} ... {:.6}",
            sol.iterations,
            d * d,
            sol.residual,
            head.join(" "),
            sol.objective_trace.last().copied().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
