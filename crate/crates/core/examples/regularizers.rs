//! The three covariance regularizers applied to one noisy between-speaker statistic.

use nalgebra::DMatrix;
use regplda::regularize::{
    regularize_diagonal, regularize_interpolate, sparse_admm, RegInput, RegTarget,
    RegularizerConfig,
};

fn main() -> regplda::Result<()> {
    let g = DMatrix::from_row_slice(
        4,
        4,
        &[
            1.00, 0.55, 0.02, -0.01, //
            0.55, 1.10, 0.48, 0.03, //
            0.02, 0.48, 0.90, 0.51, //
            -0.01, 0.03, 0.51, 1.05,
        ],
    );
    let input = RegInput::new(g.clone())?;
    println!("G{g}");
    println!("diagonal{}", regularize_diagonal(&input));
    println!(
        "interpolated, gamma = 2, G0 = I{}",
        regularize_interpolate(&input, 2.0, &DMatrix::identity(4, 4))?
    );

    // The sparse regularizer works on the precision: it returns B, not B⁻¹.
    let cfg = RegularizerConfig::sparse(RegTarget::Between, 0.05);
    let sol = sparse_admm(&input, &cfg, &DMatrix::identity(4, 4))?;
    println!(
        "inverse of G{}",
        g.clone().try_inverse().expect("G is invertible")
    );
    println!(
        "sparse precision, lambda = 0.05 ({} ADMM iterations){}",
        sol.iterations, sol.a
    );
    Ok(())
}
