//! Fréchet distance between Gaussians fitted to two feature sets, and
//! R-precision over precomputed similarity scores.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::features::FeatureSet;
use crate::error::{Error, Result};

/// Eigenvalues above `-CLAMP_TOL * max(1, |lambda|_max)` are clamped to zero.
pub const CLAMP_TOL: f64 = 1e-8;
/// Relative Frobenius residual allowed for a computed square root.
pub const RESIDUAL_TOL: f64 = 1e-6;

/// Negatives at one of 100 similarity columns.
pub const R_PRECISION_COLUMNS: usize = 100;

fn moments(set: &FeatureSet) -> (DVector<f64>, DMatrix<f64>) {
    let x = DMatrix::from_row_slice(set.n, set.d, &set.vectors);
    let mean = x.row_mean().transpose();
    let mut centered = x;
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (set.n as f64 - 1.0);
    (mean, cov)
}

/// Eigenvalues and vectors of the symmetric part of `m`, with small
/// negative eigenvalues clamped to zero.
fn clamped_eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let sym = (m + m.transpose()) * 0.5;
    let mut eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    for v in eig.eigenvalues.iter_mut() {
        if *v < 0.0 {
            if *v < -CLAMP_TOL * scale {
                return Err(Error::SqrtResidual {
                    residual: -*v / scale,
                    tolerance: CLAMP_TOL,
                });
            }
            *v = 0.0;
        }
    }
    Ok(eig)
}

/// Principal square root of a symmetric positive semi-definite matrix.
fn sqrt_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = clamped_eigen(m)?;
    let root = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    let s = &eig.eigenvectors * root * eig.eigenvectors.transpose();
    let residual = (&s * &s - m).norm() / m.norm().max(1.0);
    if residual > RESIDUAL_TOL {
        return Err(Error::SqrtResidual {
            residual,
            tolerance: RESIDUAL_TOL,
        });
    }
    Ok(s)
}

/// `||mu_r - mu_g||^2 + Tr(S_r + S_g - 2 (S_r S_g)^{1/2})` with unbiased
/// sample covariances.
///
/// The trace of `(S_r S_g)^{1/2}` is taken from the symmetric matrix
/// `S_r^{1/2} S_g S_r^{1/2}`, which is similar to `S_r S_g`.
pub fn fid(real: &FeatureSet, gen: &FeatureSet) -> Result<f64> {
    if real.d != gen.d {
        return Err(Error::DimensionMismatch(real.d, gen.d));
    }
    for set in [real, gen] {
        if set.n < 2 {
            return Err(Error::TooFewSamples(set.n));
        }
        set.check_finite()?;
    }
    let (mu_r, cov_r) = moments(real);
    let (mu_g, cov_g) = moments(gen);

    let root_r = sqrt_psd(&cov_r)?;
    let inner = &root_r * &cov_g * &root_r;
    let cross = sqrt_psd(&((&inner + inner.transpose()) * 0.5))?;

    let mean_term = (mu_r - mu_g).norm_squared();
    let value = mean_term + cov_r.trace() + cov_g.trace() - 2.0 * cross.trace();
    if !value.is_finite() {
        return Err(Error::NonFinite("fid"));
    }
    Ok(value.max(0.0))
}

/// Fraction of rows whose column-0 score strictly exceeds every other
/// column. Each row holds one positive (column 0) and 99 negatives.
pub fn r_precision(sim: &FeatureSet) -> Result<f64> {
    if sim.d != R_PRECISION_COLUMNS {
        return Err(Error::ColumnCount {
            expected: R_PRECISION_COLUMNS,
            found: sim.d,
        });
    }
    if sim.n == 0 {
        return Err(Error::EmptyInput("r_precision"));
    }
    sim.check_finite()?;
    let hits = sim
        .rows()
        .filter(|row| row[1..].iter().all(|&neg| row[0] > neg))
        .count();
    Ok(hits as f64 / sim.n as f64)
}
