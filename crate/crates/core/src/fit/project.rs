//! Frobenius projections onto the PSD cone and onto nonnegative diagonals.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues above `−EIG_TOL · max|λ|` count as nonnegative. A matrix whose
/// spectrum passes this test is returned unchanged, which makes the
/// projection exactly idempotent.
pub const EIG_TOL: f64 = 64.0 * f64::EPSILON;

fn symmetrise(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !s.is_square() {
        return Err(Error::invalid("projection needs a square matrix"));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("projection input is not finite".into()));
    }
    Ok((s + s.transpose()) * 0.5)
}

/// `argmin_{P ⪰ 0} ‖P − S‖_F`: symmetrise, eigendecompose, zero the negative eigenvalues.
pub fn project_psd(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = symmetrise(s)?;
    let n = sym.nrows();
    if n == 0 {
        return Ok(sym);
    }
    let eig = SymmetricEigen::try_new(sym.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numeric("symmetric eigensolver did not converge".into()))?;
    let scale = eig.eigenvalues.amax();
    if eig.eigenvalues.iter().all(|&l| l >= -EIG_TOL * scale) {
        return Ok(sym);
    }
    let q = &eig.eigenvectors;
    let mut scaled = q.clone();
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        scaled.column_mut(j).scale_mut(l.max(0.0));
    }
    let p = scaled * q.transpose();
    Ok((&p + p.transpose()) * 0.5)
}

/// Projection onto diagonal matrices with nonnegative entries.
pub fn project_diagonal(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = symmetrise(s)?;
    let n = sym.nrows();
    Ok(DMatrix::from_fn(n, n, |i, j| if i == j { sym[(i, i)].max(0.0) } else { 0.0 }))
}
