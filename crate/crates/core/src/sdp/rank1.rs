use alloc::vec::Vec;

use num_complex::Complex64;

use super::problem::HermitianMatrix;
use crate::linalg::SymmetricEigen;
use crate::math::sqrt;
use crate::{Error, Result};

/// Dominant rank-one factor of a Hermitian PSD matrix.
///
/// Returns `sqrt(l1) * u1` and the ratio `l2 / l1` of the two largest
/// eigenvalues (0 when `l1 = 0`). A matrix with an eigenvalue below
/// `-tol * max(1, l1)` is rejected as not positive semidefinite.
pub fn extract_rank1(x: &HermitianMatrix, tol: f64) -> Result<(Vec<Complex64>, f64)> {
    let n = x.dim();
    if n == 0 {
        return Ok((Vec::new(), 0.0));
    }
    // Eigenvalues of the real embedding are those of X, each doubled.
    let eig = SymmetricEigen::new(&x.embed());
    let m = 2 * n;
    let l1 = eig.values[m - 1];
    let l2 = if n > 1 { eig.values[m - 3] } else { 0.0 };
    let lmin = eig.values[0];
    if lmin < -tol * l1.max(1.0) {
        return Err(Error::invalid("matrix is not positive semidefinite"));
    }
    if l1 <= 0.0 {
        return Ok((alloc::vec![Complex64::new(0.0, 0.0); n], 0.0));
    }
    let u = eig.vector(m - 1);
    let s = sqrt(l1);
    let v = (0..n).map(|k| Complex64::new(u[k], u[k + n]) * s).collect();
    Ok((v, (l2.max(0.0)) / l1))
}
