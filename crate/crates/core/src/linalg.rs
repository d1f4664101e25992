use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub(crate) const SYMMETRY_TOL: f64 = 1e-10;
pub(crate) const MAX_CONDITION: f64 = 1e15;

/// Returns `(A + Aᵀ)/2` if `A` is symmetric to `SYMMETRY_TOL` relative.
pub(crate) fn symmetrized(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::Dimension {
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let n = a.nrows();
    let mut out = a.clone();
    for i in 0..n {
        for j in 0..i {
            let (x, y) = (a[(i, j)], a[(j, i)]);
            if (x - y).abs() > SYMMETRY_TOL * scale {
                return Err(Error::domain(format!("matrix is not symmetric at ({i}, {j})")));
            }
            let m = 0.5 * (x + y);
            out[(i, j)] = m;
            out[(j, i)] = m;
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("matrix has non-finite entries"));
    }
    Ok(out)
}

/// Eigen-decomposition with eigenvalues in ascending order.
pub(crate) fn sorted_eigen(a: DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(a);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub(crate) fn sorted_eigenvalues(a: DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = a.symmetric_eigenvalues().iter().cloned().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Cholesky factor with a crude condition estimate from the diagonal of `L`.
pub(crate) fn checked_cholesky(a: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let chol = Cholesky::new(a).ok_or_else(|| Error::numerical("matrix is not positive definite"))?;
    let l = chol.l_dirty();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..l.nrows() {
        let d = l[(i, i)];
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if !(lo > 0.0) || (hi / lo).powi(2) > MAX_CONDITION {
        return Err(Error::numerical(format!(
            "ill-conditioned assembly (estimate {:e})",
            (hi / lo).powi(2)
        )));
    }
    Ok(chol)
}

/// Inverse of a general complex matrix.
pub(crate) fn complex_inverse(a: DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    a.try_inverse().ok_or_else(|| Error::numerical("singular complex assembly"))
}

/// `(1/n) Σ w_i x_i x_iᵀ` for the columns of `x`.
pub(crate) fn weighted_gram(x: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let n = x.ncols();
    let mut scaled = x.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= w[j].sqrt();
    }
    let mut out = &scaled * scaled.transpose();
    out /= n as f64;
    symmetrize_in_place(&mut out);
    out
}

pub(crate) fn symmetrize_in_place(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}
