use nalgebra::{DMatrix, DVector};

use super::DataMatrix;
use crate::error::{check_len, Error, Result};
use crate::linalg::{sorted_eigen, sorted_eigenvalues, symmetrized};

const NULL_TOL: f64 = 1e-10;

fn drop_nulls(mut values: Vec<f64>) -> Vec<f64> {
    let top = values.iter().cloned().fold(0.0, f64::max);
    values.retain(|v| *v > NULL_TOL * top);
    values
}

/// Eigenvalues in nondecreasing order, optionally without null eigenvalues.
pub fn empirical_spectrum(scatter: &DMatrix<f64>, drop_null: bool) -> Result<Vec<f64>> {
    let values = sorted_eigenvalues(symmetrized(scatter)?);
    Ok(if drop_null { drop_nulls(values) } else { values })
}

/// Spectrum of `(1/n) X diag(w) Xᵀ` computed on the smaller side.
pub fn weighted_eigenvalues(x: &DataMatrix, w: &[f64], drop_null: bool) -> Result<Vec<f64>> {
    check_len(x.n(), w.len())?;
    let (p, n) = (x.p(), x.n());
    let mut values = if n < p {
        let g = x.gram();
        let sq: Vec<f64> = w.iter().map(|v| v.max(0.0).sqrt()).collect();
        let k = DMatrix::from_fn(n, n, |i, j| sq[i] * g[(i, j)] * sq[j] / n as f64);
        let mut v = sorted_eigenvalues(k);
        v.splice(0..0, std::iter::repeat_n(0.0, p - n));
        v
    } else {
        sorted_eigenvalues(x.weighted_covariance(w)?)
    };
    if drop_null {
        values = drop_nulls(values);
    }
    Ok(values)
}

/// `(v_maxᵀ m)²` for the unit top eigenvector of `scatter`.
pub fn empirical_alignment(scatter: &DMatrix<f64>, m: &DVector<f64>) -> Result<f64> {
    check_len(scatter.nrows(), m.len())?;
    let (values, vectors) = sorted_eigen(symmetrized(scatter)?);
    let k = values.len();
    if k >= 2 {
        let scale = values.iter().map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let gap = values[k - 1] - values[k - 2];
        if gap <= 1e-12 * scale {
            return Err(Error::Multiplicity { gap });
        }
    }
    Ok(vectors.column(k - 1).dot(m).powi(2))
}
