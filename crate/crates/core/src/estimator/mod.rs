//! Resolvent, trace map and the robust scatter fixed point.

mod resolvent;
mod robust;
mod spectrum;

pub use resolvent::{contraction_factor, family_norm, resolvent, trace_map};
pub use robust::{solve_robust, RobustEstimate, RobustOptions};
pub use spectrum::{empirical_alignment, empirical_spectrum, weighted_eigenvalues};

pub(crate) use resolvent::trace_map_raw;

use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::symmetrized;

/// Data matrix `X = (x_1, …, x_n)` with samples as columns.
#[derive(Debug, Clone)]
pub struct DataMatrix {
    x: DMatrix<f64>,
    gram: Arc<OnceLock<DMatrix<f64>>>,
}

impl DataMatrix {
    pub fn new(x: DMatrix<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::domain("data matrix must have p >= 1 and n >= 1"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("data matrix has non-finite entries"));
        }
        Ok(Self {
            x,
            gram: Arc::new(OnceLock::new()),
        })
    }

    pub fn p(&self) -> usize {
        self.x.nrows()
    }

    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.x
    }

    /// `XᵀX`, computed once.
    pub fn gram(&self) -> &DMatrix<f64> {
        self.gram.get_or_init(|| {
            let mut g = self.x.transpose() * &self.x;
            crate::linalg::symmetrize_in_place(&mut g);
            g
        })
    }

    /// `(1/n) X Xᵀ`, the plain sample second-moment matrix.
    pub fn sample_covariance(&self) -> DMatrix<f64> {
        crate::linalg::weighted_gram(&self.x, &vec![1.0; self.n()])
    }

    /// `(1/n) X diag(w) Xᵀ`.
    pub fn weighted_covariance(&self, w: &[f64]) -> Result<DMatrix<f64>> {
        crate::error::check_len(self.n(), w.len())?;
        Ok(crate::linalg::weighted_gram(&self.x, w))
    }

    /// Returns a copy with columns reordered as `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        crate::error::check_len(self.n(), perm.len())?;
        Self::new(DMatrix::from_fn(self.p(), self.n(), |r, c| self.x[(r, perm[c])]))
    }
}

/// A family `S_1, …, S_n` of symmetric `p × p` matrices.
#[derive(Debug, Clone)]
pub enum SymmetricFamily {
    Dense(Vec<DMatrix<f64>>),
    /// `S_i = x_i x_iᵀ`, never materialized.
    RankOne(DataMatrix),
}

impl SymmetricFamily {
    /// Builds a dense family, symmetrizing each member.
    pub fn dense(members: Vec<DMatrix<f64>>) -> Result<Self> {
        let p = members
            .first()
            .ok_or_else(|| Error::domain("family must have at least one member"))?
            .nrows();
        let members = members
            .iter()
            .map(|s| {
                crate::error::check_len(p, s.nrows())?;
                symmetrized(s)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SymmetricFamily::Dense(members))
    }

    pub fn rank_one(x: DataMatrix) -> Self {
        SymmetricFamily::RankOne(x)
    }

    pub fn p(&self) -> usize {
        match self {
            SymmetricFamily::Dense(m) => m[0].nrows(),
            SymmetricFamily::RankOne(x) => x.p(),
        }
    }

    pub fn n(&self) -> usize {
        match self {
            SymmetricFamily::Dense(m) => m.len(),
            SymmetricFamily::RankOne(x) => x.n(),
        }
    }

    /// Materializes member `i`.
    pub fn member(&self, i: usize) -> DMatrix<f64> {
        match self {
            SymmetricFamily::Dense(m) => m[i].clone(),
            SymmetricFamily::RankOne(x) => {
                let c = x.matrix().column(i);
                c * c.transpose()
            }
        }
    }
}
