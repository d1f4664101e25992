//! The stable semi-metric on positive diagonal matrices.
//!
//! `d_s(a, b) = max_i |a_i - b_i| / sqrt(a_i b_i)`. It is invariant under
//! entrywise scaling and inversion but does not satisfy the triangle
//! inequality.

mod weight;

pub use weight::{verify_weight_admissibility, AdmissibilityReport, WeightFunction};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Default relative tolerance for monotonicity checks on a grid.
pub const GRID_REL_TOL: f64 = 1e-12;

/// A strictly positive diagonal matrix stored as its diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DiagonalWeights(Vec<f64>);

impl DiagonalWeights {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::domain("diagonal must have at least one entry"));
        }
        if let Some((i, v)) = entries
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::domain(format!("entry {i} = {v} is not positive and finite")));
        }
        Ok(Self(entries))
    }

    /// Unchecked constructor; fixed-point maps use it so the solver can
    /// report invalid iterates as divergence.
    pub(crate) fn from_raw(entries: Vec<f64>) -> Self {
        Self(entries)
    }

    pub fn constant(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![1.0; n.max(1)])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().cloned().fold(f64::MIN, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.0.iter().cloned().fold(f64::MAX, f64::min)
    }

    /// Entrywise map; the result is validated.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.0.iter().map(|&v| f(v)).collect())
    }

    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        check_len(self.len(), other.len())?;
        Self::new(self.0.iter().zip(&other.0).map(|(a, b)| a * b).collect())
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.iter().map(|v| 1.0 / v).collect())
    }

    /// Geometric interpolation `self^(1-w) * other^w`.
    pub fn geometric_blend(&self, other: &Self, w: f64) -> Self {
        if w == 1.0 {
            return other.clone();
        }
        Self(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| (a.ln() * (1.0 - w) + b.ln() * w).exp())
                .collect(),
        )
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<f64>> for DiagonalWeights {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<DiagonalWeights> for Vec<f64> {
    fn from(d: DiagonalWeights) -> Vec<f64> {
        d.0
    }
}

impl std::ops::Index<usize> for DiagonalWeights {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Scalar stable semi-metric.
pub fn scalar_distance(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a * b).sqrt()
}

pub fn stable_distance(a: &DiagonalWeights, b: &DiagonalWeights) -> Result<f64> {
    check_len(a.len(), b.len())?;
    Ok(a.0
        .iter()
        .zip(&b.0)
        .map(|(&x, &y)| scalar_distance(x, y))
        .fold(0.0, f64::max))
}

/// `n` log-spaced points on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo && n >= 1);
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

pub fn default_grid() -> Vec<f64> {
    log_grid(1e-6, 1e6, 4096)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub is_stable: bool,
    /// First consecutive probe pair where a monotonicity test failed.
    pub first_violation: Option<(f64, f64)>,
}

/// Checks that `t f(t)` is non-decreasing and `f(t)/t` non-increasing on the grid.
pub fn check_stable_on_grid(f: impl Fn(f64) -> f64, grid: &[f64]) -> Result<StabilityReport> {
    scan_stability(f, grid, false)
}

pub(crate) fn scan_stability(
    f: impl Fn(f64) -> f64,
    grid: &[f64],
    allow_zero: bool,
) -> Result<StabilityReport> {
    if grid.is_empty() {
        return Err(Error::domain("empty grid"));
    }
    if grid[0] <= 0.0 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("grid must be positive and strictly increasing"));
    }
    let mut values = Vec::with_capacity(grid.len());
    for &t in grid {
        let v = f(t);
        let ok = v.is_finite() && (v > 0.0 || (allow_zero && v == 0.0));
        if !ok {
            return Err(Error::domain(format!("f({t:e}) = {v} is not positive and finite")));
        }
        values.push(v);
    }
    for k in 1..grid.len() {
        let (t0, t1) = (grid[k - 1], grid[k]);
        let (prod0, prod1) = (t0 * values[k - 1], t1 * values[k]);
        let (quot0, quot1) = (values[k - 1] / t0, values[k] / t1);
        if prod1 < prod0 * (1.0 - GRID_REL_TOL) || quot1 > quot0 * (1.0 + GRID_REL_TOL) {
            return Ok(StabilityReport {
                is_stable: false,
                first_violation: Some((t0, t1)),
            });
        }
    }
    Ok(StabilityReport {
        is_stable: true,
        first_violation: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn d(v: &[f64]) -> DiagonalWeights {
        DiagonalWeights::new(v.to_vec()).unwrap()
    }

    #[test]
    fn exact_values() {
        assert_eq!(stable_distance(&d(&[4.0]), &d(&[1.0])).unwrap(), 1.5);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(stable_distance(&d(&[4.0]), &d(&[2.0])).unwrap(), h, epsilon = 1e-15);
        assert_abs_diff_eq!(stable_distance(&d(&[2.0]), &d(&[1.0])).unwrap(), h, epsilon = 1e-15);
        assert_abs_diff_eq!(
            stable_distance(&d(&[1.0, 2.0]), &d(&[2.0, 3.0])).unwrap(),
            h,
            epsilon = 1e-15
        );
        let a = d(&[0.3, 7.0, 1e-4]);
        assert_eq!(stable_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn no_triangle_inequality() {
        let lhs = scalar_distance(4.0, 1.0);
        let rhs = scalar_distance(4.0, 2.0) + scalar_distance(2.0, 1.0);
        assert!(lhs > rhs);
        assert_abs_diff_eq!(rhs, 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            stable_distance(&d(&[1.0]), &d(&[1.0, 2.0])),
            Err(Error::Dimension { .. })
        ));
        assert!(DiagonalWeights::new(vec![1.0, 0.0]).is_err());
        assert!(DiagonalWeights::new(vec![f64::NAN]).is_err());
        assert!(DiagonalWeights::new(vec![]).is_err());
    }

    #[test]
    fn grid_stability() {
        let grid = default_grid();
        let u = |t: f64| t.min(1.0 / (1.0 + 5.0 * t));
        assert!(check_stable_on_grid(u, &grid).unwrap().is_stable);
        let sq = check_stable_on_grid(|t| t * t, &grid).unwrap();
        assert!(!sq.is_stable);
        assert!(sq.first_violation.is_some());
        assert!(check_stable_on_grid(|_| -1.0, &grid).is_err());
        let tents = WeightFunction::tents_infimum();
        assert!(check_stable_on_grid(|t| tents.eval(t), &grid).unwrap().is_stable);
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(1e-6, 1e6, 4096);
        assert_eq!(g.len(), 4096);
        assert_abs_diff_eq!(g[0], 1e-6, epsilon = 1e-20);
        assert!((g[4095] / 1e6 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conversion_validates() {
        let v: Vec<f64> = d(&[1.0, 2.5]).into();
        assert_eq!(v, vec![1.0, 2.5]);
        assert!(DiagonalWeights::try_from(vec![-1.0]).is_err());
    }
}
