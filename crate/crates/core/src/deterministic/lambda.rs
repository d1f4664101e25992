//! The trace fixed point `Λ_z(Δ)` and the deterministic resolvent.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::family::MomentFamily;
use crate::error::{check_len, Error, Result};
use crate::fixed_point::{ComplexDiagonal, FixedPointProblem};
use crate::stable_metric::DiagonalWeights;

const REAL_TOL: f64 = 1e-15;
const COMPLEX_TOL: f64 = 1e-14;
const MAX_ITER: usize = 200_000;

#[derive(Debug, Clone)]
pub struct LambdaSolution {
    pub lambda: Vec<Complex64>,
    pub iterations: usize,
    /// `max_i |Λ_i - (1/n) tr(C_i Q̃)|`.
    pub residual: f64,
    /// `(1/p) tr Q̃` at the solution.
    pub normalized_trace: Complex64,
}

impl LambdaSolution {
    pub fn real_parts(&self) -> Vec<f64> {
        self.lambda.iter().map(|v| v.re).collect()
    }
}

/// `Δ_j / (1 + Δ_j Λ_j)`.
pub fn effective_weights(delta: &[f64], lambda: &[Complex64]) -> Vec<Complex64> {
    delta
        .iter()
        .zip(lambda)
        .map(|(&d, &l)| Complex64::new(d, 0.0) / (1.0 + l * d))
        .collect()
}

fn check_inputs(family: &MomentFamily, delta: &[f64], z: Complex64) -> Result<()> {
    check_len(family.n(), delta.len())?;
    if delta.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(Error::domain("weights must be finite and nonnegative"));
    }
    if !(z.re.is_finite() && z.im.is_finite()) || (z.im == 0.0 && z.re <= 0.0) {
        return Err(Error::domain(format!("z = {z} lies on the nonpositive real axis")));
    }
    Ok(())
}

/// One application of `Λ ↦ diag((1/n) tr(C_i Q̃(Λ)))`.
pub fn lambda_map(
    family: &MomentFamily,
    delta: &[f64],
    z: Complex64,
    lambda: &[Complex64],
) -> Result<Vec<Complex64>> {
    check_len(family.n(), lambda.len())?;
    Ok(family
        .evaluate(&effective_weights(delta, lambda), z, None)?
        .traces)
}

/// Solves `Λ_i = (1/n) tr(C_i ((1/n) Σ_j C_j Δ_j/(1 + Δ_j Λ_j) + zI)⁻¹)`.
///
/// Real `z > 0` iterates in the semi-metric without damping; other `z`
/// iterate on complex diagonals with damping 0.5. `init` enables warm starts.
pub fn lambda_fixed_point(
    family: &MomentFamily,
    delta: &[f64],
    z: Complex64,
    init: Option<&[Complex64]>,
) -> Result<LambdaSolution> {
    check_inputs(family, delta, z)?;
    let n = family.n();
    let default_init = || -> Vec<Complex64> { (0..n).map(|i| family.trace(i) / n as f64 / z).collect() };
    let start = match init {
        Some(v) => {
            check_len(n, v.len())?;
            v.to_vec()
        }
        None => default_init(),
    };

    let (lambda, iterations) = if z.im == 0.0 {
        let map = |l: &DiagonalWeights| -> Result<DiagonalWeights> {
            let lc: Vec<Complex64> = l.iter().map(|v| Complex64::new(*v, 0.0)).collect();
            let t = lambda_map(family, delta, z, &lc)?;
            Ok(DiagonalWeights::from_raw(t.iter().map(|v| v.re).collect()))
        };
        let init = DiagonalWeights::from_raw(start.iter().map(|v| v.re).collect());
        let init = if init.iter().all(|v| *v > 0.0 && v.is_finite()) {
            init
        } else {
            DiagonalWeights::from_raw(default_init().iter().map(|v| v.re).collect())
        };
        let sol = FixedPointProblem::new(map, init)
            .tol(REAL_TOL)
            .max_iter(MAX_ITER)
            .solve()?
            .require_converged()?;
        (
            sol.point.iter().map(|v| Complex64::new(*v, 0.0)).collect::<Vec<_>>(),
            sol.iterations,
        )
    } else {
        let map = |l: &ComplexDiagonal| -> Result<ComplexDiagonal> {
            Ok(ComplexDiagonal(lambda_map(family, delta, z, &l.0)?))
        };
        let sol = FixedPointProblem::new(map, ComplexDiagonal(start))
            .tol(COMPLEX_TOL)
            .max_iter(MAX_ITER)
            .damping(0.5)
            .solve()?
            .require_converged()?;
        (sol.point.0, sol.iterations)
    };

    let eval = family.evaluate(&effective_weights(delta, &lambda), z, None)?;
    let residual = lambda
        .iter()
        .zip(&eval.traces)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    Ok(LambdaSolution {
        lambda,
        iterations,
        residual,
        normalized_trace: eval.normalized_trace,
    })
}

/// Real `z > 0` convenience returning a positive diagonal.
pub fn lambda_real(family: &MomentFamily, delta: &[f64], z: f64, init: Option<&[f64]>) -> Result<DiagonalWeights> {
    let init: Option<Vec<Complex64>> = init.map(|v| v.iter().map(|x| Complex64::new(*x, 0.0)).collect());
    let sol = lambda_fixed_point(family, delta, Complex64::new(z, 0.0), init.as_deref())?;
    DiagonalWeights::new(sol.real_parts())
}

/// `Q̃ = ((1/n) Σ Δ_i C_i/(1 + Δ_i Λ_i) + zI)⁻¹`.
pub fn deterministic_resolvent(
    family: &MomentFamily,
    delta: &[f64],
    lambda: &[Complex64],
    z: Complex64,
) -> Result<DMatrix<Complex64>> {
    check_inputs(family, delta, z)?;
    check_len(family.n(), lambda.len())?;
    family.resolvent_matrix(&effective_weights(delta, lambda), z)
}
