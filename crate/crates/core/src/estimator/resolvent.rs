use nalgebra::DMatrix;

use super::{DataMatrix, SymmetricFamily};
use crate::error::{check_len, Error, Result};
use crate::linalg::{checked_cholesky, sorted_eigenvalues, symmetrize_in_place};
use crate::stable_metric::DiagonalWeights;

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::domain(format!("gamma must be positive, got {gamma}")));
    }
    Ok(())
}

fn check_weights(s: &SymmetricFamily, w: &[f64]) -> Result<()> {
    check_len(s.n(), w.len())?;
    if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::domain("weights must be finite and nonnegative"));
    }
    Ok(())
}

/// `(1/n) Σ w_i S_i + γI`.
fn assemble(s: &SymmetricFamily, w: &[f64], gamma: f64) -> DMatrix<f64> {
    let p = s.p();
    let n = s.n() as f64;
    let mut a = match s {
        SymmetricFamily::Dense(members) => {
            let mut a = DMatrix::zeros(p, p);
            for (m, &wi) in members.iter().zip(w) {
                a += m * (wi / n);
            }
            a
        }
        SymmetricFamily::RankOne(x) => crate::linalg::weighted_gram(x.matrix(), w),
    };
    for i in 0..p {
        a[(i, i)] += gamma;
    }
    symmetrize_in_place(&mut a);
    a
}

fn invert_assembly(a: DMatrix<f64>) -> Result<DMatrix<f64>> {
    match checked_cholesky(a.clone()) {
        Ok(chol) => {
            let mut q = chol.inverse();
            symmetrize_in_place(&mut q);
            Ok(q)
        }
        Err(Error::Numerical(msg)) if msg.starts_with("ill-conditioned") => Err(Error::Numerical(msg)),
        Err(_) => {
            // Indefinite members: fall back to a general inverse.
            let (lo, hi) = a
                .symmetric_eigenvalues()
                .iter()
                .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v.abs()), hi.max(v.abs())));
            if !(lo > 0.0) || hi / lo > crate::linalg::MAX_CONDITION {
                return Err(Error::numerical("singular or ill-conditioned assembly"));
            }
            let mut q = a.try_inverse().ok_or_else(|| Error::numerical("singular assembly"))?;
            symmetrize_in_place(&mut q);
            Ok(q)
        }
    }
}

/// `Q_γ(S, Δ) = ((1/n) Σ Δ_i S_i + γI)⁻¹`.
pub fn resolvent(s: &SymmetricFamily, delta: &DiagonalWeights, gamma: f64) -> Result<DMatrix<f64>> {
    check_gamma(gamma)?;
    check_weights(s, delta.as_slice())?;
    invert_assembly(assemble(s, delta.as_slice(), gamma))
}

/// `I(S, Δ)_i = (1/n) tr(S_i Q_γ(S, Δ))`.
pub fn trace_map(s: &SymmetricFamily, delta: &DiagonalWeights, gamma: f64) -> Result<DiagonalWeights> {
    check_gamma(gamma)?;
    check_weights(s, delta.as_slice())?;
    DiagonalWeights::new(trace_map_raw(s, delta.as_slice(), gamma)?)
}

/// Trace map for nonnegative weights; entries may be zero for null members.
pub(crate) fn trace_map_raw(s: &SymmetricFamily, w: &[f64], gamma: f64) -> Result<Vec<f64>> {
    match s {
        SymmetricFamily::Dense(members) => {
            let q = invert_assembly(assemble(s, w, gamma))?;
            let n = members.len() as f64;
            Ok(members.iter().map(|m| m.dot(&q) / n).collect())
        }
        SymmetricFamily::RankOne(x) if x.p() <= x.n() => rank_one_primal(x, w, gamma),
        SymmetricFamily::RankOne(x) => rank_one_dual(x, w, gamma),
    }
}

/// `x_iᵀ Q x_i / n` through the `p × p` Cholesky factor.
fn rank_one_primal(x: &DataMatrix, w: &[f64], gamma: f64) -> Result<Vec<f64>> {
    let mut a = crate::linalg::weighted_gram(x.matrix(), w);
    for i in 0..x.p() {
        a[(i, i)] += gamma;
    }
    let chol = checked_cholesky(a)?;
    let mut y = x.matrix().clone();
    chol.l_dirty()
        .solve_lower_triangular_mut(&mut y);
    let n = x.n() as f64;
    Ok(y.column_iter().map(|c| c.norm_squared() / n).collect())
}

/// Woodbury form on the `n × n` Gram side:
/// `x_iᵀ Q x_i = (G_ii - ‖L⁻¹ W^{1/2} G e_i‖²)/γ` with `LLᵀ = nγI + W^{1/2} G W^{1/2}`.
fn rank_one_dual(x: &DataMatrix, w: &[f64], gamma: f64) -> Result<Vec<f64>> {
    let g = x.gram();
    let n = x.n();
    let sq: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let mut m = DMatrix::from_fn(n, n, |i, j| sq[i] * g[(i, j)] * sq[j]);
    for i in 0..n {
        m[(i, i)] += n as f64 * gamma;
    }
    let chol = checked_cholesky(m)?;
    let mut h = DMatrix::from_fn(n, n, |i, j| sq[i] * g[(i, j)]);
    chol.l_dirty()
        .solve_lower_triangular_mut(&mut h);
    let scale = 1.0 / (n as f64 * gamma);
    Ok((0..n)
        .map(|i| ((g[(i, i)] - h.column(i).norm_squared()) * scale).max(0.0))
        .collect())
}

/// Spectral norm of `I - γQ_γ(S, Δ)`.
pub fn contraction_factor(s: &SymmetricFamily, delta: &DiagonalWeights, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    check_weights(s, delta.as_slice())?;
    let eig = match s {
        SymmetricFamily::RankOne(x) if x.n() < x.p() => {
            let n = x.n();
            let sq: Vec<f64> = delta.iter().map(|v| v.sqrt()).collect();
            let g = x.gram();
            let k = DMatrix::from_fn(n, n, |i, j| sq[i] * g[(i, j)] * sq[j] / n as f64);
            let mut e = sorted_eigenvalues(k);
            e.push(0.0);
            e.iter().map(|v| v + gamma).collect()
        }
        _ => sorted_eigenvalues(assemble(s, delta.as_slice(), gamma)),
    };
    Ok(eig
        .iter()
        .map(|a| (1.0 - gamma / a).abs())
        .fold(0.0, f64::max))
}

/// `‖S‖ = (1/n) ‖Σ S_i‖`.
pub fn family_norm(s: &SymmetricFamily) -> f64 {
    let n = s.n() as f64;
    match s {
        SymmetricFamily::Dense(members) => {
            let mut sum = DMatrix::zeros(s.p(), s.p());
            for m in members {
                sum += m;
            }
            sorted_eigenvalues(sum).iter().map(|v| v.abs()).fold(0.0, f64::max) / n
        }
        SymmetricFamily::RankOne(x) => {
            let top = if x.n() <= x.p() {
                sorted_eigenvalues(x.gram().clone())
            } else {
                sorted_eigenvalues(x.matrix() * x.matrix().transpose())
            };
            top.last().cloned().unwrap_or(0.0).max(0.0) / n
        }
    }
}
