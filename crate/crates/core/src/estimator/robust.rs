use nalgebra::DMatrix;
use serde::Serialize;

use super::{family_norm, trace_map_raw, DataMatrix, SymmetricFamily};
use crate::error::{Error, Result};
use crate::fixed_point::solve_to_residual;
use crate::stable_metric::{DiagonalWeights, WeightFunction};

#[derive(Debug, Clone)]
pub struct RobustOptions {
    pub gamma: f64,
    /// Sup-norm tolerance on `Δ̂ - I^X(u(Δ̂))`.
    pub tol: f64,
    pub max_iter: usize,
    /// Optional starting point; defaults to `I^X(u(1, …, 1))`.
    pub init: Option<DiagonalWeights>,
}

impl RobustOptions {
    pub fn new(gamma: f64) -> Self {
        Self {
            gamma,
            tol: 1e-11,
            max_iter: 5_000,
            init: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RobustEstimate {
    pub delta_hat: DiagonalWeights,
    /// `u(Δ̂)`.
    pub weights: Vec<f64>,
    #[serde(skip)]
    pub scatter: DMatrix<f64>,
    /// `‖Δ̂ - I^X(u(Δ̂))‖_∞`.
    pub residual: f64,
    pub gamma: f64,
    /// `1 - γ/(γ + u∞ ‖S‖)`.
    pub contraction_bound: f64,
    pub iterations: usize,
    pub observed_rates: Vec<f64>,
}

impl RobustEstimate {
    /// `D̂ = Δ̂ / max(τ, 1)`.
    pub fn d_hat(&self, tau: &[f64]) -> Result<Vec<f64>> {
        crate::error::check_len(self.delta_hat.len(), tau.len())?;
        Ok(self
            .delta_hat
            .iter()
            .zip(tau)
            .map(|(d, t)| d / t.max(1.0))
            .collect())
    }

    pub fn max_observed_rate(&self) -> f64 {
        self.observed_rates.iter().cloned().fold(0.0, f64::max)
    }
}

fn apply_weights(u: &WeightFunction, d: &[f64]) -> Vec<f64> {
    d.iter().map(|&t| u.eval(t)).collect()
}

/// Solves `Δ̂ = I^X(u(Δ̂))` and assembles `Ĉ = (1/n) X u(Δ̂) Xᵀ`.
pub fn solve_robust(x: &DataMatrix, u: &WeightFunction, opts: &RobustOptions) -> Result<RobustEstimate> {
    u.require_admissible(false)?;
    let gamma = opts.gamma;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::domain(format!("gamma must be positive, got {gamma}")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::domain("tol must be positive"));
    }
    let family = SymmetricFamily::rank_one(x.clone());
    let map = |d: &DiagonalWeights| -> Result<DiagonalWeights> {
        let w = apply_weights(u, d.as_slice());
        Ok(DiagonalWeights::from_raw(trace_map_raw(&family, &w, gamma)?))
    };

    let point = match &opts.init {
        Some(init) => {
            crate::error::check_len(x.n(), init.len())?;
            init.clone()
        }
        None => {
            let start = DiagonalWeights::from_raw(trace_map_raw(&family, &vec![u.eval(1.0); x.n()], gamma)?);
            if !start.iter().all(|v| *v > 0.0 && v.is_finite()) {
                return Err(Error::Diverged {
                    iteration: 0,
                    last_iterate: start.into_vec(),
                });
            }
            start
        }
    };

    let sol = solve_to_residual(map, point, opts.tol, opts.max_iter)?;
    let point = sol.point;
    let residual = sol.residual;
    let iterations = sol.iterations;
    let rates = sol.observed_rates;

    let weights = apply_weights(u, point.as_slice());
    let scatter = x.weighted_covariance(&weights)?;
    let s_norm = family_norm(&family);
    let contraction_bound = 1.0 - gamma / (gamma + u.u_sup() * s_norm);
    Ok(RobustEstimate {
        delta_hat: point,
        weights,
        scatter,
        residual,
        gamma,
        contraction_bound,
        iterations,
        observed_rates: rates,
    })
}
