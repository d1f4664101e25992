//! Deterministic equivalents `D̃`, `D̃₋ₘ` and `U`.

use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use super::eta::{u_tau, Eta};
use super::lambda::lambda_real;
use super::model::{FamilyKind, PopulationModel};
use crate::error::{Error, Result};
use crate::fixed_point::solve_to_residual;
use crate::stable_metric::{DiagonalWeights, WeightFunction};

pub const RESIDUAL_TOL: f64 = 1e-11;
const MAX_ITER: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum URoute {
    /// `U = τ u(η(τ Λ^C_γ(U)))`.
    Direct,
    /// `U = τ u(τ̲ D̃₋ₘ)`.
    ViaTildeD,
}

/// Fixed point with its sup-norm residual.
#[derive(Debug, Clone, Serialize)]
pub struct EquivalentSolution {
    pub value: DiagonalWeights,
    pub residual: f64,
    pub iterations: usize,
}

fn prediction_ready(u: &WeightFunction) -> Result<Eta> {
    u.require_admissible(true)?;
    Eta::new(u)
}

/// Entrywise bracket `[c₁, c₂]` for `D̃`: `c₂ = (1/n) tr F_i / γ` and
/// `c₁ = (1 - u×∞) (1/n) tr F_i / (γ + u∞ (1/n) Σ_j τ̲_j ‖F_j‖)` where `F` is
/// the barred (or `τ̄`-scaled) family.
pub fn tilde_d_bracket(model: &PopulationModel, u: &WeightFunction, with_signal: bool) -> (Vec<f64>, Vec<f64>) {
    let family = model.family(if with_signal { FamilyKind::Barred } else { FamilyKind::TauBar });
    let n = model.n();
    let nf = n as f64;
    let gamma = model.gamma();
    let split = model.tau_split();
    let load: f64 = (0..n)
        .map(|j| split.tau_under[j] * family.norm_bound(j))
        .sum::<f64>()
        / nf;
    let lo_den = gamma + u.u_sup() * load;
    let traces: Vec<f64> = (0..n).map(|i| family.trace(i) / nf).collect();
    let lo = traces
        .iter()
        .map(|t| (1.0 - u.u_times_sup()) * t / lo_den)
        .collect();
    let hi = traces.iter().map(|t| t / gamma).collect();
    (lo, hi)
}

/// Solves `D = η_τ(Λ^F_γ(u^τ(D)))` with `F = C̄` (`with_signal`) or `τ̄ C`.
pub fn solve_tilde_d(model: &PopulationModel, u: &WeightFunction, with_signal: bool) -> Result<EquivalentSolution> {
    let eta = prediction_ready(u)?;
    let family = model.family(if with_signal { FamilyKind::Barred } else { FamilyKind::TauBar });
    let split = model.tau_split();
    let gamma = model.gamma();
    let warm: RefCell<Option<Vec<f64>>> = RefCell::new(None);
    let map = |d: &DiagonalWeights| -> Result<DiagonalWeights> {
        let v = u_tau(u, split, d.as_slice())?;
        let lambda = lambda_real(&family, &v, gamma, warm.borrow().as_deref())?;
        *warm.borrow_mut() = Some(lambda.as_slice().to_vec());
        Ok(DiagonalWeights::from_raw(eta.eval_tau(split, lambda.as_slice())?))
    };
    let (_, hi) = tilde_d_bracket(model, u, with_signal);
    let init = DiagonalWeights::new(hi)?;
    let sol = solve_to_residual(map, init, RESIDUAL_TOL, MAX_ITER)?;
    Ok(EquivalentSolution {
        value: sol.point,
        residual: sol.residual,
        iterations: sol.iterations,
    })
}

/// `U` by either route; the two routes agree to solver precision.
pub fn solve_u(model: &PopulationModel, u: &WeightFunction, route: URoute) -> Result<EquivalentSolution> {
    let eta = prediction_ready(u)?;
    let tau = model.tau();
    match route {
        URoute::ViaTildeD => {
            let d = solve_tilde_d(model, u, false)?;
            let split = model.tau_split();
            let value: Vec<f64> = d
                .value
                .iter()
                .zip(tau)
                .zip(&split.tau_under)
                .map(|((di, t), tu)| t * u.eval(tu * di))
                .collect();
            let value = DiagonalWeights::new(value)
                .map_err(|_| Error::numerical("U vanished; the weight function is too small"))?;
            let residual = direct_residual(model, u, &eta, &value)?;
            Ok(EquivalentSolution {
                value,
                residual,
                iterations: d.iterations,
            })
        }
        URoute::Direct => {
            let family = model.family(FamilyKind::Plain);
            let gamma = model.gamma();
            let warm: RefCell<Option<Vec<f64>>> = RefCell::new(None);
            let map = |x: &DiagonalWeights| -> Result<DiagonalWeights> {
                let lambda = lambda_real(&family, x.as_slice(), gamma, warm.borrow().as_deref())?;
                *warm.borrow_mut() = Some(lambda.as_slice().to_vec());
                direct_image(u, &eta, tau, lambda.as_slice())
            };
            let init = map(&DiagonalWeights::from_raw(vec![0.0; model.n()]))
                .and_then(|d| DiagonalWeights::new(d.into_vec()))
                .map_err(|_| Error::numerical("U vanished; the weight function is too small"))?;
            let sol = solve_to_residual(map, init, RESIDUAL_TOL, MAX_ITER)?;
            Ok(EquivalentSolution {
                value: sol.point,
                residual: sol.residual,
                iterations: sol.iterations,
            })
        }
    }
}

fn direct_image(u: &WeightFunction, eta: &Eta, tau: &[f64], lambda: &[f64]) -> Result<DiagonalWeights> {
    let v = lambda
        .iter()
        .zip(tau)
        .map(|(l, t)| Ok(t * u.eval(eta.eval(t * l)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(DiagonalWeights::from_raw(v))
}

/// `‖U - τ u(η(τ Λ^C_γ(U)))‖_∞`.
pub fn direct_residual(model: &PopulationModel, u: &WeightFunction, eta: &Eta, value: &DiagonalWeights) -> Result<f64> {
    let family = model.family(FamilyKind::Plain);
    let lambda = lambda_real(&family, value.as_slice(), model.gamma(), None)?;
    let image = direct_image(u, eta, model.tau(), lambda.as_slice())?;
    Ok(value.sup_distance(&image))
}

/// `‖D - η_τ(Λ^F_γ(u^τ(D)))‖_∞`.
pub fn tilde_d_residual(
    model: &PopulationModel,
    u: &WeightFunction,
    with_signal: bool,
    value: &DiagonalWeights,
) -> Result<f64> {
    let eta = Eta::new(u)?;
    let family = model.family(if with_signal { FamilyKind::Barred } else { FamilyKind::TauBar });
    let split = model.tau_split();
    let v = u_tau(u, split, value.as_slice())?;
    let lambda = lambda_real(&family, &v, model.gamma(), None)?;
    let image = eta.eval_tau(split, lambda.as_slice())?;
    Ok(value.iter().zip(&image).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}
