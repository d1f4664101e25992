//! Deterministic equivalents of the robust estimator.
//!
//! Everything here depends on the population model only: the link `η`,
//! the trace fixed point `Λ_z`, the diagonals `D̃`, `D̃₋ₘ` and `U`, and the
//! spectral predictions built from them.

mod equivalents;
mod eta;
mod family;
mod lambda;
mod model;
mod spectral;

pub use equivalents::{
    direct_residual, solve_tilde_d, solve_u, tilde_d_bracket, tilde_d_residual, EquivalentSolution, URoute,
    RESIDUAL_TOL,
};
pub use eta::{eta, eta_tau, u_tau, Eta};
pub use family::{Evaluation, MomentFamily, Probe};
pub use lambda::{
    deterministic_resolvent, effective_weights, lambda_fixed_point, lambda_map, lambda_real, LambdaSolution,
};
pub use model::{FamilyKind, PopulationModel, SecondMoments, TauSplit};
pub use spectral::{
    density_cdf, detect_spike, ks_distance, predicted_alignment, predicted_density, predicted_stieltjes,
    AlignmentResult, ContourSpec, DensityResult, Predictor, StieltjesSample,
};

use crate::error::Result;
use crate::stable_metric::{DiagonalWeights, WeightFunction};

/// Weights `τ u(τ̲ D̃)` from the signal-aware `D̃`; used for alignment.
pub fn signal_aware_u(model: &PopulationModel, u: &WeightFunction, tilde_d: &DiagonalWeights) -> Result<DiagonalWeights> {
    let split = model.tau_split();
    DiagonalWeights::new(
        tilde_d
            .iter()
            .zip(model.tau())
            .zip(&split.tau_under)
            .map(|((d, t), tu)| t * u.eval(tu * d))
            .collect(),
    )
}

#[cfg(test)]
mod tests;
