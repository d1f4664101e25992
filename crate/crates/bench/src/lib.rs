//! Fixtures shared by the benchmarks.

use rscm_core::datagen::{self, GeneratorSpec};
use rscm_core::deterministic::{solve_u, PopulationModel, URoute};
use rscm_core::estimator::DataMatrix;
use rscm_core::{DiagonalWeights, WeightFunction};

pub fn weight() -> WeightFunction {
    WeightFunction::min_lin_inv(5.0).expect("valid parameter")
}

/// Sine-correlated data with folded Student scalings and a unit signal.
pub fn data(p: usize, n: usize, seed: u64) -> DataMatrix {
    datagen::generate(&GeneratorSpec::sin_correlated(p, n, seed))
        .expect("valid spec")
        .x
}

/// Population model of [`data`] with `γ = 1`.
pub fn model(p: usize, n: usize, seed: u64) -> PopulationModel {
    let spec = GeneratorSpec::sin_correlated(p, n, seed);
    let tau = datagen::sample_tau(&spec).expect("valid spec");
    datagen::population_model(&spec, tau, 1.0, None).expect("closed-form moments")
}

pub fn u_diag(model: &PopulationModel) -> DiagonalWeights {
    solve_u(model, &weight(), URoute::Direct).expect("converges").value
}
