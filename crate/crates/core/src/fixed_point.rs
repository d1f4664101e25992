//! Picard iteration for self-maps contracting under the stable semi-metric.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::stable_metric::{stable_distance, DiagonalWeights};

/// State space for [`solve`].
pub trait FixedPointState: Clone {
    /// Convergence distance (the stable semi-metric for positive diagonals).
    fn step_distance(&self, other: &Self) -> f64;
    /// Sup-norm distance, recorded for reporting.
    fn sup_distance(&self, other: &Self) -> f64;
    /// Damped update from `self` toward `image` with weight `w` in (0, 1].
    fn damped(&self, image: &Self, w: f64) -> Self;
    /// Whether the state lies in the solver's domain.
    fn is_valid(&self) -> bool;
    fn to_diagnostic(&self) -> Vec<f64>;
}

impl FixedPointState for DiagonalWeights {
    fn step_distance(&self, other: &Self) -> f64 {
        stable_distance(self, other).unwrap_or(f64::INFINITY)
    }

    fn sup_distance(&self, other: &Self) -> f64 {
        DiagonalWeights::sup_distance(self, other)
    }

    fn damped(&self, image: &Self, w: f64) -> Self {
        self.geometric_blend(image, w)
    }

    fn is_valid(&self) -> bool {
        self.iter().all(|v| v.is_finite() && *v > 0.0)
    }

    fn to_diagnostic(&self) -> Vec<f64> {
        self.as_slice().to_vec()
    }
}

/// Complex diagonal, used for resolvent fixed points off the real axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexDiagonal(pub Vec<Complex64>);

impl FixedPointState for ComplexDiagonal {
    /// Complex analogue of the semi-metric: `max |a - b| / sqrt(|a| |b|)`.
    fn step_distance(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| {
                let scale = (a.norm() * b.norm()).sqrt();
                let diff = (a - b).norm();
                if diff == 0.0 {
                    0.0
                } else {
                    diff / scale
                }
            })
            .fold(0.0, f64::max)
    }

    fn sup_distance(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    fn damped(&self, image: &Self, w: f64) -> Self {
        ComplexDiagonal(
            self.0
                .iter()
                .zip(&image.0)
                .map(|(a, b)| a * (1.0 - w) + b * w)
                .collect(),
        )
    }

    fn is_valid(&self) -> bool {
        self.0.iter().all(|v| v.re.is_finite() && v.im.is_finite() && v.norm() > 0.0)
    }

    fn to_diagnostic(&self) -> Vec<f64> {
        self.0.iter().flat_map(|v| [v.re, v.im]).collect()
    }
}

/// Picard problem `x ← blend(x, map(x), damping)`.
pub struct FixedPointProblem<S, F> {
    pub map: F,
    pub init: S,
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    /// Keep every iterate in the solution (for diagnostics and tests).
    pub record_trajectory: bool,
}

impl<S, F> FixedPointProblem<S, F>
where
    S: FixedPointState,
    F: FnMut(&S) -> Result<S>,
{
    pub fn new(map: F, init: S) -> Self {
        Self {
            map,
            init,
            tol: 1e-12,
            max_iter: 10_000,
            damping: 1.0,
            record_trajectory: false,
        }
    }

    pub fn tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn damping(mut self, damping: f64) -> Self {
        self.damping = damping;
        self
    }

    pub fn record_trajectory(mut self, yes: bool) -> Self {
        self.record_trajectory = yes;
        self
    }

    pub fn solve(self) -> Result<FixedPointSolution<S>> {
        solve(self)
    }
}

#[derive(Debug, Clone)]
pub struct FixedPointSolution<S> {
    pub point: S,
    pub iterations: usize,
    /// Distance between the last two iterates.
    pub final_step: f64,
    /// Sup-norm distance between the last two iterates.
    pub final_sup_step: f64,
    /// Ratios of consecutive step distances.
    pub observed_rates: Vec<f64>,
    pub converged: bool,
    /// `Δ^(0), Δ^(1), …` when requested.
    pub trajectory: Vec<S>,
}

impl<S: FixedPointState> FixedPointSolution<S> {
    /// Converts a non-converged result into [`Error::NonConvergence`].
    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NonConvergence {
                iterations: self.iterations,
                last_step: self.final_step,
                last_iterate: self.point.to_diagnostic(),
            })
        }
    }

    pub fn max_observed_rate(&self) -> f64 {
        self.observed_rates.iter().cloned().fold(0.0, f64::max)
    }
}

pub fn solve<S, F>(problem: FixedPointProblem<S, F>) -> Result<FixedPointSolution<S>>
where
    S: FixedPointState,
    F: FnMut(&S) -> Result<S>,
{
    let FixedPointProblem {
        mut map,
        init,
        tol,
        max_iter,
        damping,
        record_trajectory,
    } = problem;
    if !(tol > 0.0) || max_iter == 0 || !(damping > 0.0 && damping <= 1.0) {
        return Err(Error::domain("need tol > 0, max_iter >= 1 and damping in (0, 1]"));
    }
    if !init.is_valid() {
        return Err(Error::Diverged {
            iteration: 0,
            last_iterate: init.to_diagnostic(),
        });
    }
    let mut trajectory = Vec::new();
    if record_trajectory {
        trajectory.push(init.clone());
    }
    let mut current = init;
    let mut rates = Vec::new();
    let mut prev_step = f64::NAN;
    let mut step = f64::INFINITY;
    let mut sup_step = f64::INFINITY;
    for k in 1..=max_iter {
        let image = map(&current)?;
        if !image.is_valid() {
            return Err(Error::Diverged {
                iteration: k,
                last_iterate: current.to_diagnostic(),
            });
        }
        let next = current.damped(&image, damping);
        if !next.is_valid() {
            return Err(Error::Diverged {
                iteration: k,
                last_iterate: current.to_diagnostic(),
            });
        }
        step = next.step_distance(&current);
        sup_step = next.sup_distance(&current);
        if prev_step.is_finite() && prev_step > 0.0 {
            rates.push(step / prev_step);
        }
        prev_step = step;
        current = next;
        if record_trajectory {
            trajectory.push(current.clone());
        }
        if step <= tol {
            return Ok(FixedPointSolution {
                point: current,
                iterations: k,
                final_step: step,
                final_sup_step: sup_step,
                observed_rates: rates,
                converged: true,
                trajectory,
            });
        }
    }
    Ok(FixedPointSolution {
        point: current,
        iterations: max_iter,
        final_step: step,
        final_sup_step: sup_step,
        observed_rates: rates,
        converged: false,
        trajectory,
    })
}

/// Result of [`solve_to_residual`].
#[derive(Debug, Clone)]
pub struct ResidualSolution {
    pub point: DiagonalWeights,
    /// `‖x - F(x)‖_∞` at the returned point.
    pub residual: f64,
    pub iterations: usize,
    pub observed_rates: Vec<f64>,
}

/// Picard iteration until the sup-norm residual `‖x - F(x)‖_∞ ≤ sup_tol`.
///
/// Steps are still measured with the semi-metric; its tolerance is derived
/// from `sup_tol` and the scale of the iterates and tightened until the
/// residual target is met or the floating-point floor is reached.
pub fn solve_to_residual<F>(
    mut map: F,
    init: DiagonalWeights,
    sup_tol: f64,
    max_iter: usize,
) -> Result<ResidualSolution>
where
    F: FnMut(&DiagonalWeights) -> Result<DiagonalWeights>,
{
    if !(sup_tol > 0.0) {
        return Err(Error::domain("tolerance must be positive"));
    }
    let mut point = init;
    let mut ds_tol = (0.1 * sup_tol / point.max().max(1.0)).max(1e-15);
    let mut iterations = 0;
    let mut rates = Vec::new();
    loop {
        let sol = FixedPointProblem::new(&mut map, point)
            .tol(ds_tol)
            .max_iter(max_iter.saturating_sub(iterations).max(1))
            .solve()?;
        iterations += sol.iterations;
        rates.extend(sol.observed_rates.iter().cloned());
        point = sol.point;
        let image = map(&point)?;
        let residual = point.sup_distance(&image);
        if residual <= sup_tol {
            return Ok(ResidualSolution {
                point,
                residual,
                iterations,
                observed_rates: rates,
            });
        }
        let floor = ds_tol <= 1e-15;
        if iterations >= max_iter || (floor && sol.converged) {
            // One more contraction step may clear a rounding-level miss.
            let again = map(&image)?;
            let r2 = image.sup_distance(&again);
            if r2 <= sup_tol {
                return Ok(ResidualSolution {
                    point: image,
                    residual: r2,
                    iterations: iterations + 1,
                    observed_rates: rates,
                });
            }
            return Err(Error::NonConvergence {
                iterations,
                last_step: residual,
                last_iterate: point.into_vec(),
            });
        }
        if sol.converged {
            ds_tol = (ds_tol * 0.01).max(1e-15);
        }
    }
}

/// Envelope factors `exp(∓ rate·first_step / (2(1 - rate)))` around `Δ^(1)`.
pub fn iterate_bounds(first_step: f64, rate: f64) -> Result<(f64, f64)> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::domain(format!("rate must lie in (0, 1), got {rate}")));
    }
    if !(first_step >= 0.0 && first_step.is_finite()) {
        return Err(Error::domain(format!("first step must be finite and >= 0, got {first_step}")));
    }
    let e = rate * first_step / (2.0 * (1.0 - rate));
    Ok(((-e).exp(), e.exp()))
}

/// Envelope from summing the log-ratio of each step: since
/// `|ln(a/b)| = 2 asinh(d_s(a,b)/2) ≤ d_s(a,b)`, all later iterates stay within
/// `exp(∓ rate·first_step / (1 - rate))` of `Δ^(1)`.
pub fn log_step_envelope(first_step: f64, rate: f64) -> Result<(f64, f64)> {
    let (lo, hi) = iterate_bounds(first_step, rate)?;
    Ok((lo * lo, hi * hi))
}
