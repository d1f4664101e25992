//! Stieltjes transforms, density recovery, and spike alignment.
//!
//! `g(z) = (1/p) tr Q̃_z` predicts `(1/p) tr (Ĉ + zI)⁻¹`. The Stieltjes
//! transform of the spectral measure is `m(w) = (1/p) tr (Ĉ - wI)⁻¹ = g(-w)`.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::Serialize;

use super::family::{MomentFamily, Probe};
use super::lambda::{effective_weights, lambda_fixed_point};
use super::model::{FamilyKind, PopulationModel};
use crate::error::{check_len, Error, Result};
use crate::stable_metric::DiagonalWeights;

/// Warm-started evaluator of `Q̃_z` traces for fixed weights.
#[derive(Debug, Clone)]
pub struct Predictor {
    family: MomentFamily,
    weights: Vec<f64>,
    warm: Option<Vec<Complex64>>,
    warm_z: Option<Complex64>,
}

impl Predictor {
    pub fn new(family: MomentFamily, weights: &[f64]) -> Result<Self> {
        check_len(family.n(), weights.len())?;
        Ok(Self {
            family,
            weights: weights.to_vec(),
            warm: None,
            warm_z: None,
        })
    }

    /// `Λ_z` for the predictor's weights, warm-started from the last call.
    pub fn lambda(&mut self, z: Complex64) -> Result<Vec<Complex64>> {
        // A warm start from the other half-plane points the iteration at the
        // conjugate branch; fall back to the default start in that case.
        let usable = match (self.warm_z, &self.warm) {
            (Some(prev), Some(_)) => prev.im * z.im >= 0.0,
            _ => false,
        };
        let init = if usable { self.warm.as_deref() } else { None };
        let sol = lambda_fixed_point(&self.family, &self.weights, z, init)?;
        self.warm = Some(sol.lambda.clone());
        self.warm_z = Some(z);
        Ok(sol.lambda)
    }

    /// `(1/p) tr Q̃_z`.
    pub fn normalized_trace(&mut self, z: Complex64) -> Result<Complex64> {
        let lambda = self.lambda(z)?;
        Ok(self
            .family
            .evaluate(&effective_weights(&self.weights, &lambda), z, None)?
            .normalized_trace)
    }

    /// `vᵀ Q̃_z v` for a prepared probe.
    pub fn quadratic_form(&mut self, z: Complex64, probe: &Probe) -> Result<Complex64> {
        let lambda = self.lambda(z)?;
        Ok(self
            .family
            .evaluate(&effective_weights(&self.weights, &lambda), z, Some(probe))?
            .probe
            .expect("probe requested"))
    }

    pub fn family(&self) -> &MomentFamily {
        &self.family
    }
}

/// Prediction of `(1/p) tr (Ĉ + zI)⁻¹` from `U`.
pub fn predicted_stieltjes(model: &PopulationModel, u_diag: &DiagonalWeights, z: Complex64) -> Result<Complex64> {
    Predictor::new(model.family(FamilyKind::Plain), u_diag.as_slice())?.normalized_trace(z)
}

#[derive(Debug, Clone, Serialize)]
pub struct StieltjesSample {
    pub x: f64,
    pub eps: f64,
    /// `m(x + iε)` of the spectral measure.
    pub m: (f64, f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct DensityResult {
    /// `(x, density)` in grid order.
    pub density: Vec<(f64, f64)>,
    pub stieltjes: Vec<StieltjesSample>,
    /// Trapezoid integral of the density over the grid.
    pub mass: f64,
    /// Mass expected on the grid given the null atom smoothed by `ε`.
    pub expected_mass: f64,
    /// Limiting fraction of null eigenvalues.
    pub null_fraction: f64,
    pub eps: f64,
    pub warning: Option<String>,
}

impl DensityResult {
    /// Density with the smoothed null atom removed.
    pub fn continuous_density(&self) -> Vec<(f64, f64)> {
        let a = self.null_fraction;
        let e = self.eps;
        self.density
            .iter()
            .map(|&(x, d)| (x, (d - a * e / (std::f64::consts::PI * (x * x + e * e))).max(0.0)))
            .collect()
    }
}

fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[1].1 + w[0].1))
        .sum()
}

/// `(1/π) Im m(x + iε)` on a grid, sweeping from the right end inward.
pub fn predicted_density(
    model: &PopulationModel,
    u_diag: &DiagonalWeights,
    grid: &[f64],
    eps: f64,
) -> Result<DensityResult> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::domain("eps must be positive"));
    }
    if grid.is_empty() || grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("grid must be nonempty and finite"));
    }
    let mut predictor = Predictor::new(model.family(FamilyKind::Plain), u_diag.as_slice())?;
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]));
    let mut values = vec![Complex64::new(0.0, 0.0); grid.len()];
    for &k in &order {
        let w = Complex64::new(grid[k], eps);
        values[k] = predictor.normalized_trace(-w)?;
    }
    let density: Vec<(f64, f64)> = grid
        .iter()
        .zip(&values)
        .map(|(&x, m)| (x, (m.im / std::f64::consts::PI).max(0.0)))
        .collect();
    let stieltjes = grid
        .iter()
        .zip(&values)
        .map(|(&x, m)| StieltjesSample { x, eps, m: (m.re, m.im) })
        .collect();
    let mut sorted = density.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mass = trapezoid(&sorted);
    let null_fraction = model.null_fraction();
    let (lo, hi) = (sorted[0].0, sorted[sorted.len() - 1].0);
    let atom_on_grid = ((hi / eps).atan() - (lo / eps).atan()) / std::f64::consts::PI;
    let expected_mass = 1.0 - null_fraction + null_fraction * atom_on_grid;
    let warning = if grid.len() > 1 && (mass - expected_mass).abs() > 0.1 {
        Some(format!(
            "density integrates to {mass:.4} on the grid, expected {expected_mass:.4}; widen or refine the grid"
        ))
    } else {
        None
    };
    Ok(DensityResult {
        density,
        stieltjes,
        mass,
        expected_mass,
        null_fraction,
        eps,
        warning,
    })
}

/// Normalized CDF of a density sampled on an ascending grid.
pub fn density_cdf(density: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts = density.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut cdf = Vec::with_capacity(pts.len());
    let mut acc = 0.0;
    cdf.push((pts[0].0, 0.0));
    for w in pts.windows(2) {
        acc += 0.5 * (w[1].0 - w[0].0) * (w[1].1 + w[0].1);
        cdf.push((w[1].0, acc));
    }
    if acc > 0.0 {
        for c in &mut cdf {
            c.1 /= acc;
        }
    }
    cdf
}

fn interpolate(cdf: &[(f64, f64)], x: f64) -> f64 {
    if x <= cdf[0].0 {
        return 0.0;
    }
    if x >= cdf[cdf.len() - 1].0 {
        return 1.0;
    }
    let k = cdf.partition_point(|p| p.0 <= x);
    let (a, b) = (cdf[k - 1], cdf[k]);
    a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)
}

/// Kolmogorov–Smirnov distance between a sample and a tabulated CDF.
pub fn ks_distance(sample: &[f64], cdf: &[(f64, f64)]) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = interpolate(cdf, x);
            (f - i as f64 / k).abs().max((f - (i + 1) as f64 / k).abs())
        })
        .fold(0.0, f64::max)
}

/// Circle in the spectral variable `w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContourSpec {
    pub center: f64,
    pub radius: f64,
    pub nodes: usize,
}

impl ContourSpec {
    pub fn new(center: f64, radius: f64) -> Self {
        Self {
            center,
            radius,
            nodes: 256,
        }
    }

    /// Node angles `2π(k + 1/2)/N`; the half offset keeps nodes off the real axis.
    pub fn angles(&self) -> Vec<f64> {
        (0..self.nodes)
            .map(|k| 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / self.nodes as f64)
            .collect()
    }
}

/// Finds an isolated top eigenvalue: its gap to the next must exceed five
/// times the median spacing, and the predicted bulk (if given) must end
/// below the contour.
pub fn detect_spike(eigenvalues: &[f64], density: Option<&[(f64, f64)]>) -> Result<ContourSpec> {
    let mut e = eigenvalues.to_vec();
    e.sort_by(f64::total_cmp);
    if e.len() < 3 {
        return Err(Error::SpikeAbsent);
    }
    let mut spacings: Vec<f64> = e.windows(2).map(|w| w[1] - w[0]).collect();
    let k = e.len();
    let gap = e[k - 1] - e[k - 2];
    spacings.sort_by(f64::total_cmp);
    let median = spacings[spacings.len() / 2];
    if !(gap > 5.0 * median) {
        return Err(Error::SpikeAbsent);
    }
    let spec = ContourSpec::new(e[k - 1], 0.5 * gap);
    if let Some(d) = density {
        let top = d.iter().map(|p| p.1).fold(0.0, f64::max);
        let edge = d
            .iter()
            .filter(|p| p.1 >= 1e-2 * top)
            .map(|p| p.0)
            .fold(f64::NEG_INFINITY, f64::max);
        if edge >= spec.center - spec.radius {
            return Err(Error::SpikeAbsent);
        }
    }
    Ok(spec)
}

#[derive(Debug, Clone, Serialize)]
pub struct AlignmentResult {
    /// Real part of `-(1/2πi) ∮ mᵀ Q̃_{-w} m dw` (counter-clockwise).
    pub value: f64,
    /// Imaginary part of the quadrature, a quality metric.
    pub imag_residue: f64,
    pub contour: ContourSpec,
}

/// Predicted `(v_maxᵀ m)²` from the contour integral of `mᵀ Q̃_{-w} m`.
///
/// `Q̃` is built on the data second moments `E[x_i x_iᵀ]`, which carry the
/// signal, with deterministic weights `U_i / τ_i`.
pub fn predicted_alignment(
    model: &PopulationModel,
    u_diag: &DiagonalWeights,
    m: &DVector<f64>,
    contour: &ContourSpec,
) -> Result<AlignmentResult> {
    check_len(model.p(), m.len())?;
    check_len(model.n(), u_diag.len())?;
    if !(contour.radius > 0.0 && contour.nodes >= 4) {
        return Err(Error::domain("contour needs a positive radius and at least 4 nodes"));
    }
    if m.norm() == 0.0 {
        return Ok(AlignmentResult {
            value: 0.0,
            imag_residue: 0.0,
            contour: *contour,
        });
    }
    let weights: Vec<f64> = u_diag.iter().zip(model.tau()).map(|(u, t)| u / t).collect();
    let mut predictor = Predictor::new(model.family(FamilyKind::Data), &weights)?;
    let probe = predictor.family().prepare_probe(m);
    let (c, r, n) = (contour.center, contour.radius, contour.nodes);

    // Walk down from far above the top node so warm starts stay on the
    // physical branch.
    let mut height = r;
    let far = 10.0 * (c.abs() + r).max(1.0);
    let mut ladder = Vec::new();
    while height < far {
        ladder.push(height);
        height *= 2.0;
    }
    for &h in ladder.iter().rev() {
        predictor.lambda(-Complex64::new(c, h))?;
    }

    let angles = contour.angles();
    let start = n / 4;
    let mut sum = Complex64::new(0.0, 0.0);
    // Upper half first, then restart from above for the lower half.
    let upper: Vec<usize> = (0..n).map(|j| (start + n - j) % n).take_while(|&k| angles[k].sin() > 0.0).collect();
    let upper2: Vec<usize> = (1..n).map(|j| (start + j) % n).take_while(|&k| angles[k].sin() > 0.0).collect();
    let mut visited = vec![false; n];
    for seq in [&upper, &upper2] {
        for &h in ladder.iter().rev() {
            predictor.lambda(-Complex64::new(c, h))?;
        }
        for &k in seq.iter() {
            sum += node_term(&mut predictor, &probe, c, r, angles[k])?;
            visited[k] = true;
        }
    }
    let lower_start = 3 * n / 4;
    let lower: Vec<usize> = (0..n).map(|j| (lower_start + n - j) % n).take_while(|&k| angles[k].sin() < 0.0).collect();
    let lower2: Vec<usize> = (1..n).map(|j| (lower_start + j) % n).take_while(|&k| angles[k].sin() < 0.0).collect();
    for seq in [&lower, &lower2] {
        for &h in ladder.iter().rev() {
            predictor.lambda(-Complex64::new(c, -h))?;
        }
        for &k in seq.iter() {
            sum += node_term(&mut predictor, &probe, c, r, angles[k])?;
            visited[k] = true;
        }
    }
    if visited.iter().any(|v| !v) {
        return Err(Error::numerical("contour nodes were skipped"));
    }
    let integral = -sum * (r / n as f64);
    if integral.im.abs() > 1e-3 {
        return Err(Error::ContourQuality {
            residue: integral.im.abs(),
        });
    }
    Ok(AlignmentResult {
        value: integral.re,
        imag_residue: integral.im.abs(),
        contour: *contour,
    })
}

fn node_term(predictor: &mut Predictor, probe: &Probe, c: f64, r: f64, theta: f64) -> Result<Complex64> {
    let e = Complex64::from_polar(1.0, theta);
    let w = Complex64::new(c, 0.0) + e * r;
    Ok(predictor.quadratic_form(-w, probe)? * e)
}
