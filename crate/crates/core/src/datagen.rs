//! Synthetic data: concentrated `Z`, heavy-tailed `τ`, planted signal `m`,
//! and `X = Z √τ + m 1ᵀ`.
//!
//! Every random quantity is drawn from a ChaCha8 substream keyed by
//! `(seed, domain, index)`, so each column can be regenerated on its own.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Pareto, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::deterministic::PopulationModel;
use crate::error::{check_len, Error, Result};
use crate::estimator::DataMatrix;

const DOMAIN_Z: u64 = 1;
const DOMAIN_TAU: u64 = 2;
const DOMAIN_MIXING: u64 = 3;
const DOMAIN_MOMENTS: u64 = 4;
const DOMAIN_TRIALS: u64 = 5;

/// Columns per block in moment estimation.
const MOMENT_BLOCK: usize = 256;

/// Generator for the substream `(seed, domain, index)`.
pub fn substream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Seed of trial `index` in a Monte Carlo study rooted at `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    substream(seed, DOMAIN_TRIALS, index).next_u64()
}

/// Entrywise 1-Lipschitz map used by [`GeneratorKind::CustomLipschitz`].
#[derive(Clone)]
pub struct LipschitzMap {
    pub name: String,
    pub f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl LipschitzMap {
    pub fn new(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    /// `tanh`, `sin`, `clip` (to [-1, 1]) or `identity`.
    pub fn from_name(name: &str) -> Result<Self> {
        let f: fn(f64) -> f64 = match name {
            "tanh" => f64::tanh,
            "sin" => f64::sin,
            "clip" => |t: f64| t.clamp(-1.0, 1.0),
            "identity" => |t| t,
            other => return Err(Error::Config(format!("unknown lipschitz map '{other}'"))),
        };
        Ok(Self::new(name, f))
    }
}

impl fmt::Debug for LipschitzMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LipschitzMap({})", self.name)
    }
}

#[derive(Debug, Clone)]
pub enum GeneratorKind {
    Gaussian,
    /// `z = sin(A g)`.
    SinCorrelated,
    /// `z = f(A g)` for an entrywise 1-Lipschitz `f`; identity mixing if absent.
    CustomLipschitz(LipschitzMap),
}

#[derive(Debug, Clone)]
pub enum Mixing {
    Identity,
    /// Caller-supplied `A`, used as is.
    Matrix(DMatrix<f64>),
    /// Standard normal entries, rescaled to spectral norm 1 when `normalize`.
    Random { normalize: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum TauLaw {
    Constant { c: f64 },
    /// `|t|` with `t ~ Student(ν)`.
    StudentAbs { nu: f64 },
    /// Pareto with scale 1 and shape `α`.
    Pareto { alpha: f64 },
}

impl TauLaw {
    fn validate(&self) -> Result<()> {
        let (name, v) = match *self {
            TauLaw::Constant { c } => ("c", c),
            TauLaw::StudentAbs { nu } => ("nu", nu),
            TauLaw::Pareto { alpha } => ("alpha", alpha),
        };
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Config(format!("tau law parameter {name} must be positive, got {v}")));
        }
        Ok(())
    }

    /// Parses `constant(c)`, `student_abs(nu)` or `pareto(alpha)`.
    pub fn from_name(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse tau law '{s}'"));
        let s = s.trim();
        let open = s.find('(').ok_or_else(bad)?;
        let arg: f64 = s[open + 1..]
            .strip_suffix(')')
            .ok_or_else(bad)?
            .trim()
            .parse()
            .map_err(|_| bad())?;
        let law = match &s[..open] {
            "constant" => TauLaw::Constant { c: arg },
            "student_abs" => TauLaw::StudentAbs { nu: arg },
            "pareto" => TauLaw::Pareto { alpha: arg },
            _ => return Err(bad()),
        };
        law.validate()?;
        Ok(law)
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            TauLaw::Constant { c } => c,
            TauLaw::StudentAbs { nu } => {
                let d = StudentT::new(nu).expect("validated");
                loop {
                    let t: f64 = d.sample(rng);
                    if t != 0.0 && t.is_finite() {
                        return t.abs();
                    }
                }
            }
            TauLaw::Pareto { alpha } => Pareto::new(1.0, alpha).expect("validated").sample(rng),
        }
    }
}

impl fmt::Display for TauLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TauLaw::Constant { c } => write!(f, "constant({c})"),
            TauLaw::StudentAbs { nu } => write!(f, "student_abs({nu})"),
            TauLaw::Pareto { alpha } => write!(f, "pareto({alpha})"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub p: usize,
    pub n: usize,
    pub mixing: Option<Mixing>,
    pub tau_law: TauLaw,
    /// `m = signal_scale (1, …, 1)/√p`.
    pub signal_scale: f64,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn gaussian(p: usize, n: usize, seed: u64) -> Self {
        Self {
            kind: GeneratorKind::Gaussian,
            p,
            n,
            mixing: None,
            tau_law: TauLaw::Constant { c: 1.0 },
            signal_scale: 0.0,
            seed,
        }
    }

    /// Sine of normalized random mixing, folded Student(1) scalings, `‖m‖ = 1`.
    pub fn sin_correlated(p: usize, n: usize, seed: u64) -> Self {
        Self {
            kind: GeneratorKind::SinCorrelated,
            p,
            n,
            mixing: Some(Mixing::Random { normalize: true }),
            tau_law: TauLaw::StudentAbs { nu: 1.0 },
            signal_scale: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.n == 0 {
            return Err(Error::Config("p and n must be at least 1".into()));
        }
        self.tau_law.validate()?;
        if !self.signal_scale.is_finite() {
            return Err(Error::Config("signal_scale must be finite".into()));
        }
        if matches!(self.kind, GeneratorKind::SinCorrelated) && self.mixing.is_none() {
            return Err(Error::Config("sin_correlated needs a mixing matrix".into()));
        }
        if let Some(Mixing::Matrix(a)) = &self.mixing {
            if a.nrows() != self.p || a.ncols() != self.p {
                return Err(Error::Config(format!(
                    "mixing matrix is {}x{}, expected {p}x{p}",
                    a.nrows(),
                    a.ncols(),
                    p = self.p
                )));
            }
        }
        Ok(())
    }

    pub fn signal(&self) -> DVector<f64> {
        DVector::from_element(self.p, self.signal_scale / (self.p as f64).sqrt())
    }

    /// The mixing matrix `A`, or `None` for identity mixing.
    pub fn mixing_matrix(&self) -> Result<Option<DMatrix<f64>>> {
        self.validate()?;
        if matches!(self.kind, GeneratorKind::Gaussian) {
            return Ok(None);
        }
        Ok(match &self.mixing {
            None | Some(Mixing::Identity) => None,
            Some(Mixing::Matrix(a)) => Some(a.clone()),
            Some(Mixing::Random { normalize }) => {
                let p = self.p;
                let mut rng = substream(self.seed, DOMAIN_MIXING, 0);
                let mut a = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
                if *normalize {
                    let top = (&a * a.transpose()).symmetric_eigenvalues().max().sqrt();
                    if top > 0.0 {
                        a /= top;
                    }
                }
                Some(a)
            }
        })
    }
}

/// Draws `Z` column by column.
pub struct ColumnSampler<'a> {
    spec: &'a GeneratorSpec,
    mixing: Option<DMatrix<f64>>,
}

impl<'a> ColumnSampler<'a> {
    pub fn new(spec: &'a GeneratorSpec) -> Result<Self> {
        Ok(Self {
            mixing: spec.mixing_matrix()?,
            spec,
        })
    }

    fn draw(&self, domain: u64, index: u64) -> DVector<f64> {
        let p = self.spec.p;
        let mut rng = substream(self.spec.seed, domain, index);
        let g = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let w = match &self.mixing {
            // Explicit row-by-row dot products fix the summation order.
            Some(a) => DVector::from_fn(p, |r, _| {
                let mut s = 0.0;
                for k in 0..p {
                    s += a[(r, k)] * g[k];
                }
                s
            }),
            None => g,
        };
        match &self.spec.kind {
            GeneratorKind::Gaussian => w,
            GeneratorKind::SinCorrelated => w.map(f64::sin),
            GeneratorKind::CustomLipschitz(m) => w.map(|t| (m.f)(t)),
        }
    }

    /// Column `i` of `Z`.
    pub fn column(&self, i: usize) -> DVector<f64> {
        self.draw(DOMAIN_Z, i as u64)
    }
}

pub fn sample_z(spec: &GeneratorSpec) -> Result<DMatrix<f64>> {
    let sampler = ColumnSampler::new(spec)?;
    let mut z = DMatrix::zeros(spec.p, spec.n);
    for i in 0..spec.n {
        z.set_column(i, &sampler.column(i));
    }
    Ok(z)
}

pub fn sample_tau(spec: &GeneratorSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    Ok((0..spec.n)
        .map(|i| spec.tau_law.draw(&mut substream(spec.seed, DOMAIN_TAU, i as u64)))
        .collect())
}

/// `X = Z √τ + m 1ᵀ`.
pub fn assemble_dataset(z: &DMatrix<f64>, tau: &[f64], m: &DVector<f64>) -> Result<DataMatrix> {
    check_len(z.ncols(), tau.len())?;
    check_len(z.nrows(), m.len())?;
    if tau.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::domain("tau must be positive and finite"));
    }
    let mut x = z.clone();
    for (i, t) in tau.iter().enumerate() {
        let s = t.sqrt();
        for (xv, mv) in x.column_mut(i).iter_mut().zip(m.iter()) {
            *xv = *xv * s + mv;
        }
    }
    DataMatrix::new(x)
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub z: DMatrix<f64>,
    pub tau: Vec<f64>,
    pub signal: DVector<f64>,
    pub x: DataMatrix,
}

pub fn generate(spec: &GeneratorSpec) -> Result<Dataset> {
    let z = sample_z(spec)?;
    let tau = sample_tau(spec)?;
    let signal = spec.signal();
    let x = assemble_dataset(&z, &tau, &signal)?;
    Ok(Dataset { z, tau, signal, x })
}

/// Monte Carlo estimates `(E[z zᵀ], E[z])` from `draws` fresh columns.
///
/// Columns come from a dedicated substream domain, never from the data.
pub fn estimate_population_moments(spec: &GeneratorSpec, draws: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if draws == 0 {
        return Err(Error::Config("draws must be at least 1".into()));
    }
    let sampler = ColumnSampler::new(spec)?;
    let p = spec.p;
    let mut c = DMatrix::zeros(p, p);
    let mut mean = DVector::zeros(p);
    let mut start = 0;
    while start < draws {
        let len = MOMENT_BLOCK.min(draws - start);
        let mut block = DMatrix::zeros(p, len);
        for j in 0..len {
            block.set_column(j, &sampler.draw(DOMAIN_MOMENTS, (start + j) as u64));
        }
        c.gemm(1.0, &block, &block.transpose(), 1.0);
        for j in 0..len {
            mean += block.column(j);
        }
        start += len;
    }
    c /= draws as f64;
    mean /= draws as f64;
    let ct = c.transpose();
    c = (&c + ct) * 0.5;
    Ok((c, mean))
}

/// Closed-form `(E[z zᵀ], E[z])` where available.
///
/// Gaussian: `(I, 0)`. Sine of `w ~ N(0, Σ)` with `Σ = AAᵀ`:
/// `E[sin w_a sin w_b] = exp(-(Σ_aa + Σ_bb)/2) sinh(Σ_ab)` and zero mean.
pub fn exact_moments(spec: &GeneratorSpec) -> Result<Option<(DMatrix<f64>, DVector<f64>)>> {
    let p = spec.p;
    let sigma = match spec.mixing_matrix()? {
        Some(a) => &a * a.transpose(),
        None => DMatrix::identity(p, p),
    };
    Ok(match spec.kind {
        GeneratorKind::Gaussian => Some((DMatrix::identity(p, p), DVector::zeros(p))),
        GeneratorKind::SinCorrelated => {
            let c = DMatrix::from_fn(p, p, |a, b| {
                (-(sigma[(a, a)] + sigma[(b, b)]) / 2.0).exp() * sigma[(a, b)].sinh()
            });
            Some((c, DVector::zeros(p)))
        }
        GeneratorKind::CustomLipschitz(_) => None,
    })
}

/// Shared-moment population model for a generated dataset.
pub fn population_model(
    spec: &GeneratorSpec,
    tau: Vec<f64>,
    gamma: f64,
    moments: Option<(DMatrix<f64>, DVector<f64>)>,
) -> Result<PopulationModel> {
    let (c, mean) = match moments {
        Some(m) => m,
        None => exact_moments(spec)?
            .ok_or_else(|| Error::Config("no closed-form moments for this generator; supply or estimate them".into()))?,
    };
    let mean = (mean.norm() > 0.0).then_some(mean);
    PopulationModel::shared(c, mean, tau, spec.signal(), gamma)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Median of `|C|` for standard Cauchy `C`: solves `(2/π) atan(x) = 1/2`.
    fn cauchy_abs_median() -> f64 {
        let (mut lo, mut hi) = (0.0f64, 10.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if 2.0 / std::f64::consts::PI * mid.atan() < 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    #[test]
    fn gaussian_column_mean() {
        let spec = GeneratorSpec::gaussian(10_000, 2, 3);
        let z = sample_z(&spec).unwrap();
        for i in 0..2 {
            assert!(z.column(i).mean().abs() <= 4.0 / 100.0);
        }
    }

    #[test]
    fn sine_range_and_determinism() {
        let spec = GeneratorSpec::sin_correlated(30, 20, 9);
        let a = sample_z(&spec).unwrap();
        assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
        let b = sample_z(&spec).unwrap();
        assert_eq!(a, b);
        let other = sample_z(&GeneratorSpec { seed: 10, ..spec.clone() }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn single_column_regeneration() {
        let spec = GeneratorSpec::sin_correlated(25, 40, 1);
        let z = sample_z(&spec).unwrap();
        let sampler = ColumnSampler::new(&spec).unwrap();
        for i in [0, 17, 39] {
            assert_eq!(sampler.column(i), z.column(i).into_owned());
        }
        let tau = sample_tau(&spec).unwrap();
        let short = GeneratorSpec { n: 10, ..spec };
        assert_eq!(sample_tau(&short).unwrap(), tau[..10]);
    }

    #[test]
    fn normalized_mixing_has_unit_norm() {
        let spec = GeneratorSpec::sin_correlated(40, 5, 2);
        let a = spec.mixing_matrix().unwrap().unwrap();
        let top = a.singular_values().max();
        assert!((top - 1.0).abs() < 1e-10);
        let raw = GeneratorSpec {
            mixing: Some(Mixing::Random { normalize: false }),
            ..spec
        };
        assert!(raw.mixing_matrix().unwrap().unwrap().singular_values().max() > 5.0);
    }

    #[test]
    fn sine_without_mixing_is_config_error() {
        let spec = GeneratorSpec {
            mixing: None,
            ..GeneratorSpec::sin_correlated(4, 4, 0)
        };
        assert!(matches!(sample_z(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn tau_laws() {
        let spec = GeneratorSpec::gaussian(1, 100, 0);
        assert!(sample_tau(&spec).unwrap().iter().all(|t| *t == 1.0));
        let spec = GeneratorSpec {
            tau_law: TauLaw::StudentAbs { nu: 1.0 },
            n: 100_000,
            ..spec
        };
        let mut tau = sample_tau(&spec).unwrap();
        assert!(tau.iter().all(|t| *t > 0.0));
        tau.sort_by(f64::total_cmp);
        let median = 0.5 * (tau[49_999] + tau[50_000]);
        let oracle = cauchy_abs_median();
        assert!((oracle - 1.0).abs() < 1e-12);
        assert!((median / oracle - 1.0).abs() < 0.1);
        let pareto = GeneratorSpec {
            tau_law: TauLaw::Pareto { alpha: 2.0 },
            n: 1000,
            ..spec
        };
        assert!(sample_tau(&pareto).unwrap().iter().all(|t| *t >= 1.0));
    }

    #[test]
    fn tau_law_parsing() {
        assert_eq!(TauLaw::from_name("student_abs(1)").unwrap(), TauLaw::StudentAbs { nu: 1.0 });
        assert_eq!(TauLaw::from_name("pareto( 2.5 )").unwrap(), TauLaw::Pareto { alpha: 2.5 });
        assert!(TauLaw::from_name("constant(0)").is_err());
        assert!(TauLaw::from_name("cauchy(1)").is_err());
        let law = TauLaw::Constant { c: 2.0 };
        assert_eq!(TauLaw::from_name(&law.to_string()).unwrap(), law);
    }

    #[test]
    fn assembly_identities() {
        let spec = GeneratorSpec::sin_correlated(6, 9, 4);
        let z = sample_z(&spec).unwrap();
        let tau = sample_tau(&spec).unwrap();
        let m = spec.signal();
        assert!((m.norm() - 1.0).abs() < 1e-15);
        let x = assemble_dataset(&z, &tau, &m).unwrap();
        for (i, t) in tau.iter().enumerate() {
            let col = z.column(i) * t.sqrt() + &m;
            assert!((x.matrix().column(i) - col).amax() <= 1e-15);
        }
        let plain = assemble_dataset(&z, &[1.0; 9], &DVector::zeros(6)).unwrap();
        assert_eq!(plain.matrix(), &z);
        let only_m = assemble_dataset(&DMatrix::zeros(6, 9), &tau, &m).unwrap();
        assert!(only_m.matrix().column_iter().all(|c| c == m));
        assert!(assemble_dataset(&z, &tau[..8], &m).is_err());
    }

    #[test]
    fn moment_estimates() {
        let spec = GeneratorSpec::gaussian(5, 1, 8);
        let draws = 4000;
        let (c, mean) = estimate_population_moments(&spec, draws).unwrap();
        let tol = 5.0 / (draws as f64).sqrt();
        assert!((&c - DMatrix::identity(5, 5)).amax() <= tol);
        assert!(mean.amax() <= tol);
        assert_eq!(c, c.transpose());
        assert_eq!(estimate_population_moments(&spec, draws).unwrap().0, c);

        let sine = GeneratorSpec {
            mixing: Some(Mixing::Identity),
            ..GeneratorSpec::sin_correlated(5, 1, 8)
        };
        let (c, _) = estimate_population_moments(&sine, draws).unwrap();
        // E[sin² g] = (1 - E[cos 2g])/2 = (1 - e^{-2})/2 for g ~ N(0, 1).
        let target = (1.0 - (-2.0f64).exp()) / 2.0;
        for a in 0..5 {
            assert!((c[(a, a)] - target).abs() <= tol);
        }
    }

    #[test]
    fn exact_sine_moments_match_monte_carlo() {
        let spec = GeneratorSpec::sin_correlated(6, 1, 5);
        let (exact, mean) = exact_moments(&spec).unwrap().unwrap();
        assert_eq!(mean, DVector::zeros(6));
        let draws = 20_000;
        let (est, _) = estimate_population_moments(&spec, draws).unwrap();
        assert!((&exact - est).amax() <= 5.0 / (draws as f64).sqrt());
    }

    #[test]
    fn custom_map() {
        let spec = GeneratorSpec {
            kind: GeneratorKind::CustomLipschitz(LipschitzMap::from_name("tanh").unwrap()),
            ..GeneratorSpec::gaussian(8, 8, 0)
        };
        let z = sample_z(&spec).unwrap();
        let g = sample_z(&GeneratorSpec::gaussian(8, 8, 0)).unwrap();
        assert_eq!(z, g.map(f64::tanh));
        assert!(exact_moments(&spec).unwrap().is_none());
        assert!(LipschitzMap::from_name("exp").is_err());
    }
}
