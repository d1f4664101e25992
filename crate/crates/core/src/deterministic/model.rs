use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::family::{MomentFamily, SharedBase};
use crate::error::{check_len, Error, Result};
use crate::linalg::symmetrized;

/// Second moments `C_i = E[z_i z_iᵀ]` and means `μ_i = E[z_i]`.
#[derive(Debug, Clone)]
pub enum SecondMoments {
    Shared { c: DMatrix<f64>, mean: DVector<f64> },
    PerSample { c: Vec<DMatrix<f64>>, means: Vec<DVector<f64>> },
}

/// Which moment family to build from a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FamilyKind {
    /// `C_i`.
    Plain,
    /// `τ̄_i C_i`.
    TauBar,
    /// `C̄_i = τ̄_i Σ_i + m̄_i m̄_iᵀ` with `m̄_i = √τ̄_i μ_i + m/√τ̲_i`.
    Barred,
    /// `E[x_i x_iᵀ] = τ_i C_i + √τ_i (μ_i mᵀ + m μ_iᵀ) + m mᵀ`.
    Data,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TauSplit {
    /// `max(τ_i, 1)`.
    pub tau_under: Vec<f64>,
    /// `min(τ_i, 1)`.
    pub tau_bar: Vec<f64>,
}

impl TauSplit {
    pub fn new(tau: &[f64]) -> Result<Self> {
        validate_tau(tau)?;
        Ok(Self {
            tau_under: tau.iter().map(|t| t.max(1.0)).collect(),
            tau_bar: tau.iter().map(|t| t.min(1.0)).collect(),
        })
    }

    pub fn trivial(n: usize) -> Self {
        Self {
            tau_under: vec![1.0; n],
            tau_bar: vec![1.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.tau_under.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau_under.is_empty()
    }
}

fn validate_tau(tau: &[f64]) -> Result<()> {
    if tau.is_empty() {
        return Err(Error::domain("tau must have at least one entry"));
    }
    if let Some(t) = tau.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(Error::domain(format!("tau entries must be positive and finite, got {t}")));
    }
    Ok(())
}

fn check_psd(c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let c = symmetrized(c)?;
    let eig = c.clone().symmetric_eigenvalues();
    let scale = eig.amax().max(f64::MIN_POSITIVE);
    if eig.iter().any(|v| *v < -1e-10 * scale) {
        return Err(Error::domain("second-moment matrix is not positive semi-definite"));
    }
    Ok(c)
}

/// Population description used by every deterministic equivalent.
#[derive(Debug, Clone)]
pub struct PopulationModel {
    moments: SecondMoments,
    tau: Vec<f64>,
    split: TauSplit,
    signal: DVector<f64>,
    gamma: f64,
    base: Arc<OnceLock<SharedBase>>,
}

impl PopulationModel {
    /// All samples share `C` and `μ` (`μ = 0` when omitted).
    pub fn shared(
        c: DMatrix<f64>,
        mean: Option<DVector<f64>>,
        tau: Vec<f64>,
        signal: DVector<f64>,
        gamma: f64,
    ) -> Result<Self> {
        let p = c.nrows();
        let c = check_psd(&c)?;
        let mean = mean.unwrap_or_else(|| DVector::zeros(p));
        check_len(p, mean.len())?;
        Self::finish(SecondMoments::Shared { c, mean }, tau, signal, gamma)
    }

    pub fn per_sample(
        c: Vec<DMatrix<f64>>,
        means: Option<Vec<DVector<f64>>>,
        tau: Vec<f64>,
        signal: DVector<f64>,
        gamma: f64,
    ) -> Result<Self> {
        let p = c.first().ok_or_else(|| Error::domain("no second moments"))?.nrows();
        check_len(c.len(), tau.len())?;
        let c = c
            .iter()
            .map(|ci| {
                check_len(p, ci.nrows())?;
                check_psd(ci)
            })
            .collect::<Result<Vec<_>>>()?;
        let means = means.unwrap_or_else(|| vec![DVector::zeros(p); c.len()]);
        check_len(c.len(), means.len())?;
        for m in &means {
            check_len(p, m.len())?;
        }
        Self::finish(SecondMoments::PerSample { c, means }, tau, signal, gamma)
    }

    fn finish(moments: SecondMoments, tau: Vec<f64>, signal: DVector<f64>, gamma: f64) -> Result<Self> {
        let split = TauSplit::new(&tau)?;
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::domain(format!("gamma must be positive, got {gamma}")));
        }
        let model = Self {
            moments,
            tau,
            split,
            signal,
            gamma,
            base: Arc::new(OnceLock::new()),
        };
        check_len(model.p(), model.signal.len())?;
        let n = model.n() as f64;
        for i in 0..model.n() {
            if !(model.trace_c(i) / n > 0.0) {
                return Err(Error::domain(format!("(1/n) tr C_{i} must be positive")));
            }
        }
        Ok(model)
    }

    pub fn p(&self) -> usize {
        match &self.moments {
            SecondMoments::Shared { c, .. } => c.nrows(),
            SecondMoments::PerSample { c, .. } => c[0].nrows(),
        }
    }

    pub fn n(&self) -> usize {
        self.tau.len()
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn tau_split(&self) -> &TauSplit {
        &self.split
    }

    pub fn signal(&self) -> &DVector<f64> {
        &self.signal
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn moments(&self) -> &SecondMoments {
        &self.moments
    }

    /// Same moments with different scalings, signal or regularizer.
    pub fn with_parts(&self, tau: Vec<f64>, signal: DVector<f64>, gamma: f64) -> Result<Self> {
        if let SecondMoments::PerSample { c, .. } = &self.moments {
            check_len(c.len(), tau.len())?;
        }
        let mut m = Self::finish(self.moments.clone(), tau, signal, gamma)?;
        m.base = self.base.clone();
        Ok(m)
    }

    fn trace_c(&self, i: usize) -> f64 {
        match &self.moments {
            SecondMoments::Shared { c, .. } => c.trace(),
            SecondMoments::PerSample { c, .. } => c[i].trace(),
        }
    }

    /// Number of null eigenvalues expected in the limiting spectrum, as a
    /// fraction of `p`.
    pub fn null_fraction(&self) -> f64 {
        let p = self.p();
        let rank = match &self.moments {
            SecondMoments::Shared { .. } => {
                let values = &self.shared_base().values;
                let top = values.iter().cloned().fold(0.0, f64::max);
                values.iter().filter(|v| **v > 1e-10 * top).count()
            }
            SecondMoments::PerSample { c, .. } => {
                let mut sum = DMatrix::zeros(p, p);
                for ci in c {
                    sum += ci;
                }
                let e = sum.symmetric_eigenvalues();
                let top = e.amax();
                e.iter().filter(|v| **v > 1e-10 * top).count()
            }
        };
        (1.0 - rank.min(self.n()) as f64 / p as f64).max(0.0)
    }

    pub(crate) fn shared_base(&self) -> &SharedBase {
        match &self.moments {
            SecondMoments::Shared { c, .. } => self.base.get_or_init(|| SharedBase::new(c)),
            SecondMoments::PerSample { .. } => panic!("shared base requested for per-sample moments"),
        }
    }

    pub fn family(&self, kind: FamilyKind) -> MomentFamily {
        let n = self.n();
        let s = &self.split;
        let m = &self.signal;
        match &self.moments {
            SecondMoments::Shared { mean, .. } => {
                let base = self.shared_base().clone();
                let (alpha, a_cross, b_signal): (Vec<f64>, Vec<f64>, Vec<f64>) = match kind {
                    FamilyKind::Plain => (vec![1.0; n], vec![0.0; n], vec![0.0; n]),
                    FamilyKind::TauBar => (s.tau_bar.clone(), vec![0.0; n], vec![0.0; n]),
                    FamilyKind::Barred => (
                        s.tau_bar.clone(),
                        (0..n).map(|i| (s.tau_bar[i] / s.tau_under[i]).sqrt()).collect(),
                        s.tau_under.iter().map(|t| 1.0 / t).collect(),
                    ),
                    FamilyKind::Data => (
                        self.tau.clone(),
                        self.tau.iter().map(|t| t.sqrt()).collect(),
                        vec![1.0; n],
                    ),
                };
                MomentFamily::shared(base, alpha, mean, m, a_cross, b_signal)
            }
            SecondMoments::PerSample { c, means } => {
                let members = (0..n)
                    .map(|i| {
                        let (alpha, cross, b) = match kind {
                            FamilyKind::Plain => (1.0, 0.0, 0.0),
                            FamilyKind::TauBar => (s.tau_bar[i], 0.0, 0.0),
                            FamilyKind::Barred => (
                                s.tau_bar[i],
                                (s.tau_bar[i] / s.tau_under[i]).sqrt(),
                                1.0 / s.tau_under[i],
                            ),
                            FamilyKind::Data => (self.tau[i], self.tau[i].sqrt(), 1.0),
                        };
                        let mu = &means[i];
                        let mut ci = &c[i] * alpha;
                        if cross != 0.0 {
                            ci += (mu * m.transpose() + m * mu.transpose()) * cross;
                        }
                        if b != 0.0 {
                            ci += m * m.transpose() * b;
                        }
                        ci
                    })
                    .collect();
                MomentFamily::dense(members)
            }
        }
    }
}
