use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use super::{default_grid, scan_stability, GRID_REL_TOL};
use crate::error::{Error, Result};

type ScalarMap = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A weight map `u` with declared bounds `u∞ = sup u` and `u×∞ = sup t u(t)`.
///
/// Declared bounds are cross-checked on the admissibility grid and are the
/// values used in contraction-rate bounds.
#[derive(Clone)]
pub struct WeightFunction {
    name: String,
    f: ScalarMap,
    u_sup: f64,
    u_times_sup: f64,
    grid: Arc<Vec<f64>>,
}

impl fmt::Debug for WeightFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WeightFunction")
            .field("name", &self.name)
            .field("u_sup", &self.u_sup)
            .field("u_times_sup", &self.u_times_sup)
            .finish()
    }
}

impl WeightFunction {
    pub fn custom(
        name: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        u_sup: f64,
        u_times_sup: f64,
    ) -> Self {
        Self {
            name: name.into(),
            f: Arc::new(f),
            u_sup,
            u_times_sup,
            grid: Arc::new(default_grid()),
        }
    }

    /// `t ↦ min(t, 1/(1 + a t))`.
    pub fn min_lin_inv(a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::domain(format!("min_lin_inv needs a > 0, got {a}")));
        }
        // The two branches cross where t (1 + a t) = 1.
        let crossing = ((1.0 + 4.0 * a).sqrt() - 1.0) / (2.0 * a);
        Ok(Self::custom(
            format!("min_lin_inv({a})"),
            move |t| t.min(1.0 / (1.0 + a * t)),
            crossing,
            1.0 / a,
        ))
    }

    /// `t ↦ max(√t, 1/t)`. Stable but unbounded.
    pub fn tent_max() -> Self {
        Self::custom("tent_max", |t: f64| t.sqrt().max(1.0 / t), f64::INFINITY, f64::INFINITY)
    }

    /// `t ↦ 1/√t`. Stable, unbounded, and `t u(t)` is unbounded.
    pub fn inv_sqrt() -> Self {
        Self::custom("inv_sqrt", |t: f64| 1.0 / t.sqrt(), f64::INFINITY, f64::INFINITY)
    }

    pub fn constant(c: f64) -> Self {
        Self::custom(format!("constant({c})"), move |_| c, c, f64::INFINITY)
    }

    pub fn zero() -> Self {
        Self::custom("zero", |_| 0.0, 0.0, 0.0)
    }

    /// `t ↦ c·base(t)`; bounds scale with `c`.
    pub fn scaled(c: f64, base: &WeightFunction) -> Self {
        let f = base.f.clone();
        Self {
            name: format!("{c}*{}", base.name),
            f: Arc::new(move |t| c * f(t)),
            u_sup: c * base.u_sup,
            u_times_sup: c * base.u_times_sup,
            grid: base.grid.clone(),
        }
    }

    /// Infimum over `k ≥ 1` of the tents `max(3/2 - 2^(k-1) t, 2^(k-1) t)`.
    ///
    /// Stable on `(0, ∞)` with no limit at 0. Truncated at `k = 80`, which
    /// is exact for `t ≥ 2^-78`.
    pub fn tents_infimum() -> Self {
        Self::custom(
            "tents_infimum",
            |t: f64| {
                (1..=80)
                    .map(|k| {
                        let s = (2f64).powi(k - 1) * t;
                        (1.5 - s).max(s)
                    })
                    .fold(f64::INFINITY, f64::min)
            },
            f64::INFINITY,
            f64::INFINITY,
        )
    }

    /// Resolves a registry name such as `min_lin_inv(5)`, `tent_max`,
    /// `inv_sqrt`, `constant(2)` or `zero`.
    pub fn from_name(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let (head, arg) = match spec.find('(') {
            Some(open) => {
                if !spec.ends_with(')') {
                    return Err(Error::Config(format!("malformed weight function `{spec}`")));
                }
                let inner = spec[open + 1..spec.len() - 1].trim();
                let value: f64 = inner
                    .parse()
                    .map_err(|_| Error::Config(format!("bad parameter in `{spec}`")))?;
                (spec[..open].trim(), Some(value))
            }
            None => (spec, None),
        };
        let need = |arg: Option<f64>| {
            arg.ok_or_else(|| Error::Config(format!("`{head}` needs a parameter")))
        };
        match (head, arg) {
            ("min_lin_inv", a) => Self::min_lin_inv(need(a)?).map_err(|e| Error::Config(e.to_string())),
            ("constant", c) => {
                let c = need(c)?;
                if !(c > 0.0 && c.is_finite()) {
                    return Err(Error::Config(format!("constant needs c > 0, got {c}")));
                }
                Ok(Self::constant(c))
            }
            ("tent_max", None) => Ok(Self::tent_max()),
            ("inv_sqrt", None) => Ok(Self::inv_sqrt()),
            ("zero", None) => Ok(Self::zero()),
            ("tents_infimum", None) => Ok(Self::tents_infimum()),
            _ => Err(Error::Config(format!("unknown weight function `{spec}`"))),
        }
    }

    pub fn with_grid(mut self, grid: Vec<f64>) -> Self {
        self.grid = Arc::new(grid);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn u_sup(&self) -> f64 {
        self.u_sup
    }

    pub fn u_times_sup(&self) -> f64 {
        self.u_times_sup
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Evaluates `u(t)`; only meaningful for `t > 0`.
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        (self.f)(t)
    }

    pub fn try_eval(&self, t: f64) -> Result<f64> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::domain(format!("weight evaluated at {t}")));
        }
        Ok(self.eval(t))
    }

    /// Checks boundedness and stability, as required by the estimator.
    pub fn require_admissible(&self, prediction_mode: bool) -> Result<AdmissibilityReport> {
        let report = verify_weight_admissibility(self, prediction_mode);
        if report.is_admissible(prediction_mode) {
            Ok(report)
        } else {
            Err(Error::Domain(format!(
                "weight function {} is not admissible: {report}",
                self.name
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    pub name: String,
    pub bounded: bool,
    pub stable: bool,
    pub u_times_below_one: bool,
    pub prediction_mode: bool,
    pub grid_max_u: f64,
    pub grid_max_t_u: f64,
    pub first_violation: Option<(f64, f64)>,
}

impl AdmissibilityReport {
    pub fn is_admissible(&self, prediction_mode: bool) -> bool {
        self.bounded && self.stable && (!prediction_mode || self.u_times_below_one)
    }
}

impl fmt::Display for AdmissibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "bounded={} stable={} u_times_below_one={}",
            self.bounded, self.stable, self.u_times_below_one
        )
    }
}

/// Grid check of the boundedness, stability and `t u(t) < 1` assumptions.
pub fn verify_weight_admissibility(u: &WeightFunction, prediction_mode: bool) -> AdmissibilityReport {
    let grid = u.grid();
    let mut max_u = 0.0f64;
    let mut max_tu = 0.0f64;
    let mut finite_nonneg = true;
    for &t in grid {
        let v = u.eval(t);
        if !(v.is_finite() && v >= 0.0) {
            finite_nonneg = false;
            break;
        }
        max_u = max_u.max(v);
        max_tu = max_tu.max(t * v);
    }
    let slack = 1.0 + GRID_REL_TOL;
    let bounded = finite_nonneg && u.u_sup.is_finite() && max_u <= u.u_sup * slack;
    let (stable, first_violation) = match scan_stability(|t| u.eval(t), grid, true) {
        Ok(r) => (r.is_stable, r.first_violation),
        Err(_) => (false, None),
    };
    let u_times_below_one =
        finite_nonneg && u.u_times_sup < 1.0 && max_tu <= u.u_times_sup * slack;
    AdmissibilityReport {
        name: u.name.clone(),
        bounded,
        stable,
        u_times_below_one,
        prediction_mode,
        grid_max_u: max_u,
        grid_max_t_u: max_tu,
        first_violation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_lin_inv_5_is_admissible() {
        let u = WeightFunction::min_lin_inv(5.0).unwrap();
        let r = verify_weight_admissibility(&u, true);
        assert!(r.bounded && r.stable && r.u_times_below_one, "{r}");
        assert!((u.u_sup() - (21f64.sqrt() - 1.0) / 10.0).abs() < 1e-15);
        assert_eq!(u.u_times_sup(), 0.2);
    }

    #[test]
    fn inv_sqrt_fails() {
        let r = verify_weight_admissibility(&WeightFunction::inv_sqrt(), true);
        assert!(!r.bounded);
        assert!(!r.u_times_below_one);
        assert!(r.stable);
    }

    #[test]
    fn constant_fails_u_times() {
        let r = verify_weight_admissibility(&WeightFunction::constant(0.5), true);
        assert!(r.bounded && r.stable);
        assert!(!r.u_times_below_one);
    }

    #[test]
    fn understated_bound_is_caught() {
        let u = WeightFunction::custom("liar", |t: f64| t.min(1.0 / (1.0 + 5.0 * t)), 0.1, 0.2);
        assert!(!verify_weight_admissibility(&u, false).bounded);
    }

    #[test]
    fn registry() {
        assert_eq!(WeightFunction::from_name("min_lin_inv(5)").unwrap().eval(1.0), 1.0 / 6.0);
        assert_eq!(WeightFunction::from_name("tent_max").unwrap().eval(4.0), 2.0);
        assert_eq!(WeightFunction::from_name(" inv_sqrt ").unwrap().eval(4.0), 0.5);
        assert!(WeightFunction::from_name("min_lin_inv").is_err());
        assert!(WeightFunction::from_name("min_lin_inv(-1)").is_err());
        assert!(WeightFunction::from_name("huber(2)").is_err());
        assert!(WeightFunction::from_name("tent_max(2)").is_err());
    }

    #[test]
    fn tents_has_two_limits_at_zero() {
        let f = WeightFunction::tents_infimum();
        for n in 20..30 {
            let a = f.eval(2f64.powi(-n));
            let b = f.eval(3.0 * 2f64.powi(-n));
            assert!((a - 1.0).abs() < 1e-12, "{a}");
            assert!((b - 0.75).abs() < 1e-12, "{b}");
        }
    }
}
