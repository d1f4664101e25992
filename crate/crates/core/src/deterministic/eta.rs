//! The link function `η`, the unique solution of `η = 1/(1/x + u(η))`.

use super::model::TauSplit;
use crate::error::{check_len, Error, Result};
use crate::stable_metric::{scan_stability, DiagonalWeights, WeightFunction};

const PICARD_MAX: usize = 10_000;
const RESIDUAL_TOL: f64 = 1e-12;

/// `η` for a fixed weight function, validated once.
#[derive(Debug, Clone)]
pub struct Eta {
    u: WeightFunction,
}

impl Eta {
    /// Requires `u` to be stable on its grid. Boundedness is not needed for
    /// existence and uniqueness, so unbounded stable maps are accepted.
    pub fn new(u: &WeightFunction) -> Result<Self> {
        let report = scan_stability(|t| u.eval(t), u.grid(), true)
            .map_err(|e| Error::Domain(format!("{}: {e}", u.name())))?;
        if !report.is_stable {
            return Err(Error::Domain(format!(
                "{} is not stable (violation at {:?})",
                u.name(),
                report.first_violation
            )));
        }
        Ok(Self { u: u.clone() })
    }

    pub fn weight(&self) -> &WeightFunction {
        &self.u
    }

    /// `|η (1/x + u(η)) - 1|`.
    pub fn residual(&self, x: f64, eta: f64) -> f64 {
        (eta * (1.0 / x + self.u.eval(eta)) - 1.0).abs()
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(x > 0.0 && x.is_finite()) {
            return Err(Error::domain(format!("eta needs x > 0, got {x}")));
        }
        let mut eta = x;
        for _ in 0..PICARD_MAX {
            let next = x / (1.0 + x * self.u.eval(eta));
            let done = (next - eta).abs() <= 1e-16 * next.max(f64::MIN_POSITIVE);
            eta = next;
            if done {
                break;
            }
        }
        if eta > 0.0 && self.residual(x, eta) <= RESIDUAL_TOL {
            return Ok(eta);
        }
        self.bisect(x)
    }

    /// Fallback: `η (1/x + u(η)) - 1` is increasing in `η` on `(0, x]`.
    fn bisect(&self, x: f64) -> Result<f64> {
        let g = |e: f64| e * (1.0 / x + self.u.eval(e)) - 1.0;
        let (mut lo, mut hi) = (x * 1e-300_f64.max(f64::MIN_POSITIVE), x);
        if g(lo) > 0.0 || g(hi) < 0.0 {
            return Err(Error::numerical(format!("eta has no root in (0, {x}]")));
        }
        for _ in 0..2_000 {
            let mid = if hi / lo > 4.0 { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-17 * hi {
                break;
            }
        }
        let eta = 0.5 * (lo + hi);
        if self.residual(x, eta) > RESIDUAL_TOL {
            return Err(Error::numerical(format!("eta residual too large at x = {x}")));
        }
        Ok(eta)
    }
}

pub fn eta(u: &WeightFunction, x: f64) -> Result<f64> {
    Eta::new(u)?.eval(x)
}

impl Eta {
    /// `η(τ̲ x)/τ̲` entrywise.
    pub fn eval_tau(&self, split: &TauSplit, x: &[f64]) -> Result<Vec<f64>> {
        check_len(split.len(), x.len())?;
        x.iter()
            .zip(&split.tau_under)
            .map(|(&xi, &t)| Ok(self.eval(t * xi)? / t))
            .collect()
    }
}

pub fn eta_tau(u: &WeightFunction, split: &TauSplit, x: &DiagonalWeights) -> Result<DiagonalWeights> {
    DiagonalWeights::new(Eta::new(u)?.eval_tau(split, x.as_slice())?)
}

/// `u^τ(D) = τ̲ u(τ̲ D)` entrywise.
pub fn u_tau(u: &WeightFunction, split: &TauSplit, d: &[f64]) -> Result<Vec<f64>> {
    check_len(split.len(), d.len())?;
    Ok(d.iter()
        .zip(&split.tau_under)
        .map(|(&di, &t)| t * u.eval(t * di))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: plain bisection on the monotone defining equation.
    fn bisection_oracle(u: impl Fn(f64) -> f64, x: f64) -> f64 {
        let (mut lo, mut hi) = (0.0f64, x);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * (1.0 / x + u(mid)) < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn zero_weight_is_identity() {
        let e = Eta::new(&WeightFunction::zero()).unwrap();
        for x in [1e-3, 1.0, 17.0] {
            assert_eq!(e.eval(x).unwrap(), x);
        }
    }

    #[test]
    fn inv_sqrt_matches_oracle_and_closed_form() {
        let u = WeightFunction::inv_sqrt();
        let e = eta(&u, 1.0).unwrap();
        assert!(e.sqrt() - (1.0 - e) < 1e-12);
        assert!(Eta::new(&u).unwrap().residual(1.0, e) <= 1e-12);
        assert!((e - bisection_oracle(|t| 1.0 / t.sqrt(), 1.0)).abs() < 1e-12);
        // With s = √η the equation reads s²/x + s = 1.
        for x in [0.1f64, 1.0, 4.0, 30.0] {
            let closed = ((x * x / 4.0 + x).sqrt() - x / 2.0).powi(2);
            let v = eta(&u, x).unwrap();
            assert!((v - closed).abs() <= 1e-12 * closed.max(1.0));
        }
    }

    #[test]
    fn floor_at_large_x() {
        let u = WeightFunction::min_lin_inv(5.0).unwrap();
        let e = Eta::new(&u).unwrap();
        let x = 1e6;
        assert!(e.eval(x).unwrap() / x >= 1.0 - u.u_times_sup());
    }

    #[test]
    fn rejects_unstable() {
        let u = WeightFunction::custom("square", |t: f64| t * t, f64::INFINITY, f64::INFINITY);
        assert!(eta(&u, 1.0).is_err());
    }

    #[test]
    fn tau_variants() {
        let u = WeightFunction::min_lin_inv(5.0).unwrap();
        let e = Eta::new(&u).unwrap();
        let split = TauSplit::trivial(3);
        let x = [0.2, 1.0, 5.0];
        let a = e.eval_tau(&split, &x).unwrap();
        for i in 0..3 {
            assert_eq!(a[i], e.eval(x[i]).unwrap());
        }
        let z = Eta::new(&WeightFunction::zero()).unwrap();
        let split = TauSplit::new(&[0.1, 3.0, 40.0]).unwrap();
        let b = z.eval_tau(&split, &x).unwrap();
        for i in 0..3 {
            assert!((b[i] - x[i]).abs() < 1e-15 * x[i]);
        }
    }
}
