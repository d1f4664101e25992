use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::stable_metric::{DiagonalWeights, WeightFunction};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Scalar oracle for `λ (δ/(1 + δλ) + z) = ratio` by bisection on `λ > 0`.
fn scalar_lambda(delta: f64, z: f64, ratio: f64) -> f64 {
    let f = |l: f64| l * (delta / (1.0 + delta * l) + z) - ratio;
    let (mut lo, mut hi) = (0.0, ratio / z);
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn random_spd(p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() / p as f64 + DMatrix::identity(p, p) * 0.1
}

fn random_shared_model(p: usize, n: usize, seed: u64, signal: bool, mean: bool) -> PopulationModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cov = random_spd(p, &mut rng);
    let mu = DVector::from_fn(p, |_, _| if mean { rng.random_range(-0.3..0.3) } else { 0.0 });
    let cmat = &cov + &mu * mu.transpose();
    let tau: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..4.0)).collect();
    let m = if signal {
        DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0)).normalize()
    } else {
        DVector::zeros(p)
    };
    PopulationModel::shared(cmat, Some(mu), tau, m, 0.8).unwrap()
}

fn homogeneous(p: usize, n: usize) -> PopulationModel {
    PopulationModel::shared(DMatrix::identity(p, p), None, vec![1.0; n], DVector::zeros(p), 1.0).unwrap()
}

#[test]
fn lambda_small_delta_limit() {
    let model = random_shared_model(6, 9, 1, false, false);
    let fam = model.family(FamilyKind::Plain);
    let z = 1.3;
    let sol = lambda_real(&fam, &[1e-9; 9], z, None).unwrap();
    for i in 0..9 {
        let expect = fam.trace(i) / 9.0 / z;
        assert!((sol[i] / expect - 1.0).abs() < 1e-6);
    }
}

#[test]
fn lambda_scalar_oracle() {
    let (p, n) = (5, 8);
    let fam = homogeneous(p, n).family(FamilyKind::Plain);
    for (delta, z) in [(0.3, 1.0), (2.0, 0.5), (7.0, 3.0)] {
        let sol = lambda_real(&fam, &vec![delta; n], z, None).unwrap();
        let oracle = scalar_lambda(delta, z, p as f64 / n as f64);
        for i in 0..n {
            assert!((sol[i] - oracle).abs() < 1e-12, "{} vs {oracle}", sol[i]);
        }
        let q = deterministic_resolvent(&fam, &vec![delta; n], &vec![c(oracle, 0.0); n], c(z, 0.0)).unwrap();
        let s = 1.0 / (delta / (1.0 + delta * oracle) + z);
        assert!((q - DMatrix::<Complex64>::identity(p, p) * c(s, 0.0)).iter().all(|e| e.norm() < 1e-12));
    }
}

#[test]
fn lambda_residual_per_sample_model() {
    let (p, n) = (8, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cs: Vec<_> = (0..n).map(|_| random_spd(p, &mut rng)).collect();
    let tau: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    let model = PopulationModel::per_sample(cs, None, tau, DVector::zeros(p), 1.0).unwrap();
    let fam = model.family(FamilyKind::Plain);
    let delta: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
    for z in [c(1.0, 0.0), c(-0.5, 0.3), c(2.0, -1.0)] {
        let sol = lambda_fixed_point(&fam, &delta, z, None).unwrap();
        assert!(sol.residual <= 1e-11, "residual {}", sol.residual);
        let q = deterministic_resolvent(&fam, &delta, &sol.lambda, z).unwrap();
        for i in 0..n {
            let ci = fam.member(i).map(|v| c(v, 0.0));
            let t = (ci * &q).trace() / n as f64;
            assert!((t - sol.lambda[i]).norm() < 1e-10);
        }
    }
}

#[test]
fn structured_matches_dense() {
    for (signal, mean) in [(false, false), (true, false), (true, true)] {
        let model = random_shared_model(7, 10, 3, signal, mean);
        for kind in [FamilyKind::Plain, FamilyKind::TauBar, FamilyKind::Barred, FamilyKind::Data] {
            let fam = model.family(kind);
            let dense = fam.to_dense();
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let w: Vec<Complex64> = (0..10).map(|_| c(rng.random_range(0.1..2.0), rng.random_range(-0.5..0.5))).collect();
            let v = DVector::from_fn(7, |_, _| rng.random_range(-1.0..1.0));
            for z in [c(0.7, 0.0), c(-1.5, -0.2)] {
                let a = fam.evaluate(&w, z, Some(&fam.prepare_probe(&v))).unwrap();
                let b = dense.evaluate(&w, z, Some(&dense.prepare_probe(&v))).unwrap();
                for i in 0..10 {
                    assert!((a.traces[i] - b.traces[i]).norm() < 1e-12, "{kind:?}");
                    assert!((fam.trace(i) - dense.trace(i)).abs() < 1e-12);
                }
                assert!((a.normalized_trace - b.normalized_trace).norm() < 1e-12);
                assert!((a.probe.unwrap() - b.probe.unwrap()).norm() < 1e-12);
            }
        }
    }
}

#[test]
fn barred_family_is_barred_second_moment() {
    // C̄_i = τ̄ Σ + m̄ m̄ᵀ with m̄ = √τ̄ μ + m/√τ̲, built independently.
    let model = random_shared_model(5, 4, 9, true, true);
    let fam = model.family(FamilyKind::Barred);
    let SecondMoments::Shared { c: cm, mean } = model.moments() else { unreachable!() };
    let sigma = cm - mean * mean.transpose();
    let m = model.signal();
    for i in 0..4 {
        let t = model.tau()[i];
        let (tb, tu) = (t.min(1.0), t.max(1.0));
        let mbar = mean * tb.sqrt() + m / tu.sqrt();
        let expect = &sigma * tb + &mbar * mbar.transpose();
        assert!((fam.member(i) - expect).amax() < 1e-12);
        let xbar = mean * t.sqrt() + m;
        let expect_x = &sigma * t + &xbar * xbar.transpose();
        assert!((model.family(FamilyKind::Data).member(i) - expect_x).amax() < 1e-12);
    }
}

fn default_u() -> WeightFunction {
    WeightFunction::min_lin_inv(5.0).unwrap()
}

#[test]
fn tilde_d_trivial_split() {
    let model = random_shared_model(6, 9, 2, false, false);
    let model = model.with_parts(vec![1.0; 9], DVector::zeros(6), 1.0).unwrap();
    let a = solve_tilde_d(&model, &default_u(), true).unwrap();
    let b = solve_tilde_d(&model, &default_u(), false).unwrap();
    assert_eq!(a.value, b.value);
    assert!(a.residual <= 1e-11);
}

#[test]
fn tilde_d_homogeneous_scalar_oracle() {
    let (p, n) = (6, 10);
    let model = homogeneous(p, n);
    let u = default_u();
    let e = Eta::new(&u).unwrap();
    // Nested scalar solve: D = η(λ(u(D))) with λ from the bisection oracle.
    let mut d = 1.0;
    for _ in 0..500 {
        d = e.eval(scalar_lambda(u.eval(d), 1.0, p as f64 / n as f64)).unwrap();
    }
    let sol = solve_tilde_d(&model, &u, false).unwrap();
    for i in 0..n {
        assert!((sol.value[i] - d).abs() < 1e-11);
    }
    let (lo, hi) = tilde_d_bracket(&model, &u, false);
    assert!(lo[0] <= d && d <= hi[0]);
}

#[test]
fn tilde_d_residual_and_bracket() {
    let model = random_shared_model(8, 12, 4, true, true);
    let u = default_u();
    for with_signal in [false, true] {
        let sol = solve_tilde_d(&model, &u, with_signal).unwrap();
        assert!(tilde_d_residual(&model, &u, with_signal, &sol.value).unwrap() <= 1e-11);
        let (lo, hi) = tilde_d_bracket(&model, &u, with_signal);
        for i in 0..12 {
            assert!(lo[i] <= sol.value[i] && sol.value[i] <= hi[i]);
        }
    }
}

#[test]
fn u_routes_coincide() {
    let u = default_u();
    for seed in 0..3 {
        let model = random_shared_model(8, 12, seed, true, true);
        let a = solve_u(&model, &u, URoute::Direct).unwrap();
        let b = solve_u(&model, &u, URoute::ViaTildeD).unwrap();
        assert!(a.value.sup_distance(&b.value) < 1e-9);
        assert!(a.residual <= 1e-11 && b.residual <= 1e-11);
        let d = solve_tilde_d(&model, &u, false).unwrap();
        let bound = u.u_times_sup()
            * (0..12)
                .map(|i| model.tau_split().tau_bar[i] / d.value[i])
                .fold(0.0, f64::max);
        assert!(a.value.max() <= bound * (1.0 + 1e-12));
    }
}

#[test]
fn tiny_weight_gives_tiny_u() {
    let model = homogeneous(5, 8);
    let u = WeightFunction::scaled(1e-12, &default_u());
    let sol = solve_u(&model, &u, URoute::Direct).unwrap();
    assert!(sol.value.max() <= 1e-10);
}

#[test]
fn stieltjes_limits_and_oracle() {
    let (p, n) = (6, 10);
    let model = homogeneous(p, n);
    let tiny = DiagonalWeights::constant(n, 1e-14).unwrap();
    for z in [c(1.0, 0.0), c(-0.3, 0.7)] {
        assert!((predicted_stieltjes(&model, &tiny, z).unwrap() - z.inv()).norm() < 1e-10);
    }
    let uv = 0.4;
    let ud = DiagonalWeights::constant(n, uv).unwrap();
    let g = predicted_stieltjes(&model, &ud, c(1.0, 0.0)).unwrap();
    let l = scalar_lambda(uv, 1.0, p as f64 / n as f64);
    assert!((g.re - 1.0 / (uv / (1.0 + uv * l) + 1.0)).abs() < 1e-12);
    assert!(g.im == 0.0);
}

#[test]
fn herglotz_sign() {
    let model = random_shared_model(10, 14, 5, false, false);
    let ud = solve_u(&model, &default_u(), URoute::Direct).unwrap().value;
    let grid: Vec<f64> = (0..=60).map(|k| 3.0 * k as f64 / 60.0).collect();
    let res = predicted_density(&model, &ud, &grid, 1e-2).unwrap();
    for s in &res.stieltjes {
        assert!(s.m.1 >= -1e-10);
    }
    assert!(res.density.iter().all(|d| d.1 >= 0.0));
}

/// Marchenko–Pastur edges for `c (1/n) Σ z zᵀ` with ratio `y`.
fn mp_edges(scale: f64, y: f64) -> (f64, f64) {
    (scale * (1.0 - y.sqrt()).powi(2), scale * (1.0 + y.sqrt()).powi(2))
}

#[test]
fn homogeneous_density_edges() {
    let (p, n) = (50, 100);
    let model = homogeneous(p, n);
    let scale = 0.7;
    let ud = DiagonalWeights::constant(n, scale).unwrap();
    let grid: Vec<f64> = (1..=1200).map(|k| 3.0 * k as f64 / 1200.0).collect();
    let res = predicted_density(&model, &ud, &grid, 1e-4).unwrap();
    let top = res.density.iter().map(|d| d.1).fold(0.0, f64::max);
    let support: Vec<f64> = res.density.iter().filter(|d| d.1 > 1e-2 * top).map(|d| d.0).collect();
    let (lo, hi) = mp_edges(scale, 0.5);
    let (elo, ehi) = (support[0], support[support.len() - 1]);
    assert!((elo - lo).abs() <= 0.05 * lo, "{elo} vs {lo}");
    assert!((ehi - hi).abs() <= 0.05 * hi, "{ehi} vs {hi}");
    assert!((res.mass - 1.0).abs() < 0.05);
    assert!(res.warning.is_none());
}

#[test]
fn zero_weights_collapse_density() {
    let model = homogeneous(4, 6);
    let ud = DiagonalWeights::constant(6, 1e-12).unwrap();
    let eps = 1e-3;
    let grid: Vec<f64> = (0..=400).map(|k| k as f64 * 1e-3).collect();
    let res = predicted_density(&model, &ud, &grid, eps).unwrap();
    let below: f64 = res.density.windows(2).filter(|w| w[1].0 <= 2.0 * eps).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum();
    let above: f64 = res.density.windows(2).filter(|w| w[0].0 >= 2.0 * eps).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum();
    assert!(below > above);
}

#[test]
fn ks_of_exact_sample_is_small() {
    let cdf: Vec<(f64, f64)> = (0..=100).map(|k| (k as f64 / 100.0, k as f64 / 100.0)).collect();
    let sample: Vec<f64> = (0..1000).map(|k| (k as f64 + 0.5) / 1000.0).collect();
    assert!(ks_distance(&sample, &cdf) < 1e-3);
    let shifted: Vec<f64> = sample.iter().map(|x| x * 0.5).collect();
    assert!((ks_distance(&shifted, &cdf) - 0.5).abs() < 1e-2);
    let d: Vec<(f64, f64)> = (0..=100).map(|k| (k as f64 / 100.0, 1.0)).collect();
    let cdf2 = density_cdf(&d);
    assert!((cdf2[50].1 - 0.5).abs() < 1e-12);
}

#[test]
fn alignment_trivial_cases() {
    let model = random_shared_model(8, 12, 6, true, false);
    let ud = solve_u(&model, &default_u(), URoute::Direct).unwrap().value;
    let zero = DVector::zeros(8);
    assert_eq!(predicted_alignment(&model, &ud, &zero, &ContourSpec::new(1.0, 0.1)).unwrap().value, 0.0);
    let far = ContourSpec::new(50.0, 1.0);
    let res = predicted_alignment(&model, &ud, model.signal(), &far).unwrap();
    assert!(res.value.abs() < 1e-8, "{}", res.value);
}

#[test]
fn alignment_matches_scalar_oracle() {
    // C = 0.1 I + m mᵀ with m = 3 e₁ and unit weights reduces Λ to one scalar
    // equation; reference values come from a Newton solve of that equation
    // on the same contours.
    let (p, n) = (10, 40);
    let mut m = DVector::zeros(p);
    m[0] = 3.0;
    let model = PopulationModel::shared(DMatrix::identity(p, p) * 0.1, None, vec![1.0; n], m.clone(), 1.0).unwrap();
    let ud = DiagonalWeights::constant(n, 1.0).unwrap();
    let coarse = predicted_alignment(&model, &ud, &m, &ContourSpec::new(9.3, 3.0)).unwrap();
    assert!((coarse.value - 8.976718647641501).abs() < 1e-9, "{}", coarse.value);
    let fine = ContourSpec { center: 9.0, radius: 4.0, nodes: 1024 };
    let fine = predicted_alignment(&model, &ud, &m, &fine).unwrap();
    assert!((fine.value - 8.976721267479778).abs() < 1e-9, "{}", fine.value);
    assert!(coarse.imag_residue < 1e-10);
}

#[test]
fn spike_detection() {
    let mut e: Vec<f64> = (0..50).map(|k| 1.0 + k as f64 * 0.01).collect();
    assert!(matches!(detect_spike(&e, None), Err(crate::Error::SpikeAbsent)));
    e.push(3.0);
    let spec = detect_spike(&e, None).unwrap();
    assert_eq!(spec.center, 3.0);
    assert!((spec.radius - 0.5 * (3.0 - 1.49)).abs() < 1e-12);
    let density = vec![(1.0, 1.0), (2.5, 1.0)];
    assert!(detect_spike(&e, Some(&density)).is_err());
}
