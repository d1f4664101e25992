//! Estimate, predict and compare runs, and the Monte Carlo harness.

use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use rscm_core::datagen::{self, GeneratorSpec, Mixing};
use rscm_core::deterministic::{
    density_cdf, detect_spike, ks_distance, predicted_alignment, predicted_density, predicted_stieltjes,
    signal_aware_u, solve_tilde_d, solve_u, ContourSpec, DensityResult, EquivalentSolution, FamilyKind,
    PopulationModel,
};
use rscm_core::estimator::{empirical_alignment, solve_robust, weighted_eigenvalues, DataMatrix, RobustEstimate, RobustOptions};
use rscm_core::stable_metric::verify_weight_admissibility;
use rscm_core::{Complex64, WeightFunction};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, GeneratorName, MomentSource};
use crate::data::{read_matrix, read_vector};
use crate::error::CliError;
use crate::output::{content_hash, fmt_f64, OutputDir};

/// Eigenvalues below this fraction of the largest count as null.
const NULL_REL: f64 = 1e-10;
/// Points per half of the KS grid (linear part and logarithmic part).
const KS_POINTS: usize = 1000;
/// Decades covered by the logarithmic part of the KS grid.
const KS_DECADES: f64 = 7.0;

/// Files written by a run and its summary record.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub root: std::path::PathBuf,
    pub files: Vec<std::path::PathBuf>,
    pub summary: Value,
}

enum Source {
    Generated {
        /// Spec with the mixing matrix frozen; only the seed varies per trial.
        spec: GeneratorSpec,
    },
    External {
        x: DataMatrix,
        tau: Vec<f64>,
        signal: DVector<f64>,
    },
}

/// Config plus everything that is fixed across trials.
pub struct Context {
    pub cfg: ExperimentConfig,
    pub u: WeightFunction,
    source: Source,
    second_moment: DMatrix<f64>,
    mean: DVector<f64>,
    hash_parts: Vec<Vec<u8>>,
}

/// One realization of the data.
pub struct Draw {
    pub seed: u64,
    pub x: DataMatrix,
    pub tau: Vec<f64>,
    pub signal: DVector<f64>,
}

impl Context {
    /// `prediction` also requires `sup t u(t) < 1`, needed by the deterministic equivalents.
    pub fn new(cfg: ExperimentConfig, prediction: bool) -> Result<Self, CliError> {
        cfg.validate()?;
        let u = cfg.weight()?;
        u.require_admissible(prediction)?;
        // The output directory does not affect results, so it is left out of the hash.
        let mut hashed = cfg.clone();
        hashed.outputs = Default::default();
        let mut hash_parts = vec![hashed.to_toml().into_bytes()];
        let mut read = |path: &Path| -> Result<Vec<u8>, CliError> {
            let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
            hash_parts.push(bytes.clone());
            Ok(bytes)
        };

        let source = match cfg.generator {
            GeneratorName::External => {
                let path = cfg.data_path.as_ref().expect("validated");
                read(path)?;
                let x = DataMatrix::new(read_matrix(path)?)?;
                let tau = match &cfg.tau_path {
                    Some(p) => {
                        read(p)?;
                        read_vector(p)?.iter().cloned().collect()
                    }
                    None => vec![1.0; x.n()],
                };
                let signal = match &cfg.signal_path {
                    Some(p) => {
                        read(p)?;
                        read_vector(p)?
                    }
                    None => DVector::zeros(x.p()),
                };
                if tau.len() != x.n() || signal.len() != x.p() {
                    return Err(CliError::Config(format!(
                        "data is {}x{} but tau has {} entries and signal {}",
                        x.p(),
                        x.n(),
                        tau.len(),
                        signal.len()
                    )));
                }
                Source::External { x, tau, signal }
            }
            _ => {
                let mut spec = cfg.generator_spec(cfg.seed)?;
                spec.mixing = Some(match spec.mixing_matrix()? {
                    Some(a) => Mixing::Matrix(a),
                    None => Mixing::Identity,
                });
                Source::Generated { spec }
            }
        };

        let p = match &source {
            Source::Generated { spec } => spec.p,
            Source::External { x, .. } => x.p(),
        };
        let (second_moment, mean) = match cfg.moments {
            MomentSource::Exact => match &source {
                Source::Generated { spec } => datagen::exact_moments(spec)?
                    .ok_or_else(|| CliError::Config("no closed-form moments for this generator".into()))?,
                Source::External { .. } => unreachable!("validated"),
            },
            MomentSource::Estimate => match &source {
                Source::Generated { spec } => {
                    datagen::estimate_population_moments(spec, cfg.moment_draws.unwrap_or(p * p))?
                }
                Source::External { .. } => unreachable!("validated"),
            },
            MomentSource::File => {
                let path = cfg.moments_path.as_ref().expect("validated");
                read(path)?;
                let c = read_matrix(path)?;
                let mean = match &cfg.mean_path {
                    Some(mp) => {
                        read(mp)?;
                        read_vector(mp)?
                    }
                    None => DVector::zeros(c.nrows()),
                };
                (c, mean)
            }
        };
        if second_moment.nrows() != p || second_moment.ncols() != p || mean.len() != p {
            return Err(CliError::Config(format!(
                "moments are {}x{} with mean of length {}, data dimension is {p}",
                second_moment.nrows(),
                second_moment.ncols(),
                mean.len()
            )));
        }
        Ok(Self {
            cfg,
            u,
            source,
            second_moment,
            mean,
            hash_parts,
        })
    }

    pub fn gamma(&self) -> Result<f64, CliError> {
        self.cfg.gamma()
    }

    /// SHA-256 over the config and every input file read.
    pub fn input_hash(&self) -> String {
        content_hash(self.hash_parts.iter().map(Vec::as_slice))
    }

    /// Seed of trial `t`; single runs use trial 0.
    pub fn trial_seed(&self, t: usize) -> u64 {
        datagen::derive_seed(self.cfg.seed, t as u64)
    }

    fn trial_spec(&self, seed: u64) -> Option<GeneratorSpec> {
        match &self.source {
            Source::Generated { spec } => Some(GeneratorSpec { seed, ..spec.clone() }),
            Source::External { .. } => None,
        }
    }

    pub fn draw(&self, t: usize) -> Result<Draw, CliError> {
        let seed = self.trial_seed(t);
        match &self.source {
            Source::Generated { .. } => {
                let d = datagen::generate(&self.trial_spec(seed).expect("generated"))?;
                Ok(Draw {
                    seed,
                    x: d.x,
                    tau: d.tau,
                    signal: d.signal,
                })
            }
            Source::External { x, tau, signal } => Ok(Draw {
                seed,
                x: x.clone(),
                tau: tau.clone(),
                signal: signal.clone(),
            }),
        }
    }

    /// `τ` and `m` of trial `t` without drawing `Z`.
    pub fn scalings(&self, t: usize) -> Result<(Vec<f64>, DVector<f64>), CliError> {
        match &self.source {
            Source::Generated { .. } => {
                let spec = self.trial_spec(self.trial_seed(t)).expect("generated");
                Ok((datagen::sample_tau(&spec)?, spec.signal()))
            }
            Source::External { tau, signal, .. } => Ok((tau.clone(), signal.clone())),
        }
    }

    pub fn model(&self, tau: Vec<f64>, signal: DVector<f64>) -> Result<PopulationModel, CliError> {
        let mean = (self.mean.norm() > 0.0).then(|| self.mean.clone());
        Ok(PopulationModel::shared(
            self.second_moment.clone(),
            mean,
            tau,
            signal,
            self.gamma()?,
        )?)
    }
}

pub struct Estimated {
    pub estimate: RobustEstimate,
    /// All eigenvalues of `Ĉ`, ascending.
    pub eigenvalues: Vec<f64>,
    /// All eigenvalues of `(1/n) X Xᵀ`, ascending.
    pub sample_eigenvalues: Vec<f64>,
}

impl Estimated {
    pub fn nonnull(&self) -> Vec<f64> {
        nonnull(&self.eigenvalues)
    }
}

fn nonnull(e: &[f64]) -> Vec<f64> {
    let top = e.iter().cloned().fold(0.0, f64::max);
    e.iter().cloned().filter(|v| *v > NULL_REL * top).collect()
}

pub fn estimate_stage(ctx: &Context, x: &DataMatrix) -> Result<Estimated, CliError> {
    let estimate = solve_robust(x, &ctx.u, &RobustOptions::new(ctx.gamma()?))?;
    let eigenvalues = weighted_eigenvalues(x, &estimate.weights, false)?;
    let sample_eigenvalues = weighted_eigenvalues(x, &vec![1.0; x.n()], false)?;
    Ok(Estimated {
        estimate,
        eigenvalues,
        sample_eigenvalues,
    })
}

pub struct Predicted {
    pub model: PopulationModel,
    pub u_diag: EquivalentSolution,
    pub tilde_d: EquivalentSolution,
    pub tilde_d_minus_m: EquivalentSolution,
}

impl Predicted {
    pub fn signal_gap(&self) -> f64 {
        self.tilde_d.value.sup_distance(&self.tilde_d_minus_m.value)
    }
}

pub fn predict_stage(ctx: &Context, tau: Vec<f64>, signal: DVector<f64>) -> Result<Predicted, CliError> {
    let model = ctx.model(tau, signal)?;
    let tilde_d_minus_m = solve_tilde_d(&model, &ctx.u, false)?;
    let tilde_d = if ctx.cfg.with_signal && model.signal().norm() > 0.0 {
        solve_tilde_d(&model, &ctx.u, true)?
    } else {
        tilde_d_minus_m.clone()
    };
    let u_diag = solve_u(&model, &ctx.u, ctx.cfg.u_route)?;
    Ok(Predicted {
        model,
        u_diag,
        tilde_d,
        tilde_d_minus_m,
    })
}

/// `(1/p) tr (Ĉ + zI)⁻¹` from the eigenvalues.
pub fn empirical_trace(eigenvalues: &[f64], z: f64) -> f64 {
    eigenvalues.iter().map(|l| 1.0 / (l + z)).sum::<f64>() / eigenvalues.len() as f64
}

pub fn predicted_trace(pred: &Predicted, z: f64) -> Result<f64, CliError> {
    Ok(predicted_stieltjes(&pred.model, &pred.u_diag.value, Complex64::new(z, 0.0))?.re)
}

/// `sup_i |D̂_i - D̃_i|`.
pub fn dhat_gap(est: &Estimated, pred: &Predicted) -> Result<f64, CliError> {
    let dhat = est.estimate.d_hat(pred.model.tau())?;
    Ok(dhat
        .iter()
        .zip(pred.tilde_d.value.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Linear grid from the config, falling back to `[lo, hi]`.
pub fn density_grid(cfg: &ExperimentConfig, lo: f64, hi: f64) -> Vec<f64> {
    let lo = cfg.grid_min.unwrap_or(lo);
    let hi = cfg.grid_max.unwrap_or(hi);
    let k = cfg.grid_points;
    if k == 1 {
        return vec![lo];
    }
    (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
}

/// KS distance between nonnull eigenvalues and the predicted continuous CDF.
///
/// The CDF is tabulated on a linear grid joined with a logarithmic one so
/// that mass piling up near zero is resolved.
pub fn ks_statistic(pred: &Predicted, sample: &[f64], eps_fraction: f64) -> Result<f64, CliError> {
    let top = sample.iter().cloned().fold(0.0, f64::max);
    let bottom = sample.iter().cloned().fold(f64::INFINITY, f64::min);
    let range = (top - bottom).max(f64::MIN_POSITIVE);
    let hi = 1.1 * top;
    let mut grid: Vec<f64> = (0..=KS_POINTS).map(|k| hi * k as f64 / KS_POINTS as f64).collect();
    grid.extend((0..KS_POINTS).map(|k| hi * 10f64.powf(-KS_DECADES * (1.0 - k as f64 / KS_POINTS as f64))));
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let dens = predicted_density(&pred.model, &pred.u_diag.value, &grid, eps_fraction * range)?;
    Ok(ks_distance(sample, &density_cdf(&dens.continuous_density())))
}

#[derive(Debug, Clone, Serialize)]
pub struct AlignmentOutcome {
    pub empirical: f64,
    pub predicted: f64,
    pub imag_residue: f64,
    pub contour: ContourSpec,
}

pub fn alignment(
    u: &WeightFunction,
    est: &Estimated,
    pred: &Predicted,
    signal: &DVector<f64>,
) -> Result<AlignmentOutcome, CliError> {
    let contour = detect_spike(&est.nonnull(), None)?;
    let empirical = empirical_alignment(&est.estimate.scatter, signal)?;
    let weights = signal_aware_u(&pred.model, u, &pred.tilde_d.value)?;
    let res = predicted_alignment(&pred.model, &weights, signal, &contour)?;
    Ok(AlignmentOutcome {
        empirical,
        predicted: res.value,
        imag_residue: res.imag_residue,
        contour,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub trace_empirical: f64,
    pub trace_predicted: f64,
    pub trace_error: f64,
    pub dhat_gap: f64,
    pub signal_gap: f64,
    pub robust_iterations: usize,
    pub ks: Option<f64>,
    pub alignment_empirical: Option<f64>,
    pub alignment_predicted: Option<f64>,
}

pub const TRIAL_HEADER: [&str; 11] = [
    "trial",
    "seed",
    "trace_empirical",
    "trace_predicted",
    "trace_error",
    "dhat_gap",
    "signal_gap",
    "robust_iterations",
    "ks",
    "alignment_empirical",
    "alignment_predicted",
];

impl TrialRecord {
    pub fn row(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        vec![
            self.trial.to_string(),
            self.seed.to_string(),
            fmt_f64(self.trace_empirical),
            fmt_f64(self.trace_predicted),
            fmt_f64(self.trace_error),
            fmt_f64(self.dhat_gap),
            fmt_f64(self.signal_gap),
            self.robust_iterations.to_string(),
            opt(self.ks),
            opt(self.alignment_empirical),
            opt(self.alignment_predicted),
        ]
    }
}

/// Full estimate/predict comparison for trial `t`.
pub fn run_trial(ctx: &Context, t: usize, with_ks: bool, with_alignment: bool) -> Result<TrialRecord, CliError> {
    let draw = ctx.draw(t)?;
    let est = estimate_stage(ctx, &draw.x)?;
    let pred = predict_stage(ctx, draw.tau.clone(), draw.signal.clone())?;
    let z = ctx.cfg.z;
    let trace_empirical = empirical_trace(&est.eigenvalues, z);
    let trace_predicted = predicted_trace(&pred, z)?;
    let ks = if with_ks {
        Some(ks_statistic(&pred, &est.nonnull(), ctx.cfg.ks_eps_fraction)?)
    } else {
        None
    };
    let align = if with_alignment {
        Some(alignment(&ctx.u, &est, &pred, &draw.signal)?)
    } else {
        None
    };
    Ok(TrialRecord {
        trial: t,
        seed: draw.seed,
        trace_empirical,
        trace_predicted,
        trace_error: (trace_empirical - trace_predicted).abs(),
        dhat_gap: dhat_gap(&est, &pred)?,
        signal_gap: pred.signal_gap(),
        robust_iterations: est.estimate.iterations,
        ks,
        alignment_empirical: align.as_ref().map(|a| a.empirical),
        alignment_predicted: align.as_ref().map(|a| a.predicted),
    })
}

fn summary(ctx: &Context, command: &str, out: &OutputDir, runtime: &[(&str, f64)], results: Value) -> Value {
    let runtimes: serde_json::Map<String, Value> = runtime.iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
    let mut files: Vec<String> = out.manifest.files.iter().map(|p| p.display().to_string()).collect();
    files.push("summary.json".into());
    json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "input_hash": ctx.input_hash(),
        "config": ctx.cfg.to_toml(),
        "files": files,
        "runtime_ms": runtimes,
        "results": results,
    })
}

fn finish(ctx: &Context, command: &str, mut out: OutputDir, runtime: &[(&str, f64)], results: Value) -> Result<RunArtifacts, CliError> {
    let s = summary(ctx, command, &out, runtime, results);
    out.json("summary.json", &s)?;
    Ok(RunArtifacts {
        root: out.root().to_path_buf(),
        files: out.manifest.files,
        summary: s,
    })
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn write_estimate_tables(out: &mut OutputDir, est: &Estimated) -> Result<(), CliError> {
    out.indexed("eigenvalues.csv", &est.eigenvalues)?;
    out.indexed("sample_eigenvalues.csv", &est.sample_eigenvalues)?;
    let e = &est.estimate;
    out.table(
        "delta.csv",
        &["index", "delta_hat", "weight"],
        e.delta_hat
            .iter()
            .zip(&e.weights)
            .enumerate()
            .map(|(i, (d, w))| vec![i.to_string(), fmt_f64(*d), fmt_f64(*w)]),
    )
}

fn estimate_results(est: &Estimated) -> Value {
    let e = &est.estimate;
    json!({
        "p": est.eigenvalues.len(),
        "n": e.delta_hat.len(),
        "gamma": e.gamma,
        "residual": e.residual,
        "iterations": e.iterations,
        "max_observed_rate": e.max_observed_rate(),
        "contraction_bound": e.contraction_bound,
    })
}

fn write_prediction_tables(out: &mut OutputDir, pred: &Predicted, dens: &DensityResult) -> Result<(), CliError> {
    let tau = pred.model.tau();
    out.table(
        "equivalents.csv",
        &["index", "tau", "u", "tilde_d", "tilde_d_minus_m"],
        (0..tau.len()).map(|i| {
            vec![
                i.to_string(),
                fmt_f64(tau[i]),
                fmt_f64(pred.u_diag.value[i]),
                fmt_f64(pred.tilde_d.value[i]),
                fmt_f64(pred.tilde_d_minus_m.value[i]),
            ]
        }),
    )?;
    out.table(
        "density.csv",
        &["x", "density"],
        dens.density.iter().map(|(x, d)| vec![fmt_f64(*x), fmt_f64(*d)]),
    )?;
    out.table(
        "stieltjes.csv",
        &["x", "eps", "re", "im"],
        dens.stieltjes
            .iter()
            .map(|s| vec![fmt_f64(s.x), fmt_f64(s.eps), fmt_f64(s.m.0), fmt_f64(s.m.1)]),
    )
}

fn prediction_results(ctx: &Context, pred: &Predicted, dens: &DensityResult) -> Result<Value, CliError> {
    let mut r = json!({
        "u_route": ctx.cfg.u_route,
        "u_residual": pred.u_diag.residual,
        "tilde_d_minus_m_residual": pred.tilde_d_minus_m.residual,
        "eps": dens.eps,
        "density_mass": dens.mass,
        "expected_mass": dens.expected_mass,
        "null_fraction": dens.null_fraction,
        "density_warning": dens.warning,
        "trace_z": ctx.cfg.z,
        "trace_predicted": predicted_trace(pred, ctx.cfg.z)?,
    });
    if ctx.cfg.with_signal {
        r["tilde_d_residual"] = json!(pred.tilde_d.residual);
        r["tilde_d_signal_gap"] = json!(pred.signal_gap());
    }
    Ok(r)
}

/// Upper end of the default prediction grid when no data is available.
fn predicted_upper_edge(pred: &Predicted) -> f64 {
    let m = &pred.model;
    let fam = m.family(FamilyKind::Plain);
    let n = m.n() as f64;
    let load: f64 = (0..m.n()).map(|i| pred.u_diag.value[i] * fam.norm_bound(i)).sum::<f64>() / n;
    let ratio = m.p() as f64 / n;
    1.2 * load * (1.0 + ratio.sqrt()).powi(2)
}

fn eps_for(cfg: &ExperimentConfig, range: f64) -> f64 {
    cfg.eps.unwrap_or(cfg.eps_fraction * if range > 0.0 { range } else { 1.0 })
}

pub fn run_estimate(ctx: &Context, out_dir: &Path) -> Result<RunArtifacts, CliError> {
    let t0 = Instant::now();
    let draw = ctx.draw(0)?;
    let est = estimate_stage(ctx, &draw.x)?;
    let mut out = OutputDir::create(out_dir)?;
    write_estimate_tables(&mut out, &est)?;
    let results = estimate_results(&est);
    finish(ctx, "estimate", out, &[("total", ms(t0))], results)
}

pub fn run_predict(ctx: &Context, out_dir: &Path) -> Result<RunArtifacts, CliError> {
    let t0 = Instant::now();
    let (tau, signal) = ctx.scalings(0)?;
    let pred = predict_stage(ctx, tau, signal)?;
    let t_fixed = ms(t0);
    let hi = predicted_upper_edge(&pred);
    let grid = density_grid(&ctx.cfg, 0.0, hi);
    let range = grid.last().unwrap() - grid[0];
    let dens = predicted_density(&pred.model, &pred.u_diag.value, &grid, eps_for(&ctx.cfg, range))?;
    let mut out = OutputDir::create(out_dir)?;
    write_prediction_tables(&mut out, &pred, &dens)?;
    let results = prediction_results(ctx, &pred, &dens)?;
    finish(ctx, "predict", out, &[("fixed_points", t_fixed), ("total", ms(t0))], results)
}

pub fn run_compare(ctx: &Context, out_dir: &Path) -> Result<RunArtifacts, CliError> {
    let t0 = Instant::now();
    let draw = ctx.draw(0)?;
    let est = estimate_stage(ctx, &draw.x)?;
    let t_est = ms(t0);
    let t1 = Instant::now();
    let pred = predict_stage(ctx, draw.tau.clone(), draw.signal.clone())?;
    let t_pred = ms(t1);

    let nn = est.nonnull();
    let top = nn.last().copied().unwrap_or(0.0);
    let range = top - nn.first().copied().unwrap_or(0.0);
    let grid = density_grid(&ctx.cfg, 0.0, 1.1 * top);
    let dens = predicted_density(&pred.model, &pred.u_diag.value, &grid, eps_for(&ctx.cfg, range))?;

    let t2 = Instant::now();
    let ks = ks_statistic(&pred, &nn, ctx.cfg.ks_eps_fraction)?;
    let t_ks = ms(t2);

    let mut out = OutputDir::create(out_dir)?;
    write_estimate_tables(&mut out, &est)?;
    write_prediction_tables(&mut out, &pred, &dens)?;

    let mut results = json!({
        "estimate": estimate_results(&est),
        "prediction": prediction_results(ctx, &pred, &dens)?,
        "ks": ks,
        "ks_eps_fraction": ctx.cfg.ks_eps_fraction,
        "dhat_gap": dhat_gap(&est, &pred)?,
    });
    if ctx.cfg.alignment {
        results["alignment"] = serde_json::to_value(alignment(&ctx.u, &est, &pred, &draw.signal)?).expect("serializes");
    }

    let mut trials = Vec::with_capacity(ctx.cfg.trials);
    let z = ctx.cfg.z;
    let te = empirical_trace(&est.eigenvalues, z);
    let tp = predicted_trace(&pred, z)?;
    trials.push(TrialRecord {
        trial: 0,
        seed: draw.seed,
        trace_empirical: te,
        trace_predicted: tp,
        trace_error: (te - tp).abs(),
        dhat_gap: dhat_gap(&est, &pred)?,
        signal_gap: pred.signal_gap(),
        robust_iterations: est.estimate.iterations,
        ks: Some(ks),
        alignment_empirical: results["alignment"]["empirical"].as_f64(),
        alignment_predicted: results["alignment"]["predicted"].as_f64(),
    });
    for t in 1..ctx.cfg.trials {
        trials.push(run_trial(ctx, t, false, false)?);
    }
    let errors: Vec<f64> = trials.iter().map(|r| r.trace_error).collect();
    results["trace_errors"] = json!(errors);
    results["median_trace_error"] = json!(median(&errors));
    out.table("trials.csv", &TRIAL_HEADER, trials.iter().map(TrialRecord::row))?;

    let runtime = [("estimate", t_est), ("predict", t_pred), ("ks", t_ks), ("total", ms(t0))];
    finish(ctx, "compare", out, &runtime, results)
}

pub fn run_mc_study(ctx: &Context, out_dir: &Path, threads: Option<usize>) -> Result<RunArtifacts, CliError> {
    let t0 = Instant::now();
    let work = || -> Vec<Result<TrialRecord, CliError>> {
        (0..ctx.cfg.trials)
            .into_par_iter()
            .map(|t| run_trial(ctx, t, ctx.cfg.concentration_study, ctx.cfg.alignment))
            .collect()
    };
    let records = match threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| CliError::Config(format!("cannot build a pool of {k} threads: {e}")))?
            .install(work),
        None => work(),
    };
    let records = records.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut out = OutputDir::create(out_dir)?;
    out.table("trials.csv", &TRIAL_HEADER, records.iter().map(TrialRecord::row))?;
    let col = |f: fn(&TrialRecord) -> Option<f64>| -> Vec<f64> { records.iter().filter_map(f).collect() };
    let mut results = json!({
        "trials": records.len(),
        "median_trace_error": median(&col(|r| Some(r.trace_error))),
        "median_dhat_gap": median(&col(|r| Some(r.dhat_gap))),
        "max_dhat_gap": col(|r| Some(r.dhat_gap)).into_iter().fold(0.0, f64::max),
        "median_signal_gap": median(&col(|r| Some(r.signal_gap))),
    });
    if ctx.cfg.concentration_study {
        results["median_ks"] = json!(median(&col(|r| r.ks)));
    }
    if ctx.cfg.alignment {
        results["mean_alignment_empirical"] = json!(mean(&col(|r| r.alignment_empirical)));
        results["mean_alignment_predicted"] = json!(mean(&col(|r| r.alignment_predicted)));
    }
    finish(ctx, "mc-study", out, &[("total", ms(t0))], results)
}

/// Admissibility report for a weight function; `Ok(false)` if rejected.
pub fn check_weights(u: &WeightFunction) -> (bool, String) {
    let report = verify_weight_admissibility(u, true);
    (report.is_admissible(true), report.to_string())
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len();
    if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
