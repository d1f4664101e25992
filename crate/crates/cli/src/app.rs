//! Argument parsing and dispatch.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::pipeline::{self, Context, RunArtifacts};

#[derive(Debug, Parser)]
#[command(name = "rscm", version, about = "Robust scatter estimation and its deterministic equivalents")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the robust estimator on one data set.
    Estimate(RunArgs),
    /// Deterministic equivalents, density and Stieltjes transform.
    Predict(RunArgs),
    /// Estimate and predict on the same data, with comparison metrics.
    Compare(RunArgs),
    /// Report whether a weight function is admissible.
    CheckWeights {
        /// Weight name such as `min_lin_inv(5)`.
        #[arg(long, conflicts_with = "config")]
        weight: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Independent trials run in parallel.
    McStudy(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; overrides `outputs`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Worker threads for `mc-study`.
    #[arg(long)]
    pub threads: Option<usize>,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.outputs = o.clone();
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        Ok(cfg)
    }
}

fn write_failure(out: &Path, err: &CliError) {
    let record = json!({
        "error": err.to_string(),
        "exit_code": err.exit_code(),
        "last_iterate": err.last_iterate(),
    });
    if std::fs::create_dir_all(out).is_ok() {
        let text = serde_json::to_string_pretty(&record).expect("serializes") + "\n";
        let _ = std::fs::write(out.join("failure.json"), text);
    }
}

fn execute(args: &RunArgs, prediction: bool, f: impl Fn(&Context, &Path) -> Result<RunArtifacts, CliError>) -> i32 {
    let cfg = match args.config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let out = cfg.outputs.clone();
    let result = Context::new(cfg, prediction).and_then(|ctx| f(&ctx, &out));
    match result {
        Ok(a) => {
            println!("wrote {} files to {}", a.files.len(), a.root.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            write_failure(&out, &e);
            e.exit_code()
        }
    }
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match cli.command {
        Command::Estimate(a) => execute(&a, false, pipeline::run_estimate),
        Command::Predict(a) => execute(&a, true, pipeline::run_predict),
        Command::Compare(a) => execute(&a, true, pipeline::run_compare),
        Command::McStudy(a) => {
            if a.threads == Some(0) {
                eprintln!("error: --threads must be at least 1");
                return 2;
            }
            execute(&a, true, |c, o| pipeline::run_mc_study(c, o, a.threads))
        }
        Command::CheckWeights { weight, config } => {
            let u = match (weight, config) {
                (Some(w), None) => rscm_core::WeightFunction::from_name(&w).map_err(CliError::from),
                (None, Some(c)) => ExperimentConfig::load(&c).and_then(|cfg| cfg.weight()),
                _ => Err(CliError::Config("give --weight or --config".into())),
            };
            match u {
                Ok(u) => {
                    let (ok, text) = pipeline::check_weights(&u);
                    println!("{}: {text}", u.name());
                    println!("{}", if ok { "admissible" } else { "not admissible" });
                    if ok {
                        0
                    } else {
                        2
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    e.exit_code()
                }
            }
        }
    }
}
