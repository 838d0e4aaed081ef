//! Command-line front end: configuration, experiment drivers and output files.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::Value;

use config::{EigKind, EstimatorKind, OptimizerKind, ProblemId, RunConfig};
use error::CliError;
use mlmc_boed::parallel::Workers;
use mlmc_boed::problems::ProposalKind;

#[derive(Debug, Parser)]
#[command(name = "mlmc-boed", version, about = "Bayesian experimental design with unbiased MLMC gradients")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Options,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Mean squares of ψ and Δψ per level and the fitted decay rate.
    Decay,
    /// Stochastic gradient ascent on the EIG; writes the full trace.
    Optimize,
    /// EIG estimate at the design given by --xi0.
    Eig,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EstimatorArg {
    Stdmc,
    Mlmc,
    MlmcNaive,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ProposalArg {
    Prior,
    Laplace,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OptimizerArg {
    Rm,
    Amsgrad,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ProblemArg {
    Testcase,
    Pk,
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct Options {
    /// JSON configuration; unspecified fields take the problem's defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores). Results do not depend on this.
    #[arg(long, global = true, env = "MLMC_BOED_THREADS")]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true)]
    pub problem: Option<ProblemArg>,
    /// Gradient estimator; for `eig`, stdmc selects the nested EIG estimator.
    #[arg(long, global = true)]
    pub estimator: Option<EstimatorArg>,
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    #[arg(long, global = true)]
    pub m0: Option<u64>,
    /// Level-0 probability override.
    #[arg(long, global = true)]
    pub w0: Option<f64>,
    /// Inner samples of the nested estimators (stdmc gradient, nested EIG).
    #[arg(long, global = true)]
    pub inner_m: Option<usize>,
    #[arg(long, global = true)]
    pub proposal: Option<ProposalArg>,
    #[arg(long, global = true)]
    pub optimizer: Option<OptimizerArg>,
    /// Robbins–Monro constant c, or the AMSGrad step size.
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    /// Outer samples per gradient (`optimize`) or per EIG estimate (`eig`).
    #[arg(long, global = true)]
    pub n_outer: Option<usize>,
    #[arg(long, global = true)]
    pub iters: Option<u64>,
    #[arg(long, global = true)]
    pub eig_every: Option<u64>,
    #[arg(long, global = true)]
    pub levels: Option<u32>,
    #[arg(long, global = true)]
    pub samples_per_level: Option<usize>,
    /// Design, comma separated: the start of `optimize`, the evaluation point otherwise.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub xi0: Option<Vec<f64>>,
}

impl Options {
    /// Loads the configuration file (if any) and applies flag overrides.
    pub fn resolve(&self, command: Command) -> Result<RunConfig, CliError> {
        let doc: Option<Value> = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                Some(serde_json::from_str(&text).map_err(|e| {
                    CliError::Core(mlmc_boed::Error::Config(format!("{}: {e}", path.display())))
                })?)
            }
            None => None,
        };
        let problem = self.problem.map(|p| match p {
            ProblemArg::Testcase => ProblemId::Testcase,
            ProblemArg::Pk => ProblemId::Pk,
        });
        let mut cfg = RunConfig::from_value(doc.as_ref(), problem)?;
        self.apply(command, &mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&self, command: Command, cfg: &mut RunConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        let eig_cmd = matches!(command, Command::Eig);
        if eig_cmd {
            if let Some(e) = self.estimator {
                cfg.eig.kind = match e {
                    EstimatorArg::Stdmc => EigKind::Nested,
                    _ => EigKind::Mlmc,
                };
            }
            set(&mut cfg.eig.tau, self.tau);
            set(&mut cfg.eig.m0, self.m0);
            if self.w0.is_some() {
                cfg.eig.w0 = self.w0;
            }
            set(&mut cfg.eig.n_outer, self.n_outer);
        } else {
            if let Some(e) = self.estimator {
                cfg.estimator.kind = match e {
                    EstimatorArg::Stdmc => EstimatorKind::Stdmc,
                    EstimatorArg::Mlmc => EstimatorKind::Mlmc,
                    EstimatorArg::MlmcNaive => EstimatorKind::MlmcNaive,
                };
            }
            set(&mut cfg.estimator.tau, self.tau);
            set(&mut cfg.estimator.m0, self.m0);
            if self.w0.is_some() {
                cfg.estimator.w0 = self.w0;
            }
            set(&mut cfg.n_outer, self.n_outer);
        }
        set(&mut cfg.estimator.m, self.inner_m);
        set(&mut cfg.eig.inner_m, self.inner_m);
        if let Some(p) = self.proposal {
            cfg.proposal = match p {
                ProposalArg::Prior => ProposalKind::Prior,
                ProposalArg::Laplace => ProposalKind::Laplace,
            };
        }
        if let Some(o) = self.optimizer {
            cfg.optimizer.kind = match o {
                OptimizerArg::Rm => OptimizerKind::Rm,
                OptimizerArg::Amsgrad => OptimizerKind::Amsgrad,
            };
        }
        if let Some(lr) = self.lr {
            match cfg.optimizer.kind {
                OptimizerKind::Rm => cfg.optimizer.c = lr,
                OptimizerKind::Amsgrad => cfg.optimizer.alpha = lr,
            }
        }
        set(&mut cfg.max_iters, self.iters);
        set(&mut cfg.eig.every, self.eig_every);
        set(&mut cfg.decay.levels, self.levels);
        set(&mut cfg.decay.samples_per_level, self.samples_per_level);
        if let Some(x) = &self.xi0 {
            cfg.xi0 = x.clone();
        }
    }
}

fn set<T: Copy>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Runs one command end to end and returns its summary.
pub fn run(cli: &Cli) -> Result<Value, CliError> {
    let cfg = cli.opts.resolve(cli.command)?;
    let workers = Workers::new(cli.opts.threads.unwrap_or(0))?;
    let out = &cli.opts.out;
    match cli.command {
        Command::Decay => commands::decay(&cfg, &workers, out),
        Command::Optimize => commands::optimize(&cfg, &workers, out),
        Command::Eig => commands::eig(&cfg, &workers, out),
    }
}
