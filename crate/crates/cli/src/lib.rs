//! Command-line front end for `curemix`: simulation, fitting, width
//! selection and treatment-effect tables, with stable file formats.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::{DataSource, Part};
use config::{FileConfig, LinkKind};
use error::{CliError, CliResult};

#[derive(Parser, Debug)]
#[command(name = "curemix", version, about = "Bayesian multi-treatment mixture-cure survival models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    #[value(alias = "well-specified")]
    Well,
    #[value(alias = "miss")]
    Misspecified,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML file with [sampler], [fit], [select], [sim], [simulate], [effects] and [report] tables
    #[arg(long)]
    pub config: Option<PathBuf>,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Worker threads for replications, candidate widths or contrasts
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Dataset CSV: time,censored,group,x1..xP
    #[arg(long)]
    pub data: PathBuf,

    /// Read the censoring column as 1 = event, 0 = censored
    #[arg(long)]
    pub flip_censor: bool,

    /// Number of arms when some arm has no subjects in the file
    #[arg(long)]
    pub groups: Option<usize>,

    /// Split file written by `simulate`
    #[arg(long, requires = "part")]
    pub split: Option<PathBuf>,

    /// Side of the split to use
    #[arg(long, value_enum, requires = "split")]
    pub part: Option<Part>,
}

impl DataArgs {
    fn source(&self) -> DataSource {
        DataSource {
            path: self.data.clone(),
            n_groups: self.groups,
            flip_censor: self.flip_censor,
            split: self.split.clone().zip(self.part),
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct SamplerArgs {
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub max_components: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate replicated synthetic datasets with ground truth
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        scenario: Option<ScenarioArg>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
        /// Added to the susceptible probability (0 = high cure, 0.4 = low cure)
        #[arg(long)]
        offset: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        lambda_low: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        lambda_high: Option<f64>,
        /// Covariate table for the misspecified scenario (defaults to the bundled one)
        #[arg(long)]
        covariates: Option<PathBuf>,
        /// Component JSON for the misspecified scenario (defaults to the bundled one)
        #[arg(long)]
        components: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the sampler and write posterior draws
    Fit {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        sampler: SamplerArgs,
        #[arg(long, value_enum)]
        link: Option<LinkKind>,
        /// Hidden-layer width for `--link nn`
        #[arg(long)]
        k: Option<usize>,
        /// Comma-separated components per arm instead of BIC selection
        #[arg(long, value_delimiter = ',')]
        m_per_group: Option<Vec<usize>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Choose the hidden-layer width by held-out predictive log-likelihood
    SelectK {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        sampler: SamplerArgs,
        /// Comma-separated candidate widths
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<usize>>,
        #[arg(long)]
        test_fraction: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Treatment-effect, projection, threshold and survival tables
    Effects {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        /// Draws file written by `fit`
        #[arg(long)]
        draws: PathBuf,
        #[arg(long)]
        horizon: Option<f64>,
        /// Comma-separated group:reference pairs, e.g. 2:1,3:1
        #[arg(long, value_delimiter = ',')]
        pairs: Option<Vec<String>>,
        /// Comma-separated threshold grid
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
        #[arg(long)]
        parts: Option<usize>,
        /// Monte-Carlo estimators instead of closed forms
        #[arg(long)]
        mc: bool,
        #[arg(long)]
        n_mc: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn apply_sampler(cfg: &mut FileConfig, s: &SamplerArgs, seed: Option<u64>) {
    if let Some(v) = s.iterations {
        cfg.sampler.iterations = v;
    }
    if let Some(v) = s.burn_in {
        cfg.sampler.burn_in = v;
    }
    if let Some(v) = s.thin {
        cfg.sampler.thin = v;
    }
    if let Some(v) = s.max_components {
        cfg.sampler.max_components = v;
    }
    if let Some(v) = seed {
        cfg.sampler.seed = v;
    }
}

fn parse_pair(s: &str) -> CliResult<[usize; 2]> {
    let bad = || CliError::Usage(format!("pair `{s}` must look like 2:1"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    Ok([a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?])
}

pub fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate {
            common,
            scenario,
            n,
            reps,
            offset,
            lambda_low,
            lambda_high,
            covariates,
            components,
            out,
        } => {
            let mut cfg = FileConfig::load(common.config.as_deref())?;
            if let Some(s) = scenario {
                cfg.sim.scenario = match s {
                    ScenarioArg::Well => curemix::Scenario::WellSpecified,
                    ScenarioArg::Misspecified => curemix::Scenario::Misspecified,
                };
            }
            if let Some(v) = n {
                cfg.sim.n = v;
            }
            if let Some(v) = reps {
                cfg.simulate.reps = v;
            }
            if let Some(v) = offset {
                cfg.sim.offset = v;
            }
            if let Some(v) = lambda_low {
                cfg.sim.lambda_low = v;
            }
            if let Some(v) = lambda_high {
                cfg.sim.lambda_high = v;
            }
            if let Some(v) = common.seed {
                cfg.sim.seed = v;
            }
            commands::simulate(commands::SimulateRequest {
                config: cfg,
                out,
                jobs: common.jobs,
                covariates,
                components,
            })
        }
        Command::Fit {
            common,
            data,
            sampler,
            link,
            k,
            m_per_group,
            out,
        } => {
            let mut cfg = FileConfig::load(common.config.as_deref())?;
            apply_sampler(&mut cfg, &sampler, common.seed);
            if let Some(v) = link {
                cfg.fit.link = v;
            }
            if let Some(v) = k {
                cfg.fit.k = v;
            }
            if let Some(v) = m_per_group {
                cfg.fit.m_per_group = v;
            }
            commands::fit(commands::FitRequest {
                config: cfg,
                data: data.source(),
                out,
            })
        }
        Command::SelectK {
            common,
            data,
            sampler,
            grid,
            test_fraction,
            out,
        } => {
            let mut cfg = FileConfig::load(common.config.as_deref())?;
            apply_sampler(&mut cfg, &sampler, common.seed);
            if let Some(v) = grid {
                cfg.select.grid = v;
            }
            if let Some(v) = test_fraction {
                cfg.select.test_fraction = v;
            }
            commands::select_k(commands::SelectRequest {
                config: cfg,
                data: data.source(),
                out,
                jobs: common.jobs,
            })
        }
        Command::Effects {
            common,
            data,
            draws,
            horizon,
            pairs,
            thresholds,
            parts,
            mc,
            n_mc,
            out,
        } => {
            let mut cfg = FileConfig::load(common.config.as_deref())?;
            if let Some(v) = horizon {
                cfg.effects.horizon = v;
            }
            if let Some(v) = pairs {
                cfg.report.pairs = v.iter().map(|s| parse_pair(s)).collect::<CliResult<_>>()?;
            }
            if let Some(v) = thresholds {
                cfg.report.thresholds = v;
            }
            if let Some(v) = parts {
                cfg.effects.n_parts = v;
            }
            if mc {
                cfg.effects.use_mc = true;
            }
            if let Some(v) = n_mc {
                cfg.effects.n_mc = v;
            }
            if let Some(v) = common.seed {
                cfg.effects.seed = v;
            }
            commands::effects(commands::EffectsRequest {
                config: cfg,
                draws,
                data: data.source(),
                out,
                jobs: common.jobs,
            })
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("curemix: {e}");
            e.exit_code()
        }
    }
}
