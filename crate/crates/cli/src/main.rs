//! teamfuse command line: fit combination models, evaluate every team
//! composition under leave-one-case-out cross-validation, simulate synthetic
//! datasets, and emit calibration / diversity / significance reports.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use output::Meta;
use teamfuse::data::TeamSpec;

#[derive(Parser)]
#[command(
    name = "teamfuse",
    version,
    about = "Fuse human and machine judgments into team decisions"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Judgments CSV (long format).
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Ground-truth CSV.
    #[arg(long, global = true)]
    truth: Option<PathBuf>,
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// RNG seed (required here or in the config; there is no wall-clock default).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Fail on missing judgments instead of imputing zero features.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one team's combination model on the full dataset.
    Fit {
        /// Comma-separated team members.
        #[arg(long, value_delimiter = ',')]
        team: Vec<String>,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Evaluate team compositions with leave-one-case-out cross-validation.
    Teams {
        /// "all" or semicolon-separated member lists ("h,m1;h,m2").
        #[arg(long)]
        teams: Option<String>,
        /// Keep only teams containing this member.
        #[arg(long)]
        must_include: Option<String>,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Sample a synthetic dataset from the generative model in the config.
    Simulate {
        #[arg(long)]
        n_cases: Option<usize>,
        /// Number of classes.
        #[arg(long)]
        classes: Option<usize>,
    },
    /// Calibration, diversity and significance tables.
    Report {
        /// Team-results JSON files to compare (repeatable).
        #[arg(long)]
        results: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// Combination model: logistic or bayes.
    #[arg(long)]
    model: Option<String>,
    /// Feature mode: confidence, no_confidence, or squash.
    #[arg(long)]
    mode: Option<String>,
    /// L2 regularization strength on non-intercept weights.
    #[arg(long)]
    l2: Option<f64>,
    /// Re-optimize squash strengths on each training split.
    #[arg(long)]
    optimize_squash: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<teamfuse::Error>() {
            return if e.is_usage() { 2 } else { 1 };
        }
        if cause.downcast_ref::<toml::de::Error>().is_some() {
            return 2;
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = RunConfig::load(cli.global.config.as_deref())?;

    // flags win over config values
    if let Some(p) = &cli.global.data {
        cfg.data.judgments = Some(p.clone());
    }
    if let Some(p) = &cli.global.truth {
        cfg.data.truth = Some(p.clone());
    }
    if let Some(s) = cli.global.seed {
        cfg.seed = Some(s);
    }
    match &cli.command {
        Command::Fit { model, .. } | Command::Teams { model, .. } => {
            if let Some(kind) = &model.model {
                cfg.model.kind = kind.clone();
            }
            if let Some(mode) = &model.mode {
                cfg.features.mode = mode.clone();
            }
            if let Some(l2) = model.l2 {
                cfg.model.l2 = l2;
            }
            if model.optimize_squash {
                cfg.squash.optimize = true;
            }
        }
        Command::Simulate { n_cases, classes } => {
            if let Some(sim) = cfg.simulate.as_mut() {
                if let Some(n) = n_cases {
                    sim.n_cases = *n;
                }
                if let Some(l) = classes {
                    sim.l = *l;
                }
            }
        }
        Command::Report { .. } => {}
    }
    if let Command::Teams {
        teams,
        must_include,
        ..
    } = &cli.command
    {
        if let Some(spec) = teams {
            if spec == "all" {
                cfg.teams.select = "all".into();
            } else {
                cfg.teams.select = "list".into();
                cfg.teams.list = spec
                    .split(';')
                    .map(|t| t.split(',').map(|m| m.trim().to_string()).collect())
                    .collect();
            }
        }
        if let Some(name) = must_include {
            cfg.teams.must_include = Some(name.clone());
        }
    }

    let seed = cfg.seed.ok_or_else(|| {
        teamfuse::Error::Config("a seed is required (--seed or seed = N in the config)".into())
    })?;

    if let Some(jobs) = cli.global.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .ok();
    }

    std::fs::create_dir_all(&cli.global.out)?;
    let meta = Meta {
        config_hash: cfg.hash(),
        seed,
    };

    match &cli.command {
        Command::Fit { team, .. } => {
            if team.is_empty() {
                return Err(
                    teamfuse::Error::Config("--team requires at least one member".into()).into(),
                );
            }
            let spec = TeamSpec {
                members: team.clone(),
            };
            commands::cmd_fit(&cfg, &meta, &cli.global.out, &spec, cli.global.strict, seed)
        }
        Command::Teams { .. } => {
            commands::cmd_teams(&cfg, &meta, &cli.global.out, cli.global.strict, seed)
        }
        Command::Simulate { .. } => commands::cmd_simulate(&cfg, &meta, &cli.global.out, seed),
        Command::Report { results } => commands::cmd_report(&cfg, &meta, &cli.global.out, results),
    }
}
