use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use qrmab::config::{ConfigOverrides, ExperimentConfig, PolicyKind, OUTPUT_DIR_ENV};
use qrmab::experiment::{run_experiment, run_outcomes, write_outputs, Scenario};
use qrmab::metrics::{expected_observations, mean_std};
use qrmab::par::Execution;
use qrmab::queue::SamplingPolicy;
use qrmab::{AlgorithmKind, ControllerKind, ReplayMode, RunConfig, UfqSource};

#[derive(Parser)]
#[command(
    name = "qrmab",
    version,
    about = "Queue-based remote-controlled bandit experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write summary/trace CSVs.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Run replications on one thread.
        #[arg(long)]
        serial: bool,
    },
    /// Parse and check a config without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Compare the mean number of served packets with min(lambda, mu) * T.
    Prop1 {
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        horizon: u64,
        #[arg(long, default_value_t = 500)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        arms: usize,
        #[arg(long, default_value = "ucb")]
        algorithm: AlgorithmKind,
        #[arg(long, default_value = "fifo")]
        policy: PolicyKind,
    },
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    arms: Option<usize>,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    algorithm: Option<AlgorithmKind>,
    #[arg(long, value_delimiter = ',')]
    controller: Option<Vec<ControllerKind>>,
    #[arg(long, value_delimiter = ',')]
    policy: Option<Vec<PolicyKind>>,
    #[arg(long, value_delimiter = ',')]
    lambda: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    mu: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    bias_fraction: Option<Vec<f64>>,
    #[arg(long, value_parser = parse_ufq_source)]
    ufq_source: Option<UfqSource>,
    #[arg(long, value_parser = parse_replay)]
    replay: Option<ReplayMode>,
    #[arg(long)]
    references: Option<bool>,
    #[arg(long, value_delimiter = ',')]
    fixed_thetas: Option<Vec<f64>>,
    #[arg(long)]
    trace: Option<bool>,
    #[arg(long)]
    trace_every: Option<u64>,
    #[arg(long)]
    w_update: Option<f64>,
    #[arg(long)]
    w_touch: Option<f64>,
    #[arg(long)]
    w_queue: Option<f64>,
    #[arg(long)]
    w_storage: Option<f64>,
}

fn parse_ufq_source(s: &str) -> Result<UfqSource, String> {
    match s {
        "played-arm" => Ok(UfqSource::PlayedArm),
        "any-arm" => Ok(UfqSource::AnyArm),
        _ => Err(format!("expected played-arm or any-arm, got `{s}`")),
    }
}

fn parse_replay(s: &str) -> Result<ReplayMode, String> {
    match s {
        "resample" => Ok(ReplayMode::Resample),
        "aggregate" => Ok(ReplayMode::Aggregate),
        _ => Err(format!("expected resample or aggregate, got `{s}`")),
    }
}

impl Overrides {
    fn into_config_overrides(self) -> ConfigOverrides {
        ConfigOverrides {
            arms: self.arms,
            horizon: self.horizon,
            replications: self.reps,
            algorithm: self.algorithm,
            controllers: self.controller,
            policies: self.policy,
            lambda: self.lambda,
            mu: self.mu,
            alpha: self.alpha,
            bias_fraction: self.bias_fraction,
            ufq_source: self.ufq_source,
            replay: self.replay,
            references: self.references,
            master_seed: self.seed,
            fixed_thetas: self.fixed_thetas,
            trace: self.trace,
            trace_every: self.trace_every,
            output_dir: self.out,
            w_update: self.w_update,
            w_touch: self.w_touch,
            w_queue: self.w_queue,
            w_storage: self.w_storage,
        }
    }
}

fn load(path: &PathBuf, overrides: Overrides) -> Result<(ExperimentConfig, String)> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = ExperimentConfig::from_toml(&text)?;
    let env_out = std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from);
    overrides.into_config_overrides().apply(&mut cfg, env_out);
    cfg.validate()?;
    Ok((cfg, text))
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { config, overrides } => {
            let (cfg, _) = load(&config, overrides)?;
            println!(
                "ok: {} grid points x {} replications (config {})",
                cfg.grid().len(),
                cfg.replications,
                cfg.config_hash()
            );
        }
        Command::Run {
            config,
            overrides,
            serial,
        } => {
            let (cfg, text) = load(&config, overrides)?;
            let exec = if serial {
                Execution::Serial
            } else {
                Execution::Parallel
            };
            let result = run_experiment(&cfg, exec)?;
            for path in write_outputs(&result, Some(&text))? {
                println!("wrote {}", path.display());
            }
        }
        Command::Prop1 {
            lambda,
            mu,
            horizon,
            reps,
            seed,
            arms,
            algorithm,
            policy,
        } => {
            let policy = match policy {
                PolicyKind::Fifo => SamplingPolicy::Fifo,
                PolicyKind::Lifo => SamplingPolicy::Lifo,
                PolicyKind::Uniform => SamplingPolicy::Uniform,
                PolicyKind::DeltaUniform => SamplingPolicy::delta_uniform(0.5, 1.0)?,
            };
            anyhow::ensure!(reps >= 1, "--reps must be at least 1");
            let run_config = RunConfig::qr_mab(algorithm, policy, lambda, mu, horizon);
            run_config.validate()?;
            let outcomes = run_outcomes(
                &run_config,
                &Scenario::new(arms, seed),
                reps,
                Execution::Parallel,
            )?;
            let counts: Vec<f64> = outcomes.iter().map(|o| o.observations as f64).collect();
            let (mean, std) = mean_std(&counts);
            let expected = expected_observations(lambda, mu, horizon);
            let rel = if expected > 0.0 {
                (mean - expected) / expected
            } else {
                mean
            };
            println!("lambda={lambda} mu={mu} T={horizon} reps={reps}");
            println!("observed mean N_T = {mean} (std {std})");
            println!("expected min(lambda, mu) * T = {expected}");
            println!("relative deviation = {rel}");
        }
    }
    Ok(())
}
