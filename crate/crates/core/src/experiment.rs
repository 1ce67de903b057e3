//! Monte Carlo runner: expands a config into a grid, runs every grid point
//! for the requested replications and writes summary/trace CSVs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::bandit::draw_thetas;
use crate::config::{run_config_hash, ExperimentConfig};
use crate::controllers::{self, ControllerKind, RunConfig, RunTrace};
use crate::error::{Error, Result};
use crate::metrics::{summarize, EnergyModel, References, RunOutcome, SummaryRow};
use crate::par::{map_indexed, Execution};
use crate::seed::{derive_substream, theta_rng, RunId, RunSeed};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const TRACE_FILE: &str = "traces.csv";
pub const METADATA_FILE: &str = "metadata.toml";

pub const SUMMARY_HEADER: [&str; 24] = [
    "policy",
    "controller",
    "algorithm",
    "lambda",
    "mu",
    "alpha",
    "bias_fraction",
    "T",
    "reps",
    "reward_mean",
    "reward_std",
    "regret_mean",
    "regret_std",
    "nobs_mean",
    "energy_mean",
    "energy_std",
    "rli",
    "esi",
    "alg_updates",
    "packet_touches",
    "queue_ops",
    "storage_integral",
    "config_hash",
    "wallclock_s",
];

pub const TRACE_HEADER: [&str; 11] = [
    "config_hash",
    "controller",
    "algorithm",
    "policy",
    "lambda",
    "mu",
    "alpha",
    "bias_fraction",
    "replication",
    "slot",
    "regret",
];

/// Settings shared by every grid point of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub arms: usize,
    pub master_seed: u64,
    pub scenario_hash: u64,
    pub fixed_thetas: Option<Vec<f64>>,
}

impl Scenario {
    pub fn new(arms: usize, master_seed: u64) -> Self {
        Self {
            arms,
            master_seed,
            scenario_hash: 0,
            fixed_thetas: None,
        }
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            arms: cfg.arms,
            master_seed: cfg.master_seed,
            scenario_hash: cfg.scenario_hash(),
            fixed_thetas: cfg.fixed_thetas.clone(),
        }
    }

    pub fn thetas(&self, replication: u64) -> Vec<f64> {
        match &self.fixed_thetas {
            Some(t) => t.clone(),
            None => draw_thetas(self.arms, &mut theta_rng(self.master_seed, replication)),
        }
    }

    pub fn seed(&self, config: &RunConfig, replication: u64) -> RunSeed {
        derive_substream(
            self.master_seed,
            RunId {
                config_hash: self.scenario_hash,
                grid_point: run_config_hash(config),
                replication,
            },
        )
    }

    /// Full trace of one replication.
    pub fn run(&self, config: &RunConfig, replication: u64) -> Result<RunTrace> {
        controllers::run(
            config,
            self.thetas(replication),
            &self.seed(config, replication),
        )
    }
}

/// What survives of one replication once its trace is dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub outcome: RunOutcome,
    /// `(slot, cumulative regret)` at the thinned slots.
    pub regret_points: Vec<(u64, f64)>,
}

/// Slots kept when recording every `every`-th slot: `every, 2 every, ..., T`.
pub fn thinned_slots(horizon: u64, every: u64) -> impl Iterator<Item = u64> {
    (1..=horizon).filter(move |t| t % every == 0 || *t == horizon)
}

/// Runs `replications` replications of `config`; `trace_every` keeps
/// thinned regret trajectories.
pub fn run_batch(
    config: &RunConfig,
    scenario: &Scenario,
    replications: usize,
    trace_every: Option<u64>,
    exec: Execution,
) -> Result<Vec<Replication>> {
    config.validate()?;
    map_indexed(exec, replications, |r| {
        let trace = scenario.run(config, r as u64)?;
        let regret_points = match trace_every {
            None => Vec::new(),
            Some(every) => {
                let regret = trace.regret();
                thinned_slots(trace.horizon(), every)
                    .map(|t| (t, regret[t as usize - 1]))
                    .collect()
            }
        };
        Ok(Replication {
            outcome: RunOutcome::from_trace(&trace),
            regret_points,
        })
    })
    .into_iter()
    .collect()
}

/// Outcomes only.
pub fn run_outcomes(
    config: &RunConfig,
    scenario: &Scenario,
    replications: usize,
    exec: Execution,
) -> Result<Vec<RunOutcome>> {
    Ok(run_batch(config, scenario, replications, None, exec)?
        .into_iter()
        .map(|r| r.outcome)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub summary: SummaryRow,
    pub wallclock_s: f64,
    pub regret_traces: Vec<Vec<(u64, f64)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub energy_model: EnergyModel,
    pub grid: Vec<GridResult>,
    pub wallclock_s: f64,
}

impl ExperimentResult {
    pub fn references(&self) -> Option<References> {
        let find = |c: ControllerKind| self.grid.iter().find(|g| g.summary.config.controller == c);
        let full = find(ControllerKind::FullFeedback)?;
        let random = find(ControllerKind::Random)?;
        Some(References::from_batches(&full.summary, &random.summary))
    }
}

pub fn run_experiment(cfg: &ExperimentConfig, exec: Execution) -> Result<ExperimentResult> {
    cfg.validate()?;
    let started = Instant::now();
    let scenario = Scenario::from_config(cfg);
    let model = cfg.energy_model();
    let trace_every = cfg.trace.then_some(cfg.trace_every);

    let mut grid = Vec::new();
    for run_config in cfg.grid() {
        let t0 = Instant::now();
        let reps = run_batch(&run_config, &scenario, cfg.replications, trace_every, exec)?;
        let (outcomes, regret_traces): (Vec<_>, Vec<_>) = reps
            .into_iter()
            .map(|r| (r.outcome, r.regret_points))
            .unzip();
        grid.push(GridResult {
            summary: summarize(&outcomes, &model, None)?,
            wallclock_s: t0.elapsed().as_secs_f64(),
            regret_traces,
        });
    }

    let mut result = ExperimentResult {
        config: cfg.clone(),
        config_hash: cfg.config_hash(),
        energy_model: model,
        grid,
        wallclock_s: 0.0,
    };
    if let Some(refs) = result.references() {
        for g in &mut result.grid {
            g.summary.rli =
                crate::metrics::rli(g.summary.reward_mean, refs.reward_min, refs.reward_max).ok();
            g.summary.esi =
                crate::metrics::esi(g.summary.energy_mean, refs.energy_min, refs.energy_max).ok();
        }
    }
    result.wallclock_s = started.elapsed().as_secs_f64();
    Ok(result)
}

fn num(x: f64) -> String {
    x.to_string()
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Columns that describe the network side; blank for random play.
fn queue_columns(c: &RunConfig) -> [String; 5] {
    if c.controller == ControllerKind::Random {
        return Default::default();
    }
    [
        c.policy.name().to_string(),
        num(c.lambda),
        num(c.mu),
        opt(c.policy.alpha()),
        opt(c.policy.bias_fraction()),
    ]
}

fn algorithm_column(c: &RunConfig) -> &'static str {
    match c.controller {
        ControllerKind::Random => "",
        _ => c.algorithm.as_str(),
    }
}

pub fn summary_record(row: &SummaryRow, config_hash: &str, wallclock_s: f64) -> Vec<String> {
    let c = &row.config;
    let [policy, lambda, mu, alpha, bias] = queue_columns(c);
    vec![
        policy,
        c.controller.to_string(),
        algorithm_column(c).to_string(),
        lambda,
        mu,
        alpha,
        bias,
        c.horizon.to_string(),
        row.replications.to_string(),
        num(row.reward_mean),
        num(row.reward_std),
        num(row.regret_mean),
        num(row.regret_std),
        num(row.nobs_mean),
        num(row.energy_mean),
        num(row.energy_std),
        opt(row.rli),
        opt(row.esi),
        num(row.alg_updates_mean),
        num(row.packet_touches_mean),
        num(row.queue_ops_mean),
        num(row.storage_integral_mean),
        config_hash.to_string(),
        num(wallclock_s),
    ]
}

pub fn write_summary<W: Write>(result: &ExperimentResult, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for g in &result.grid {
        w.write_record(summary_record(
            &g.summary,
            &result.config_hash,
            g.wallclock_s,
        ))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_traces<W: Write>(result: &ExperimentResult, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for g in &result.grid {
        let c = &g.summary.config;
        let [policy, lambda, mu, alpha, bias] = queue_columns(c);
        for (rep, points) in g.regret_traces.iter().enumerate() {
            for &(slot, regret) in points {
                w.write_record([
                    result.config_hash.as_str(),
                    c.controller.as_str(),
                    algorithm_column(c),
                    &policy,
                    &lambda,
                    &mu,
                    &alpha,
                    &bias,
                    &rep.to_string(),
                    &slot.to_string(),
                    &num(regret),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Metadata<'a> {
    config_hash: &'a str,
    grid_points: usize,
    wallclock_s: f64,
    energy_model: &'a EnergyModel,
    config_source: Option<&'a str>,
    config: &'a ExperimentConfig,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::config("output_dir", format!("{}: {e}", path.display()))
}

/// Writes summary, optional traces and metadata into `cfg.output_dir`.
/// `source` is the config file text, embedded verbatim for provenance.
pub fn write_outputs(result: &ExperimentResult, source: Option<&str>) -> Result<Vec<PathBuf>> {
    let dir = &result.config.output_dir;
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut written = Vec::new();

    let path = dir.join(SUMMARY_FILE);
    let file = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
    write_summary(result, file).map_err(|e| io_err(&path, e))?;
    written.push(path);

    if result.config.trace {
        let path = dir.join(TRACE_FILE);
        let file = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
        write_traces(result, std::io::BufWriter::new(file)).map_err(|e| io_err(&path, e))?;
        written.push(path);
    }

    let path = dir.join(METADATA_FILE);
    let meta = Metadata {
        config_hash: &result.config_hash,
        grid_points: result.grid.len(),
        wallclock_s: result.wallclock_s,
        energy_model: &result.energy_model,
        config_source: source,
        config: &result.config,
    };
    let text = toml::to_string(&meta).map_err(|e| io_err(&path, e))?;
    fs::write(&path, text).map_err(|e| io_err(&path, e))?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandit::AlgorithmKind;
    use crate::queue::SamplingPolicy;

    #[test]
    fn thinning_keeps_the_last_slot() {
        assert_eq!(thinned_slots(10, 3).collect::<Vec<_>>(), vec![3, 6, 9, 10]);
        assert_eq!(thinned_slots(5000, 50).count(), 100);
        assert_eq!(thinned_slots(7, 1).count(), 7);
    }

    #[test]
    fn batch_is_independent_of_execution_mode() {
        let scenario = Scenario::new(5, 99);
        let cfg = RunConfig::qr_mab(AlgorithmKind::Ts, SamplingPolicy::Uniform, 0.7, 0.5, 400);
        let a = run_batch(&cfg, &scenario, 24, Some(40), Execution::Serial).unwrap();
        let b = run_batch(&cfg, &scenario, 24, Some(40), Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].regret_points.len(), 10);
    }

    #[test]
    fn random_single_replication_summary() {
        let cfg = ExperimentConfig::from_toml(
            "controller = \"random\"\nreplications = 1\nhorizon = 300\nreferences = false",
        )
        .unwrap();
        let result = run_experiment(&cfg, Execution::Serial).unwrap();
        assert_eq!(result.grid.len(), 1);
        let row = &result.grid[0].summary;
        assert_eq!(
            (row.reward_std, row.regret_std, row.energy_std),
            (0.0, 0.0, 0.0)
        );
        let rec = summary_record(row, "h", 0.0);
        assert!(rec[..7]
            .iter()
            .enumerate()
            .all(|(i, v)| v.is_empty() == [true, false, true, true, true, true, true][i]));
        assert_eq!(rec[16], "");
    }
}
