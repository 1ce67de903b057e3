//! Experiment configuration: a flat TOML file whose keys can all be
//! overridden from the command line.
//!
//! ```toml
//! arms = 5
//! horizon = 5000
//! replications = 1000
//! algorithm = "ucb"
//! controller = ["qr-mab"]
//! policy = ["lifo", "fifo"]
//! lambda = [0.1, 0.2, 0.3]
//! mu = [0.3, 0.6, 0.9]
//! master_seed = 7
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};
use sha2::{Digest, Sha256};

use crate::bandit::AlgorithmKind;
use crate::controllers::{ControllerKind, ReplayMode, RunConfig, UfqSource};
use crate::error::{Error, Result};
use crate::metrics::EnergyModel;
use crate::queue::SamplingPolicy;

/// Environment variable that overrides `output_dir` (a `--out` flag still wins).
pub const OUTPUT_DIR_ENV: &str = "QRMAB_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Fifo,
    Lifo,
    Uniform,
    DeltaUniform,
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fifo" => Ok(PolicyKind::Fifo),
            "lifo" => Ok(PolicyKind::Lifo),
            "uniform" => Ok(PolicyKind::Uniform),
            "delta-uniform" => Ok(PolicyKind::DeltaUniform),
            other => Err(Error::config("policy", format!("unknown policy `{other}`"))),
        }
    }
}

fn one_or_many<'de, D, T>(de: D) -> std::result::Result<Vec<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(match OneOrMany::deserialize(de)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    })
}

fn default_arms() -> usize {
    5
}
fn default_horizon() -> u64 {
    5000
}
fn default_replications() -> usize {
    1000
}
fn default_controllers() -> Vec<ControllerKind> {
    vec![ControllerKind::QrMab]
}
fn default_policies() -> Vec<PolicyKind> {
    vec![PolicyKind::Lifo]
}
fn default_unit() -> Vec<f64> {
    vec![1.0]
}
fn default_alpha() -> Vec<f64> {
    vec![0.5]
}
fn default_trace_every() -> u64 {
    50
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_arms")]
    pub arms: usize,
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_algorithm")]
    pub algorithm: AlgorithmKind,
    #[serde(
        rename = "controller",
        default = "default_controllers",
        deserialize_with = "one_or_many"
    )]
    pub controllers: Vec<ControllerKind>,
    #[serde(
        rename = "policy",
        default = "default_policies",
        deserialize_with = "one_or_many"
    )]
    pub policies: Vec<PolicyKind>,
    #[serde(default = "default_unit", deserialize_with = "one_or_many")]
    pub lambda: Vec<f64>,
    #[serde(default = "default_unit", deserialize_with = "one_or_many")]
    pub mu: Vec<f64>,
    #[serde(default = "default_alpha", deserialize_with = "one_or_many")]
    pub alpha: Vec<f64>,
    #[serde(default = "default_unit", deserialize_with = "one_or_many")]
    pub bias_fraction: Vec<f64>,
    #[serde(default)]
    pub ufq_source: UfqSource,
    #[serde(default)]
    pub replay: ReplayMode,
    /// Also run full-feedback and random batches so RLI/ESI can be reported.
    #[serde(default = "default_true")]
    pub references: bool,
    #[serde(default)]
    pub master_seed: u64,
    /// Same means in every replication instead of fresh U(0,1) draws.
    #[serde(default)]
    pub fixed_thetas: Option<Vec<f64>>,
    #[serde(default)]
    pub trace: bool,
    #[serde(default = "default_trace_every")]
    pub trace_every: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_w_update")]
    pub w_update: f64,
    #[serde(default = "default_w_touch")]
    pub w_touch: f64,
    #[serde(default = "default_w_queue")]
    pub w_queue: f64,
    #[serde(default = "default_w_storage")]
    pub w_storage: f64,
}

fn default_algorithm() -> AlgorithmKind {
    AlgorithmKind::Ucb
}
fn default_w_update() -> f64 {
    EnergyModel::default().w_update
}
fn default_w_touch() -> f64 {
    EnergyModel::default().w_touch
}
fn default_w_queue() -> f64 {
    EnergyModel::default().w_queue
}
fn default_w_storage() -> f64 {
    EnergyModel::default().w_storage
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let field = e
                .message()
                .split('`')
                .nth(1)
                .unwrap_or("<file>")
                .to_string();
            Error::config(field, e.message().trim().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn energy_model(&self) -> EnergyModel {
        EnergyModel {
            w_update: self.w_update,
            w_touch: self.w_touch,
            w_queue: self.w_queue,
            w_storage: self.w_storage,
        }
    }

    /// Checks every field; the error names the first offending one.
    pub fn validate(&self) -> Result<()> {
        if self.arms < 2 {
            return Err(Error::config(
                "arms",
                format!("need at least 2 arms, got {}", self.arms),
            ));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon", "must be at least 1"));
        }
        if self.replications == 0 {
            return Err(Error::config("replications", "must be at least 1"));
        }
        if self.trace_every == 0 {
            return Err(Error::config("trace_every", "must be at least 1"));
        }
        for (name, values) in [
            ("lambda", &self.lambda),
            ("mu", &self.mu),
            ("alpha", &self.alpha),
            ("bias_fraction", &self.bias_fraction),
        ] {
            if values.is_empty() {
                return Err(Error::config(name, "list is empty"));
            }
            if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::config(name, format!("{v} is outside [0, 1]")));
            }
        }
        if self.controllers.is_empty() {
            return Err(Error::config("controller", "list is empty"));
        }
        if self.policies.is_empty() {
            return Err(Error::config("policy", "list is empty"));
        }
        let base = self
            .controllers
            .iter()
            .any(|c| matches!(c, ControllerKind::BaseUfq | ControllerKind::BaseUfrb));
        if base
            && !self
                .policies
                .iter()
                .any(|p| matches!(p, PolicyKind::Fifo | PolicyKind::Lifo))
        {
            return Err(Error::config(
                "policy",
                "base-ufq and base-ufrb need fifo or lifo among the policies",
            ));
        }
        if let Some(thetas) = &self.fixed_thetas {
            if thetas.len() != self.arms {
                return Err(Error::config(
                    "fixed_thetas",
                    format!("{} means given for {} arms", thetas.len(), self.arms),
                ));
            }
            if let Some(v) = thetas.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::config(
                    "fixed_thetas",
                    format!("{v} is outside [0, 1]"),
                ));
            }
        }
        self.energy_model().validate()?;
        if self.grid().is_empty() {
            return Err(Error::config("controller", "grid is empty"));
        }
        Ok(())
    }

    fn policies_for(&self, controller: ControllerKind) -> Vec<SamplingPolicy> {
        let mut out = Vec::new();
        for kind in &self.policies {
            match kind {
                PolicyKind::Fifo => out.push(SamplingPolicy::Fifo),
                PolicyKind::Lifo => out.push(SamplingPolicy::Lifo),
                PolicyKind::Uniform | PolicyKind::DeltaUniform
                    if controller != ControllerKind::QrMab => {}
                PolicyKind::Uniform => out.push(SamplingPolicy::Uniform),
                PolicyKind::DeltaUniform => {
                    for &alpha in &self.alpha {
                        for &bias_fraction in &self.bias_fraction {
                            out.push(SamplingPolicy::DeltaUniform {
                                alpha,
                                bias_fraction,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    /// Distinct run configurations, in file order, with reference
    /// controllers appended when `references` is set.
    pub fn grid(&self) -> Vec<RunConfig> {
        let mut grid: Vec<RunConfig> = Vec::new();
        let mut push = |cfg: RunConfig| {
            if !grid.contains(&cfg) {
                grid.push(cfg);
            }
        };
        let mut controllers = self.controllers.clone();
        if self.references {
            for c in [ControllerKind::FullFeedback, ControllerKind::Random] {
                if !controllers.contains(&c) {
                    controllers.push(c);
                }
            }
        }
        for controller in controllers {
            match controller {
                ControllerKind::Random => push(RunConfig::random(self.horizon)),
                ControllerKind::FullFeedback => {
                    push(RunConfig::full_feedback(self.algorithm, self.horizon))
                }
                _ => {
                    for policy in self.policies_for(controller) {
                        for &lambda in &self.lambda {
                            for &mu in &self.mu {
                                push(RunConfig {
                                    controller,
                                    algorithm: self.algorithm,
                                    policy,
                                    lambda,
                                    mu,
                                    horizon: self.horizon,
                                    ufq_source: self.ufq_source,
                                    replay: self.replay,
                                });
                            }
                        }
                    }
                }
            }
        }
        grid
    }

    /// Provenance hash over everything except where outputs go.
    pub fn config_hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        hex16(canonical.to_toml().as_bytes())
    }

    /// Hash of the settings that shape a replication's dynamics but are not
    /// part of any single [`RunConfig`].
    pub fn scenario_hash(&self) -> u64 {
        let text = format!("arms={};fixed_thetas={:?}", self.arms, self.fixed_thetas);
        first_u64(text.as_bytes())
    }
}

/// Stable 64-bit identity of one grid point.
pub fn run_config_hash(config: &RunConfig) -> u64 {
    first_u64(
        toml::to_string(config)
            .expect("run config serializes")
            .as_bytes(),
    )
}

fn first_u64(bytes: &[u8]) -> u64 {
    let d = Sha256::digest(bytes);
    u64::from_le_bytes(d[..8].try_into().expect("32-byte digest"))
}

fn hex16(bytes: &[u8]) -> String {
    let d = Sha256::digest(bytes);
    d[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Command-line overrides; every `Some` replaces the file value.
#[derive(Debug, Clone, Default)]
pub struct ConfigOverrides {
    pub arms: Option<usize>,
    pub horizon: Option<u64>,
    pub replications: Option<usize>,
    pub algorithm: Option<AlgorithmKind>,
    pub controllers: Option<Vec<ControllerKind>>,
    pub policies: Option<Vec<PolicyKind>>,
    pub lambda: Option<Vec<f64>>,
    pub mu: Option<Vec<f64>>,
    pub alpha: Option<Vec<f64>>,
    pub bias_fraction: Option<Vec<f64>>,
    pub ufq_source: Option<UfqSource>,
    pub replay: Option<ReplayMode>,
    pub references: Option<bool>,
    pub master_seed: Option<u64>,
    pub fixed_thetas: Option<Vec<f64>>,
    pub trace: Option<bool>,
    pub trace_every: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub w_update: Option<f64>,
    pub w_touch: Option<f64>,
    pub w_queue: Option<f64>,
    pub w_storage: Option<f64>,
}

impl ConfigOverrides {
    /// Applies overrides; `env_out_dir` sits between the file and `output_dir`.
    pub fn apply(self, cfg: &mut ExperimentConfig, env_out_dir: Option<PathBuf>) {
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })*
            };
        }
        set!(
            arms,
            horizon,
            replications,
            algorithm,
            controllers,
            policies,
            lambda,
            mu,
            alpha,
            bias_fraction,
            ufq_source,
            replay,
            references,
            master_seed,
            trace,
            trace_every,
            w_update,
            w_touch,
            w_queue,
            w_storage
        );
        if let Some(t) = self.fixed_thetas {
            cfg.fixed_thetas = Some(t);
        }
        if let Some(dir) = env_out_dir {
            cfg.output_dir = dir;
        }
        if let Some(dir) = self.output_dir {
            cfg.output_dir = dir;
        }
    }
}
