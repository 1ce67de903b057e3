//! Closed-loop controllers: the queue-based remote controlled bandit loop,
//! the two agent-side storage baselines, and the two reference controllers
//! (full feedback and random play).
//!
//! Every controller runs the same per-slot order: select, play, admit,
//! serve/update. Each random process reads its own stream of the run seed,
//! so controllers that share a seed also share reward, admission and
//! service draws.

use std::collections::VecDeque;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bandit::{AlgorithmKind, AlgorithmState, ArmId, BanditEnv};
use crate::error::{check_probability, Error, Result};
use crate::metrics::{self, EnergyCounters};
use crate::queue::{GeoGeoQueue, Packet, SamplingPolicy};
use crate::seed::{RunSeed, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    QrMab,
    BaseUfq,
    BaseUfrb,
    Random,
    FullFeedback,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 5] = [
        ControllerKind::QrMab,
        ControllerKind::BaseUfq,
        ControllerKind::BaseUfrb,
        ControllerKind::Random,
        ControllerKind::FullFeedback,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::QrMab => "qr-mab",
            ControllerKind::BaseUfq => "base-ufq",
            ControllerKind::BaseUfrb => "base-ufrb",
            ControllerKind::Random => "random",
            ControllerKind::FullFeedback => "full-feedback",
        }
    }

    /// Whether the controller reads a network queue configured by lambda, mu and a policy.
    pub fn uses_queue(self) -> bool {
        matches!(
            self,
            ControllerKind::QrMab | ControllerKind::BaseUfq | ControllerKind::BaseUfrb
        )
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ControllerKind::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::config("controller", format!("unknown controller `{s}`")))
    }
}

/// Which arm queue UpdateFrom-Queue pops from each slot.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UfqSource {
    /// Only the queue of the arm played this slot.
    #[default]
    PlayedArm,
    /// The arm queue whose head packet is oldest.
    AnyArm,
}

/// How UpdateFrom-ReplayBuffer feeds the algorithm from retained packets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReplayMode {
    /// Each slot, if the played arm has retained packets, one of them is
    /// drawn uniformly and fed to the algorithm again.
    #[default]
    Resample,
    /// Each slot the statistics are rebuilt from every retained packet.
    /// The resulting state equals folding in each transferred packet once.
    Aggregate,
}

/// Everything that defines one replication apart from its seed and means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub controller: ControllerKind,
    pub algorithm: AlgorithmKind,
    pub policy: SamplingPolicy,
    pub lambda: f64,
    pub mu: f64,
    pub horizon: u64,
    #[serde(default)]
    pub ufq_source: UfqSource,
    #[serde(default)]
    pub replay: ReplayMode,
}

impl RunConfig {
    pub fn qr_mab(
        algorithm: AlgorithmKind,
        policy: SamplingPolicy,
        lambda: f64,
        mu: f64,
        horizon: u64,
    ) -> Self {
        Self {
            controller: ControllerKind::QrMab,
            algorithm,
            policy,
            lambda,
            mu,
            horizon,
            ufq_source: UfqSource::default(),
            replay: ReplayMode::default(),
        }
    }

    pub fn base_ufq(
        algorithm: AlgorithmKind,
        policy: SamplingPolicy,
        lambda: f64,
        mu: f64,
        horizon: u64,
    ) -> Self {
        Self {
            controller: ControllerKind::BaseUfq,
            ..Self::qr_mab(algorithm, policy, lambda, mu, horizon)
        }
    }

    pub fn base_ufrb(
        algorithm: AlgorithmKind,
        policy: SamplingPolicy,
        lambda: f64,
        mu: f64,
        horizon: u64,
    ) -> Self {
        Self {
            controller: ControllerKind::BaseUfrb,
            ..Self::qr_mab(algorithm, policy, lambda, mu, horizon)
        }
    }

    pub fn full_feedback(algorithm: AlgorithmKind, horizon: u64) -> Self {
        Self {
            controller: ControllerKind::FullFeedback,
            ..Self::qr_mab(algorithm, SamplingPolicy::Fifo, 1.0, 1.0, horizon)
        }
    }

    /// `algorithm` is irrelevant for random play and fixed to UCB.
    pub fn random(horizon: u64) -> Self {
        Self {
            controller: ControllerKind::Random,
            ..Self::qr_mab(AlgorithmKind::Ucb, SamplingPolicy::Fifo, 0.0, 0.0, horizon)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::ZeroHorizon);
        }
        check_probability("lambda", self.lambda)?;
        check_probability("mu", self.mu)?;
        self.policy.validate()?;
        if matches!(
            self.controller,
            ControllerKind::BaseUfq | ControllerKind::BaseUfrb
        ) && !matches!(self.policy, SamplingPolicy::Fifo | SamplingPolicy::Lifo)
        {
            return Err(Error::UnsupportedPolicy {
                policy: self.policy.to_string(),
                controller: self.controller.as_str(),
            });
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match self.controller {
            ControllerKind::Random => format!("random T={}", self.horizon),
            ControllerKind::FullFeedback => {
                format!("full-feedback/{} T={}", self.algorithm, self.horizon)
            }
            c => format!(
                "{c}/{}/{} lambda={} mu={} T={}",
                self.algorithm, self.policy, self.lambda, self.mu, self.horizon
            ),
        }
    }
}

/// Everything that happened in one slot.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: u64,
    pub arm: ArmId,
    /// True mean of the played arm.
    pub mean: f64,
    pub reward: u8,
    pub admitted: bool,
    /// Packet removed from the network queue this slot.
    pub served: Option<Packet>,
    /// Packet the algorithm was updated with this slot.
    pub observed: Option<Packet>,
    /// Statistics were rebuilt from the replay buffer this slot.
    pub recomputed: bool,
    pub queue_len: usize,
    /// Packets held in agent-side storage at the end of the slot.
    pub agent_storage: usize,
    pub energy: EnergyCounters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub config: RunConfig,
    pub thetas: Vec<f64>,
    pub records: Vec<SlotRecord>,
    /// `None` for random play, which keeps no statistics.
    pub final_state: Option<AlgorithmState>,
    pub counters: EnergyCounters,
}

impl RunTrace {
    pub fn horizon(&self) -> u64 {
        self.records.len() as u64
    }

    pub fn total_reward(&self) -> u64 {
        self.records.iter().map(|r| u64::from(r.reward)).sum()
    }

    /// Packets served from the network queue.
    pub fn observations(&self) -> u64 {
        self.records.iter().filter(|r| r.served.is_some()).count() as u64
    }

    pub fn regret(&self) -> Vec<f64> {
        metrics::pseudo_regret(&self.records, &self.thetas)
            .expect("controllers only play valid arms")
    }

    pub fn final_regret(&self) -> f64 {
        metrics::final_regret(self.records.iter().map(|r| r.arm), &self.thetas)
    }

    pub fn played_arms(&self) -> impl Iterator<Item = ArmId> + '_ {
        self.records.iter().map(|r| r.arm)
    }
}

/// Per-arm FIFO buffers held by the agent.
#[derive(Debug, Clone, Default)]
pub struct ArmQueues {
    queues: Vec<VecDeque<Packet>>,
    held: usize,
}

impl ArmQueues {
    pub fn new(arms: usize) -> Self {
        Self {
            queues: vec![VecDeque::new(); arms],
            held: 0,
        }
    }

    pub fn push(&mut self, packet: Packet) {
        self.queues[packet.arm.0].push_back(packet);
        self.held += 1;
    }

    pub fn pop(&mut self, arm: ArmId) -> Option<Packet> {
        let p = self.queues[arm.0].pop_front();
        if p.is_some() {
            self.held -= 1;
        }
        p
    }

    pub fn arm(&self, arm: ArmId) -> &VecDeque<Packet> {
        &self.queues[arm.0]
    }

    /// Arm whose head packet was born earliest.
    pub fn oldest_head(&self) -> Option<ArmId> {
        self.queues
            .iter()
            .enumerate()
            .filter_map(|(a, q)| q.front().map(|p| (p.birth_slot, a)))
            .min()
            .map(|(_, a)| ArmId(a))
    }

    pub fn len(&self) -> usize {
        self.held
    }

    pub fn is_empty(&self) -> bool {
        self.held == 0
    }
}

/// Random streams of one run, one per process.
struct Streams {
    admission: rand_chacha::ChaCha8Rng,
    service: rand_chacha::ChaCha8Rng,
    sampling: rand_chacha::ChaCha8Rng,
    algorithm: rand_chacha::ChaCha8Rng,
}

impl Streams {
    fn new(seed: &RunSeed) -> Self {
        Self {
            admission: seed.stream(Stream::Admission),
            service: seed.stream(Stream::Service),
            sampling: seed.stream(Stream::Sampling),
            algorithm: seed.stream(Stream::Algorithm),
        }
    }
}

/// Builds the environment a run with `seed` plays against.
pub fn make_env(thetas: Vec<f64>, seed: &RunSeed) -> Result<BanditEnv> {
    BanditEnv::new(thetas, seed.stream(Stream::Rewards))
}

/// Runs one replication of `config` against `thetas`.
pub fn run(config: &RunConfig, thetas: Vec<f64>, seed: &RunSeed) -> Result<RunTrace> {
    config.validate()?;
    let env = make_env(thetas, seed)?;
    match config.controller {
        ControllerKind::QrMab | ControllerKind::FullFeedback => qr_mab_loop(*config, env, seed),
        ControllerKind::BaseUfq => ufq_loop(*config, env, seed),
        ControllerKind::BaseUfrb => ufrb_loop(*config, env, seed),
        ControllerKind::Random => random_loop(*config, env, seed),
    }
}

pub fn run_qr_mab(
    env: BanditEnv,
    algorithm: AlgorithmKind,
    policy: SamplingPolicy,
    lambda: f64,
    mu: f64,
    horizon: u64,
    seed: &RunSeed,
) -> Result<RunTrace> {
    let config = RunConfig::qr_mab(algorithm, policy, lambda, mu, horizon);
    config.validate()?;
    qr_mab_loop(config, env, seed)
}

pub fn run_full_feedback(
    env: BanditEnv,
    algorithm: AlgorithmKind,
    horizon: u64,
    seed: &RunSeed,
) -> Result<RunTrace> {
    let config = RunConfig::full_feedback(algorithm, horizon);
    config.validate()?;
    qr_mab_loop(config, env, seed)
}

#[allow(clippy::too_many_arguments)]
pub fn run_base_update_from_queue(
    env: BanditEnv,
    algorithm: AlgorithmKind,
    net_policy: SamplingPolicy,
    lambda: f64,
    mu: f64,
    horizon: u64,
    source: UfqSource,
    seed: &RunSeed,
) -> Result<RunTrace> {
    let config = RunConfig {
        ufq_source: source,
        ..RunConfig::base_ufq(algorithm, net_policy, lambda, mu, horizon)
    };
    config.validate()?;
    ufq_loop(config, env, seed)
}

#[allow(clippy::too_many_arguments)]
pub fn run_base_update_from_replay_buffer(
    env: BanditEnv,
    algorithm: AlgorithmKind,
    net_policy: SamplingPolicy,
    lambda: f64,
    mu: f64,
    horizon: u64,
    mode: ReplayMode,
    seed: &RunSeed,
) -> Result<RunTrace> {
    let config = RunConfig {
        replay: mode,
        ..RunConfig::base_ufrb(algorithm, net_policy, lambda, mu, horizon)
    };
    config.validate()?;
    ufrb_loop(config, env, seed)
}

pub fn run_random(env: BanditEnv, horizon: u64, seed: &RunSeed) -> Result<RunTrace> {
    let config = RunConfig::random(horizon);
    config.validate()?;
    random_loop(config, env, seed)
}

/// Select, play and admit: the first three steps shared by every queued controller.
fn play_and_admit(
    t: u64,
    state: &AlgorithmState,
    env: &mut BanditEnv,
    queue: &mut GeoGeoQueue,
    streams: &mut Streams,
) -> SlotRecord {
    let arm = state.select(&mut streams.algorithm);
    let reward = env.pull(arm).expect("algorithm selects a valid arm");
    let packet = Packet {
        arm,
        reward,
        birth_slot: t,
    };
    let admitted = queue.admit(packet, &mut streams.admission);
    SlotRecord {
        slot: t,
        arm,
        mean: env.thetas()[arm.0],
        reward,
        admitted,
        energy: EnergyCounters {
            queue_ops: u64::from(admitted),
            ..EnergyCounters::default()
        },
        ..SlotRecord::default()
    }
}

fn finish(
    config: RunConfig,
    env: BanditEnv,
    records: Vec<SlotRecord>,
    state: Option<AlgorithmState>,
) -> RunTrace {
    let counters = records
        .iter()
        .fold(EnergyCounters::default(), |acc, r| acc + r.energy);
    RunTrace {
        config,
        thetas: env.thetas().to_vec(),
        records,
        final_state: state,
        counters,
    }
}

fn qr_mab_loop(config: RunConfig, mut env: BanditEnv, seed: &RunSeed) -> Result<RunTrace> {
    let mut streams = Streams::new(seed);
    let mut state = AlgorithmState::new(config.algorithm, env.arms());
    let mut queue = GeoGeoQueue::new(config.lambda, config.mu)?;
    let mut records = Vec::with_capacity(config.horizon as usize);

    for t in 1..=config.horizon {
        let mut rec = play_and_admit(t, &state, &mut env, &mut queue, &mut streams);
        if let Some(p) =
            queue.try_serve(&config.policy, &mut streams.service, &mut streams.sampling)
        {
            state.update(p.arm, p.reward)?;
            rec.served = Some(p);
            rec.observed = Some(p);
            rec.energy.queue_ops += 1;
            rec.energy.alg_updates += 1;
            rec.energy.packet_touches += 1;
        }
        rec.queue_len = queue.len();
        records.push(rec);
    }
    Ok(finish(config, env, records, Some(state)))
}

fn ufq_loop(config: RunConfig, mut env: BanditEnv, seed: &RunSeed) -> Result<RunTrace> {
    let mut streams = Streams::new(seed);
    let mut state = AlgorithmState::new(config.algorithm, env.arms());
    let mut queue = GeoGeoQueue::new(config.lambda, config.mu)?;
    let mut arm_queues = ArmQueues::new(env.arms());
    let mut records = Vec::with_capacity(config.horizon as usize);

    for t in 1..=config.horizon {
        let mut rec = play_and_admit(t, &state, &mut env, &mut queue, &mut streams);
        if let Some(p) =
            queue.try_serve(&config.policy, &mut streams.service, &mut streams.sampling)
        {
            arm_queues.push(p);
            rec.served = Some(p);
            rec.energy.queue_ops += 2;
        }
        let source = match config.ufq_source {
            UfqSource::PlayedArm => Some(rec.arm),
            UfqSource::AnyArm => arm_queues.oldest_head(),
        };
        if let Some(p) = source.and_then(|a| arm_queues.pop(a)) {
            state.update(p.arm, p.reward)?;
            rec.observed = Some(p);
            rec.energy.queue_ops += 1;
            rec.energy.alg_updates += 1;
            rec.energy.packet_touches += 1;
        }
        rec.queue_len = queue.len();
        rec.agent_storage = arm_queues.len();
        rec.energy.storage_integral = arm_queues.len() as u64;
        records.push(rec);
    }
    Ok(finish(config, env, records, Some(state)))
}

fn ufrb_loop(config: RunConfig, mut env: BanditEnv, seed: &RunSeed) -> Result<RunTrace> {
    let mut streams = Streams::new(seed);
    let mut replay_rng = seed.stream(Stream::Replay);
    let arms = env.arms();
    let mut state = AlgorithmState::new(config.algorithm, arms);
    let mut queue = GeoGeoQueue::new(config.lambda, config.mu)?;
    let mut buffers = ArmQueues::new(arms);
    // (count, reward sum) per arm over everything retained
    let mut aggregates = vec![(0u64, 0u64); arms];
    let mut records = Vec::with_capacity(config.horizon as usize);

    for t in 1..=config.horizon {
        let mut rec = play_and_admit(t, &state, &mut env, &mut queue, &mut streams);
        if let Some(p) =
            queue.try_serve(&config.policy, &mut streams.service, &mut streams.sampling)
        {
            buffers.push(p);
            aggregates[p.arm.0].0 += 1;
            aggregates[p.arm.0].1 += u64::from(p.reward);
            rec.served = Some(p);
            rec.energy.queue_ops += 2;
        }
        match config.replay {
            ReplayMode::Aggregate => {
                if !buffers.is_empty() {
                    state = AlgorithmState::from_aggregates(config.algorithm, &aggregates);
                    rec.recomputed = true;
                    rec.energy.alg_updates += arms as u64;
                    rec.energy.packet_touches += buffers.len() as u64;
                }
            }
            ReplayMode::Resample => {
                let held = buffers.arm(rec.arm);
                if !held.is_empty() {
                    let p = held[replay_rng.random_range(0..held.len())];
                    state.update(p.arm, p.reward)?;
                    rec.observed = Some(p);
                    rec.energy.alg_updates += 1;
                    rec.energy.packet_touches += 1;
                }
            }
        }
        rec.queue_len = queue.len();
        rec.agent_storage = buffers.len();
        rec.energy.storage_integral = buffers.len() as u64;
        records.push(rec);
    }
    Ok(finish(config, env, records, Some(state)))
}

fn random_loop(config: RunConfig, mut env: BanditEnv, seed: &RunSeed) -> Result<RunTrace> {
    let mut rng = seed.stream(Stream::Algorithm);
    let arms = env.arms();
    let records = (1..=config.horizon)
        .map(|t| {
            let arm = ArmId(rng.random_range(0..arms));
            let reward = env.pull(arm).expect("arm drawn in range");
            SlotRecord {
                slot: t,
                arm,
                mean: env.thetas()[arm.0],
                reward,
                ..SlotRecord::default()
            }
        })
        .collect();
    Ok(finish(config, env, records, None))
}
