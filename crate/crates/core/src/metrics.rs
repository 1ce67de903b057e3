//! Regret, reward and energy accounting, plus the reward-loss and
//! energy-saving indicators used to compare controllers.
//!
//! Energy is a weighted sum of operation counters rather than a physical
//! measurement; see [`EnergyModel`].

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::bandit::ArmId;
use crate::controllers::{ControllerKind, RunConfig, RunTrace, SlotRecord};
use crate::error::{Error, Result};

/// Operation counts that drive the abstract energy model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergyCounters {
    /// Writes of algorithm sufficient statistics (one per arm touched).
    pub alg_updates: u64,
    /// Packets read while updating or recomputing statistics.
    pub packet_touches: u64,
    /// Queue admissions and removals, network and agent side.
    pub queue_ops: u64,
    /// Sum over slots of packets held agent-side, in packet-slots.
    pub storage_integral: u64,
}

impl Add for EnergyCounters {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self {
            alg_updates: self.alg_updates + rhs.alg_updates,
            packet_touches: self.packet_touches + rhs.packet_touches,
            queue_ops: self.queue_ops + rhs.queue_ops,
            storage_integral: self.storage_integral + rhs.storage_integral,
        }
    }
}

impl AddAssign for EnergyCounters {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyModel {
    pub w_update: f64,
    pub w_touch: f64,
    pub w_queue: f64,
    pub w_storage: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self {
            w_update: 1.0,
            w_touch: 1.0,
            w_queue: 0.1,
            w_storage: 0.01,
        }
    }
}

impl EnergyModel {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("w_update", self.w_update),
            ("w_touch", self.w_touch),
            ("w_queue", self.w_queue),
            ("w_storage", self.w_storage),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::config(
                    name,
                    format!("weight must be finite and >= 0, got {w}"),
                ));
            }
        }
        Ok(())
    }

    pub fn energy(&self, c: &EnergyCounters) -> f64 {
        self.w_update * c.alg_updates as f64
            + self.w_touch * c.packet_touches as f64
            + self.w_queue * c.queue_ops as f64
            + self.w_storage * c.storage_integral as f64
    }
}

/// Cumulative pseudo-regret after each slot: `t θ* - Σ_{s<=t} θ_{a_s}`.
///
/// Accumulated as a sum of per-slot gaps `θ* - θ_{a_t} >= 0`, so the
/// trajectory is non-decreasing in floating point as well.
pub fn pseudo_regret(records: &[SlotRecord], thetas: &[f64]) -> Result<Vec<f64>> {
    let best = thetas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut acc = 0.0;
    records
        .iter()
        .map(|r| {
            let theta = thetas.get(r.arm.0).ok_or(Error::ArmNotCovered {
                arm: r.arm.0,
                arms: thetas.len(),
            })?;
            acc += best - theta;
            Ok(acc)
        })
        .collect()
}

/// Final pseudo-regret of a sequence of played arms.
pub fn final_regret(arms: impl IntoIterator<Item = ArmId>, thetas: &[f64]) -> f64 {
    let best = thetas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    arms.into_iter().map(|a| best - thetas[a.0]).sum()
}

/// Expected packets served by slot `horizon`: `min(λ, μ) T`.
pub fn expected_observations(lambda: f64, mu: f64, horizon: u64) -> f64 {
    lambda.min(mu) * horizon as f64
}

fn normalized_gap(value: f64, min: f64, max: f64) -> Result<f64> {
    if max == min {
        return Err(Error::DegenerateReference(max));
    }
    Ok(1.0 - (value - min) / (max - min))
}

/// Reward loss indicator. Not clamped to [0, 1].
pub fn rli(reward: f64, reward_min: f64, reward_max: f64) -> Result<f64> {
    normalized_gap(reward, reward_min, reward_max)
}

/// Energy saving indicator. Not clamped to [0, 1].
pub fn esi(energy: f64, energy_min: f64, energy_max: f64) -> Result<f64> {
    normalized_gap(energy, energy_min, energy_max)
}

/// Rebuilds a run's counters from the events in its slot records alone.
///
/// Independent of the online bookkeeping in the controllers; the two must
/// agree exactly.
pub fn counters_from_records(
    controller: ControllerKind,
    arms: usize,
    records: &[SlotRecord],
) -> EnergyCounters {
    let mut c = EnergyCounters::default();
    let agent_side = matches!(
        controller,
        ControllerKind::BaseUfq | ControllerKind::BaseUfrb
    );
    let mut held = 0u64;
    for r in records {
        c.queue_ops += u64::from(r.admitted);
        if r.served.is_some() {
            // removal from the network queue, plus the append to an arm queue
            c.queue_ops += if agent_side { 2 } else { 1 };
            if agent_side {
                held += 1;
            }
        }
        if r.observed.is_some() {
            c.alg_updates += 1;
            c.packet_touches += 1;
            if controller == ControllerKind::BaseUfq {
                c.queue_ops += 1;
                held -= 1;
            }
        }
        if r.recomputed {
            c.alg_updates += arms as u64;
            c.packet_touches += held;
        }
        c.storage_integral += held;
    }
    c
}

/// Scalar results of one replication, kept after its trace is dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub config: RunConfig,
    pub total_reward: u64,
    pub final_regret: f64,
    pub observations: u64,
    pub counters: EnergyCounters,
}

impl RunOutcome {
    pub fn from_trace(trace: &RunTrace) -> Self {
        Self {
            config: trace.config,
            total_reward: trace.total_reward(),
            final_regret: trace.final_regret(),
            observations: trace.observations(),
            counters: trace.counters,
        }
    }
}

/// Mean and sample standard deviation (n - 1 denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Reference levels for the indicators: full-feedback (max) and random play (min).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct References {
    pub reward_max: f64,
    pub reward_min: f64,
    pub energy_max: f64,
    pub energy_min: f64,
}

impl References {
    pub fn from_batches(full_feedback: &SummaryRow, random: &SummaryRow) -> Self {
        Self {
            reward_max: full_feedback.reward_mean,
            reward_min: random.reward_mean,
            energy_max: full_feedback.energy_mean,
            energy_min: random.energy_mean,
        }
    }
}

/// Aggregate over the replications of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub config: RunConfig,
    pub replications: usize,
    pub reward_mean: f64,
    pub reward_std: f64,
    pub regret_mean: f64,
    pub regret_std: f64,
    pub nobs_mean: f64,
    pub energy_mean: f64,
    pub energy_std: f64,
    pub rli: Option<f64>,
    pub esi: Option<f64>,
    pub alg_updates_mean: f64,
    pub packet_touches_mean: f64,
    pub queue_ops_mean: f64,
    pub storage_integral_mean: f64,
}

pub fn summarize(
    outcomes: &[RunOutcome],
    model: &EnergyModel,
    references: Option<&References>,
) -> Result<SummaryRow> {
    let first = outcomes.first().ok_or(Error::EmptyBatch)?;
    if let Some(other) = outcomes.iter().find(|o| o.config != first.config) {
        return Err(Error::MixedConfigs(
            first.config.label(),
            other.config.label(),
        ));
    }
    let column = |f: &dyn Fn(&RunOutcome) -> f64| outcomes.iter().map(f).collect::<Vec<f64>>();
    let (reward_mean, reward_std) = mean_std(&column(&|o| o.total_reward as f64));
    let (regret_mean, regret_std) = mean_std(&column(&|o| o.final_regret));
    let (nobs_mean, _) = mean_std(&column(&|o| o.observations as f64));
    let (energy_mean, energy_std) = mean_std(&column(&|o| model.energy(&o.counters)));
    let (alg_updates_mean, _) = mean_std(&column(&|o| o.counters.alg_updates as f64));
    let (packet_touches_mean, _) = mean_std(&column(&|o| o.counters.packet_touches as f64));
    let (queue_ops_mean, _) = mean_std(&column(&|o| o.counters.queue_ops as f64));
    let (storage_integral_mean, _) = mean_std(&column(&|o| o.counters.storage_integral as f64));

    let (rli, esi) = match references {
        Some(r) => (
            self::rli(reward_mean, r.reward_min, r.reward_max).ok(),
            self::esi(energy_mean, r.energy_min, r.energy_max).ok(),
        ),
        None => (None, None),
    };

    Ok(SummaryRow {
        config: first.config,
        replications: outcomes.len(),
        reward_mean,
        reward_std,
        regret_mean,
        regret_std,
        nobs_mean,
        energy_mean,
        energy_std,
        rli,
        esi,
        alg_updates_mean,
        packet_touches_mean,
        queue_ops_mean,
        storage_integral_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records(arms: &[usize]) -> Vec<SlotRecord> {
        arms.iter()
            .enumerate()
            .map(|(i, &a)| SlotRecord {
                slot: i as u64 + 1,
                arm: ArmId(a),
                reward: 0,
                ..SlotRecord::default()
            })
            .collect()
    }

    #[test]
    fn regret_examples() {
        let thetas = [0.9, 0.4];
        let all_best = pseudo_regret(&records(&[0; 10]), &thetas).unwrap();
        assert!(all_best.iter().all(|&r| r == 0.0));

        let worst = pseudo_regret(&records(&[1; 100]), &thetas).unwrap();
        assert!((worst[99] - 50.0).abs() < 1e-9);

        let alternating: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let alt = pseudo_regret(&records(&alternating), &thetas).unwrap();
        assert!((alt[99] - 25.0).abs() < 1e-9);

        assert_eq!(
            pseudo_regret(&records(&[2]), &thetas),
            Err(Error::ArmNotCovered { arm: 2, arms: 2 })
        );
    }

    #[test]
    fn expected_observation_examples() {
        assert_eq!(expected_observations(0.6, 0.3, 5000), 1500.0);
        assert_eq!(expected_observations(1.0, 1.0, 777), 777.0);
        assert_eq!(expected_observations(0.0, 0.4, 5000), 0.0);
    }

    #[test]
    fn indicator_endpoints() {
        assert_eq!(rli(10.0, 2.0, 10.0).unwrap(), 0.0);
        assert_eq!(rli(2.0, 2.0, 10.0).unwrap(), 1.0);
        assert_eq!(rli(6.0, 2.0, 10.0).unwrap(), 0.5);
        assert_eq!(esi(1.0, 1.0, 5.0).unwrap(), 1.0);
        assert_eq!(esi(5.0, 1.0, 5.0).unwrap(), 0.0);
        assert_eq!(esi(3.0, 1.0, 5.0).unwrap(), 0.5);
        assert_eq!(rli(3.0, 4.0, 4.0), Err(Error::DegenerateReference(4.0)));
        // outside the reference range is reported as-is
        assert_eq!(esi(9.0, 1.0, 5.0).unwrap(), -1.0);
    }

    #[test]
    fn energy_is_weighted_sum() {
        let c = EnergyCounters {
            alg_updates: 10,
            packet_touches: 20,
            queue_ops: 30,
            storage_integral: 400,
        };
        assert!((EnergyModel::default().energy(&c) - (10.0 + 20.0 + 3.0 + 4.0)).abs() < 1e-12);
        let bad = EnergyModel {
            w_touch: -1.0,
            ..EnergyModel::default()
        };
        assert!(bad.validate().is_err());
    }

    fn outcome(reward: u64, config: RunConfig) -> RunOutcome {
        RunOutcome {
            config,
            total_reward: reward,
            final_regret: 1.0,
            observations: 3,
            counters: EnergyCounters::default(),
        }
    }

    #[test]
    fn summarize_means_and_std() {
        let cfg = RunConfig::random(10);
        let model = EnergyModel::default();
        let one = summarize(&[outcome(10, cfg)], &model, None).unwrap();
        assert_eq!((one.reward_mean, one.reward_std), (10.0, 0.0));
        assert_eq!(one.rli, None);

        let two = summarize(&[outcome(10, cfg), outcome(20, cfg)], &model, None).unwrap();
        assert_eq!(two.reward_mean, 15.0);
        assert!((two.reward_std - 50f64.sqrt()).abs() < 1e-12);

        assert_eq!(summarize(&[], &model, None), Err(Error::EmptyBatch));
        let other = RunConfig::random(11);
        assert!(matches!(
            summarize(&[outcome(1, cfg), outcome(1, other)], &model, None),
            Err(Error::MixedConfigs(..))
        ));
    }
}
