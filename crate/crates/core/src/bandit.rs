//! Stationary Bernoulli bandit environment and the two decision rules
//! (UCB and Thompson Sampling) that the controllers drive.
//!
//! Both algorithms are plain value types: `select` reads state, `update`
//! folds in one observed `(arm, reward)` pair. Rewards are binary, so all
//! sufficient statistics are integer counts and updates commute exactly.

use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of an arm, `0..K`.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct ArmId(pub usize);

impl ArmId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for ArmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

fn check_reward(reward: u8) -> Result<()> {
    if reward <= 1 {
        Ok(())
    } else {
        Err(Error::InvalidReward(reward))
    }
}

/// Draws `k` means independently from U(0, 1).
pub fn draw_thetas<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    (0..k).map(|_| rng.random::<f64>()).collect()
}

/// A K-armed Bernoulli bandit with fixed means.
///
/// The environment owns its reward stream so two environments built from
/// the same means and stream produce bit-identical pull sequences.
#[derive(Debug, Clone)]
pub struct BanditEnv {
    thetas: Vec<f64>,
    best: f64,
    rng: ChaCha8Rng,
}

impl BanditEnv {
    pub fn new(thetas: Vec<f64>, rng: ChaCha8Rng) -> Result<Self> {
        if thetas.len() < 2 {
            return Err(Error::TooFewArms(thetas.len()));
        }
        if let Some((arm, &value)) = thetas
            .iter()
            .enumerate()
            .find(|(_, t)| !(0.0..=1.0).contains(*t))
        {
            return Err(Error::MeanOutOfRange { arm, value });
        }
        let best = thetas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { thetas, best, rng })
    }

    /// Environment with `k` means drawn from U(0, 1) using `theta_rng`.
    pub fn uniform<R: Rng + ?Sized>(k: usize, theta_rng: &mut R, rng: ChaCha8Rng) -> Result<Self> {
        if k < 2 {
            return Err(Error::TooFewArms(k));
        }
        Self::new(draw_thetas(k, theta_rng), rng)
    }

    pub fn arms(&self) -> usize {
        self.thetas.len()
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn theta(&self, arm: ArmId) -> Result<f64> {
        self.thetas.get(arm.0).copied().ok_or(Error::InvalidArm {
            arm: arm.0,
            arms: self.thetas.len(),
        })
    }

    /// Largest mean, θ*.
    pub fn best_mean(&self) -> f64 {
        self.best
    }

    /// One Bernoulli(θ_arm) reward.
    pub fn pull(&mut self, arm: ArmId) -> Result<u8> {
        let theta = self.theta(arm)?;
        Ok(u8::from(self.rng.random::<f64>() < theta))
    }
}

/// `mean + sqrt(2 ln N / n)` with the log of the total count passed in.
pub fn ucb_bound(mean: f64, arm_count: u64, log_total: f64) -> f64 {
    mean + (2.0 * log_total / arm_count as f64).sqrt()
}

/// Per-arm counts and reward sums for UCB.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UcbState {
    counts: Vec<u64>,
    sums: Vec<u64>,
    total: u64,
}

impl UcbState {
    pub fn new(arms: usize) -> Self {
        Self {
            counts: vec![0; arms],
            sums: vec![0; arms],
            total: 0,
        }
    }

    /// Rebuilds the state from per-arm `(count, reward sum)` aggregates.
    pub fn from_aggregates(aggregates: &[(u64, u64)]) -> Self {
        let counts: Vec<u64> = aggregates.iter().map(|&(n, _)| n).collect();
        let sums = aggregates.iter().map(|&(_, s)| s).collect();
        let total = counts.iter().sum();
        Self {
            counts,
            sums,
            total,
        }
    }

    pub fn arms(&self) -> usize {
        self.counts.len()
    }

    pub fn count(&self, arm: ArmId) -> u64 {
        self.counts[arm.0]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Empirical mean of `arm`, or `None` before its first observation.
    pub fn mean(&self, arm: ArmId) -> Option<f64> {
        let n = self.counts[arm.0];
        (n > 0).then(|| self.sums[arm.0] as f64 / n as f64)
    }

    /// Upper confidence index. Arms never observed get `+inf`.
    pub fn index(&self, arm: ArmId) -> f64 {
        match self.mean(arm) {
            None => f64::INFINITY,
            Some(mean) => ucb_bound(mean, self.counts[arm.0], (self.total as f64).ln()),
        }
    }

    /// Arm with the largest index; ties go to the lowest arm.
    pub fn select(&self) -> ArmId {
        let log_total = (self.total as f64).ln();
        let mut best = 0;
        let mut best_index = f64::NEG_INFINITY;
        for arm in 0..self.counts.len() {
            let n = self.counts[arm];
            let index = if n == 0 {
                f64::INFINITY
            } else {
                ucb_bound(self.sums[arm] as f64 / n as f64, n, log_total)
            };
            if index > best_index {
                best = arm;
                best_index = index;
            }
        }
        ArmId(best)
    }

    pub fn update(&mut self, arm: ArmId, reward: u8) -> Result<()> {
        check_reward(reward)?;
        let arms = self.counts.len();
        let count = self
            .counts
            .get_mut(arm.0)
            .ok_or(Error::InvalidArm { arm: arm.0, arms })?;
        *count += 1;
        self.sums[arm.0] += u64::from(reward);
        self.total += 1;
        Ok(())
    }
}

/// Beta-Bernoulli posterior counts for Thompson Sampling under a uniform prior.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TsState {
    successes: Vec<u64>,
    failures: Vec<u64>,
}

impl TsState {
    pub fn new(arms: usize) -> Self {
        Self {
            successes: vec![0; arms],
            failures: vec![0; arms],
        }
    }

    pub fn from_counts(successes: Vec<u64>, failures: Vec<u64>) -> Self {
        assert_eq!(successes.len(), failures.len());
        Self {
            successes,
            failures,
        }
    }

    pub fn from_aggregates(aggregates: &[(u64, u64)]) -> Self {
        Self {
            successes: aggregates.iter().map(|&(_, s)| s).collect(),
            failures: aggregates.iter().map(|&(n, s)| n - s).collect(),
        }
    }

    pub fn arms(&self) -> usize {
        self.successes.len()
    }

    /// Posterior `Beta(S + 1, F + 1)` parameters of `arm`.
    pub fn posterior(&self, arm: ArmId) -> (f64, f64) {
        (
            self.successes[arm.0] as f64 + 1.0,
            self.failures[arm.0] as f64 + 1.0,
        )
    }

    pub fn posterior_mean(&self, arm: ArmId) -> f64 {
        let (a, b) = self.posterior(arm);
        a / (a + b)
    }

    pub fn observations(&self, arm: ArmId) -> u64 {
        self.successes[arm.0] + self.failures[arm.0]
    }

    pub fn total(&self) -> u64 {
        self.successes.iter().sum::<u64>() + self.failures.iter().sum::<u64>()
    }

    /// Samples every posterior once and returns the arm with the largest draw.
    pub fn select<R: Rng + ?Sized>(&self, rng: &mut R) -> ArmId {
        let mut best = 0;
        let mut best_draw = f64::NEG_INFINITY;
        for arm in 0..self.successes.len() {
            let (a, b) = self.posterior(ArmId(arm));
            let draw = beta_draw(a, b, rng);
            if draw > best_draw {
                best = arm;
                best_draw = draw;
            }
        }
        ArmId(best)
    }

    pub fn update(&mut self, arm: ArmId, reward: u8) -> Result<()> {
        check_reward(reward)?;
        let arms = self.successes.len();
        if arm.0 >= arms {
            return Err(Error::InvalidArm { arm: arm.0, arms });
        }
        if reward == 1 {
            self.successes[arm.0] += 1;
        } else {
            self.failures[arm.0] += 1;
        }
        Ok(())
    }
}

/// Beta(a, b) sample as `X / (X + Y)` with `X ~ Gamma(a)`, `Y ~ Gamma(b)`.
fn beta_draw<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let x = Gamma::new(a, 1.0).expect("shape >= 1").sample(rng);
    let y = Gamma::new(b, 1.0).expect("shape >= 1").sample(rng);
    x / (x + y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmKind {
    Ucb,
    Ts,
}

impl AlgorithmKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AlgorithmKind::Ucb => "ucb",
            AlgorithmKind::Ts => "ts",
        }
    }
}

impl fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AlgorithmKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ucb" => Ok(AlgorithmKind::Ucb),
            "ts" | "thompson" => Ok(AlgorithmKind::Ts),
            other => Err(Error::config(
                "algorithm",
                format!("unknown algorithm `{other}`"),
            )),
        }
    }
}

/// State of whichever base algorithm a controller is driving.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlgorithmState {
    Ucb(UcbState),
    Ts(TsState),
}

impl AlgorithmState {
    pub fn new(kind: AlgorithmKind, arms: usize) -> Self {
        match kind {
            AlgorithmKind::Ucb => AlgorithmState::Ucb(UcbState::new(arms)),
            AlgorithmKind::Ts => AlgorithmState::Ts(TsState::new(arms)),
        }
    }

    pub fn from_aggregates(kind: AlgorithmKind, aggregates: &[(u64, u64)]) -> Self {
        match kind {
            AlgorithmKind::Ucb => AlgorithmState::Ucb(UcbState::from_aggregates(aggregates)),
            AlgorithmKind::Ts => AlgorithmState::Ts(TsState::from_aggregates(aggregates)),
        }
    }

    pub fn kind(&self) -> AlgorithmKind {
        match self {
            AlgorithmState::Ucb(_) => AlgorithmKind::Ucb,
            AlgorithmState::Ts(_) => AlgorithmKind::Ts,
        }
    }

    pub fn arms(&self) -> usize {
        match self {
            AlgorithmState::Ucb(s) => s.arms(),
            AlgorithmState::Ts(s) => s.arms(),
        }
    }

    /// Observations folded in so far.
    pub fn observations(&self) -> u64 {
        match self {
            AlgorithmState::Ucb(s) => s.total(),
            AlgorithmState::Ts(s) => s.total(),
        }
    }

    /// Per-arm observation counts.
    pub fn arm_counts(&self) -> Vec<u64> {
        match self {
            AlgorithmState::Ucb(s) => s.counts().to_vec(),
            AlgorithmState::Ts(s) => (0..s.arms()).map(|a| s.observations(ArmId(a))).collect(),
        }
    }

    /// UCB ignores `rng`; TS draws one Beta sample per arm from it.
    pub fn select<R: Rng + ?Sized>(&self, rng: &mut R) -> ArmId {
        match self {
            AlgorithmState::Ucb(s) => s.select(),
            AlgorithmState::Ts(s) => s.select(rng),
        }
    }

    pub fn update(&mut self, arm: ArmId, reward: u8) -> Result<()> {
        match self {
            AlgorithmState::Ucb(s) => s.update(arm, reward),
            AlgorithmState::Ts(s) => s.update(arm, reward),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn env_rejects_bad_arms_and_means() {
        assert_eq!(
            BanditEnv::new(vec![0.5], rng(0)).unwrap_err(),
            Error::TooFewArms(1)
        );
        assert_eq!(
            BanditEnv::new(vec![0.5, 1.5], rng(0)).unwrap_err(),
            Error::MeanOutOfRange { arm: 1, value: 1.5 }
        );
        assert!(BanditEnv::uniform(1, &mut rng(0), rng(1)).is_err());
    }

    #[test]
    fn env_best_mean_and_uniform_draws() {
        let env = BanditEnv::new(vec![0.0, 1.0], rng(0)).unwrap();
        assert_eq!(env.best_mean(), 1.0);

        let a = BanditEnv::uniform(5, &mut rng(9), rng(1)).unwrap();
        let b = BanditEnv::uniform(5, &mut rng(9), rng(1)).unwrap();
        assert_eq!(a.thetas(), b.thetas());
        assert_eq!(a.arms(), 5);
        assert!(a.thetas().iter().all(|t| (0.0..=1.0).contains(t)));
    }

    #[test]
    fn degenerate_arms_are_deterministic() {
        let mut env = BanditEnv::new(vec![0.0, 1.0], rng(3)).unwrap();
        for _ in 0..1000 {
            assert_eq!(env.pull(ArmId(0)).unwrap(), 0);
            assert_eq!(env.pull(ArmId(1)).unwrap(), 1);
        }
        assert!(env.pull(ArmId(2)).is_err());
    }

    #[test]
    fn fair_coin_empirical_mean() {
        let mut env = BanditEnv::new(vec![0.5, 0.5], rng(11)).unwrap();
        let n = 100_000;
        let hits: u64 = (0..n).map(|_| u64::from(env.pull(ArmId(0)).unwrap())).sum();
        let mean = hits as f64 / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn identically_seeded_envs_pull_identically() {
        let mut a = BanditEnv::new(vec![0.3, 0.7, 0.5], rng(5)).unwrap();
        let mut b = BanditEnv::new(vec![0.3, 0.7, 0.5], rng(5)).unwrap();
        for i in 0..10_000 {
            let arm = ArmId(i % 3);
            assert_eq!(a.pull(arm).unwrap(), b.pull(arm).unwrap());
        }
    }

    #[test]
    fn ucb_index_examples() {
        let mut s = UcbState::new(2);
        assert_eq!(s.index(ArmId(0)), f64::INFINITY);
        s.update(ArmId(0), 0).unwrap();
        assert_eq!(s.index(ArmId(0)), 0.0);

        let v = ucb_bound(0.5, 2, 2.0);
        assert!((v - (0.5 + 2f64.sqrt())).abs() < 1e-15);
        assert!((v - 1.9142).abs() < 1e-4);
    }

    #[test]
    fn ucb_select_ties_and_argmax() {
        // indices [inf, finite, inf]
        let s = UcbState::from_aggregates(&[(0, 0), (4, 1), (0, 0)]);
        assert_eq!(s.select(), ArmId(0));

        // all arms observed, arm 1 clearly best
        let s = UcbState::from_aggregates(&[(50, 10), (50, 45), (50, 25)]);
        assert_eq!(s.select(), ArmId(1));

        let fresh = UcbState::new(4);
        for _ in 0..10 {
            assert_eq!(fresh.select(), ArmId(0));
        }
    }

    #[test]
    fn ucb_running_mean() {
        let mut s = UcbState::new(3);
        s.update(ArmId(1), 1).unwrap();
        assert_eq!((s.count(ArmId(1)), s.mean(ArmId(1))), (1, Some(1.0)));
        s.update(ArmId(1), 0).unwrap();
        assert_eq!((s.count(ArmId(1)), s.mean(ArmId(1))), (2, Some(0.5)));
        s.update(ArmId(1), 1).unwrap();
        assert!((s.mean(ArmId(1)).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.total(), 3);
    }

    #[test]
    fn updates_reject_bad_input() {
        let mut s = UcbState::new(2);
        assert_eq!(s.update(ArmId(0), 2), Err(Error::InvalidReward(2)));
        assert_eq!(
            s.update(ArmId(2), 1),
            Err(Error::InvalidArm { arm: 2, arms: 2 })
        );
        assert_eq!(s, UcbState::new(2));

        let mut t = TsState::new(2);
        assert!(t.update(ArmId(0), 3).is_err());
        assert!(t.update(ArmId(5), 0).is_err());
    }

    #[test]
    fn ts_conjugate_updates() {
        let mut t = TsState::new(1);
        t.update(ArmId(0), 1).unwrap();
        assert_eq!(t.posterior(ArmId(0)), (2.0, 1.0));

        let mut t = TsState::new(1);
        t.update(ArmId(0), 0).unwrap();
        assert_eq!(t.posterior(ArmId(0)), (1.0, 2.0));

        let t = TsState::from_counts(vec![2], vec![0]);
        assert_eq!(t.posterior_mean(ArmId(0)), 0.75);
    }

    #[test]
    fn ts_single_arm_and_dominant_arm() {
        let mut r = rng(1);
        assert_eq!(TsState::new(1).select(&mut r), ArmId(0));

        let t = TsState::from_counts(vec![1_000_000, 0], vec![0, 1_000_000]);
        let wins = (0..10_000).filter(|_| t.select(&mut r) == ArmId(0)).count();
        assert!(wins as f64 / 10_000.0 > 0.999);
    }

    #[test]
    fn beta_draw_moments() {
        let mut r = rng(33);
        for (a, b) in [(1.0, 1.0), (3.0, 1.0), (40.0, 12.0)] {
            let n = 200_000;
            let draws: Vec<f64> = (0..n).map(|_| beta_draw(a, b, &mut r)).collect();
            let mean = draws.iter().sum::<f64>() / n as f64;
            let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64;
            let m = a / (a + b);
            let v = a * b / ((a + b).powi(2) * (a + b + 1.0));
            assert!(
                (mean - m).abs() < 5.0 * (v / n as f64).sqrt(),
                "({a},{b}) mean {mean}"
            );
            assert!((var - v).abs() < 0.02 * v, "({a},{b}) var {var}");
        }
    }

    #[test]
    fn ts_fresh_state_is_uniform() {
        let k = 4;
        let n = 10_000;
        let t = TsState::new(k);
        let mut r = rng(21);
        let mut hist = vec![0usize; k];
        for _ in 0..n {
            hist[t.select(&mut r).0] += 1;
        }
        for &h in &hist {
            let f = h as f64 / n as f64;
            assert!((f - 1.0 / k as f64).abs() < 0.02, "{hist:?}");
        }
    }
}
