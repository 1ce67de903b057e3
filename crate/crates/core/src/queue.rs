//! Lossy uplink and server-side Geo/Geo/1 queue.
//!
//! Positions are 1-based in the public API: position 1 is the oldest
//! packet, position `L` the most recent arrival. Internally the buffer is a
//! `VecDeque` indexed from 0.

use std::collections::VecDeque;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bandit::ArmId;
use crate::error::{check_probability, Error, Result};

/// Feedback for one slot: the arm that was played and what it paid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packet {
    pub arm: ArmId,
    pub reward: u8,
    pub birth_slot: u64,
}

/// Rule for picking which queued packet a service opportunity observes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SamplingPolicy {
    Fifo,
    Lifo,
    Uniform,
    /// With probability `alpha` take the packet at `round(bias_fraction * L)`,
    /// otherwise a uniformly random one.
    DeltaUniform {
        alpha: f64,
        bias_fraction: f64,
    },
}

impl SamplingPolicy {
    pub fn delta_uniform(alpha: f64, bias_fraction: f64) -> Result<Self> {
        check_probability("alpha", alpha)?;
        check_probability("bias_fraction", bias_fraction)?;
        Ok(SamplingPolicy::DeltaUniform {
            alpha,
            bias_fraction,
        })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SamplingPolicy::DeltaUniform {
                alpha,
                bias_fraction,
            } => {
                check_probability("alpha", alpha)?;
                check_probability("bias_fraction", bias_fraction)
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SamplingPolicy::Fifo => "fifo",
            SamplingPolicy::Lifo => "lifo",
            SamplingPolicy::Uniform => "uniform",
            SamplingPolicy::DeltaUniform { .. } => "delta-uniform",
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match *self {
            SamplingPolicy::DeltaUniform { alpha, .. } => Some(alpha),
            _ => None,
        }
    }

    pub fn bias_fraction(&self) -> Option<f64> {
        match *self {
            SamplingPolicy::DeltaUniform { bias_fraction, .. } => Some(bias_fraction),
            _ => None,
        }
    }

    /// Selection probabilities for positions `1..=len`, returned 0-indexed.
    pub fn pmf(&self, len: usize) -> Result<Vec<f64>> {
        if len == 0 {
            return Err(Error::EmptyQueue);
        }
        let mut pmf = vec![0.0; len];
        match *self {
            SamplingPolicy::Fifo => pmf[0] = 1.0,
            SamplingPolicy::Lifo => pmf[len - 1] = 1.0,
            SamplingPolicy::Uniform => pmf.fill(1.0 / len as f64),
            SamplingPolicy::DeltaUniform {
                alpha,
                bias_fraction,
            } => {
                pmf.fill((1.0 - alpha) / len as f64);
                pmf[dirac_position(bias_fraction, len) - 1] += alpha;
            }
        }
        Ok(pmf)
    }

    /// Maps one U[0, 1) draw to a 0-based index into a queue of `len >= 1`.
    ///
    /// Every policy consumes exactly one uniform per service, so policies
    /// that coincide in distribution also coincide draw for draw: the
    /// delta-uniform mixture with `alpha = 0` reuses the draw unchanged for
    /// its uniform branch, and with `alpha = 1` always lands on the Dirac.
    pub fn index_from_uniform(&self, len: usize, u: f64) -> usize {
        debug_assert!(len > 0);
        let uniform = |v: f64| ((v * len as f64) as usize).min(len - 1);
        match *self {
            SamplingPolicy::Fifo => 0,
            SamplingPolicy::Lifo => len - 1,
            SamplingPolicy::Uniform => uniform(u),
            SamplingPolicy::DeltaUniform {
                alpha,
                bias_fraction,
            } => {
                if u < alpha {
                    dirac_position(bias_fraction, len) - 1
                } else {
                    uniform((u - alpha) / (1.0 - alpha))
                }
            }
        }
    }
}

impl fmt::Display for SamplingPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            SamplingPolicy::DeltaUniform {
                alpha,
                bias_fraction,
            } => write!(
                f,
                "delta-uniform(alpha={alpha}, bias_fraction={bias_fraction})"
            ),
            _ => f.write_str(self.name()),
        }
    }
}

/// 1-based Dirac position `clamp(round_half_up(bias_fraction * len), 1, len)`.
pub fn dirac_position(bias_fraction: f64, len: usize) -> usize {
    let c = (bias_fraction * len as f64 + 0.5).floor() as usize;
    c.clamp(1, len)
}

/// Unbounded discrete-time queue with Bernoulli admission and service.
#[derive(Debug, Clone)]
pub struct GeoGeoQueue {
    buffer: VecDeque<Packet>,
    lambda: f64,
    mu: f64,
    admitted: u64,
    served: u64,
}

impl GeoGeoQueue {
    pub fn new(lambda: f64, mu: f64) -> Result<Self> {
        check_probability("lambda", lambda)?;
        check_probability("mu", mu)?;
        Ok(Self {
            buffer: VecDeque::new(),
            lambda,
            mu,
            admitted: 0,
            served: 0,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// L(t).
    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn admitted(&self) -> u64 {
        self.admitted
    }

    pub fn served(&self) -> u64 {
        self.served
    }

    /// Oldest first.
    pub fn packets(&self) -> impl Iterator<Item = &Packet> {
        self.buffer.iter()
    }

    /// Channel transmission: appends `packet` with probability lambda.
    pub fn admit<R: Rng + ?Sized>(&mut self, packet: Packet, rng: &mut R) -> bool {
        let admitted = rng.random::<f64>() < self.lambda;
        if admitted {
            self.buffer.push_back(packet);
            self.admitted += 1;
        }
        admitted
    }

    /// One service draw. On success and a non-empty queue, removes and
    /// returns the packet chosen by `policy`. An opportunity that finds the
    /// queue empty is spent without effect.
    pub fn try_serve<R: Rng + ?Sized, S: Rng + ?Sized>(
        &mut self,
        policy: &SamplingPolicy,
        service_rng: &mut R,
        sampling_rng: &mut S,
    ) -> Option<Packet> {
        let opportunity = service_rng.random::<f64>() < self.mu;
        if !opportunity || self.buffer.is_empty() {
            return None;
        }
        let idx = policy.index_from_uniform(self.buffer.len(), sampling_rng.random::<f64>());
        let packet = self.buffer.remove(idx).expect("index within queue");
        self.served += 1;
        Some(packet)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn packet(i: u64) -> Packet {
        Packet {
            arm: ArmId(i as usize % 3),
            reward: (i % 2) as u8,
            birth_slot: i,
        }
    }

    fn filled(lambda: f64, mu: f64, n: u64) -> GeoGeoQueue {
        let mut q = GeoGeoQueue::new(lambda, mu).unwrap();
        let mut always = GeoGeoQueue::new(1.0, 0.0).unwrap();
        for i in 1..=n {
            always.admit(packet(i), &mut rng(0));
        }
        q.buffer = always.buffer;
        q.admitted = n;
        q
    }

    #[test]
    fn rejects_bad_rates() {
        assert!(GeoGeoQueue::new(1.3, 0.5).is_err());
        assert!(GeoGeoQueue::new(0.5, -0.1).is_err());
        assert!(SamplingPolicy::delta_uniform(1.5, 0.0).is_err());
        assert!(SamplingPolicy::delta_uniform(0.5, 2.0).is_err());
    }

    #[test]
    fn admission_extremes() {
        let mut r = rng(1);
        let mut q = GeoGeoQueue::new(1.0, 0.0).unwrap();
        for i in 0..100 {
            assert!(q.admit(packet(i), &mut r));
        }
        assert_eq!(q.len(), 100);

        let mut q = GeoGeoQueue::new(0.0, 1.0).unwrap();
        for i in 0..100 {
            assert!(!q.admit(packet(i), &mut r));
        }
        assert!(q.is_empty());
    }

    #[test]
    fn admission_rate_half() {
        let mut r = rng(2);
        let mut q = GeoGeoQueue::new(0.5, 0.0).unwrap();
        let n = 100_000;
        let hits = (0..n).filter(|&i| q.admit(packet(i), &mut r)).count();
        assert!((hits as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn pmf_examples() {
        assert_eq!(
            SamplingPolicy::Fifo.pmf(5).unwrap(),
            vec![1.0, 0.0, 0.0, 0.0, 0.0]
        );
        assert_eq!(SamplingPolicy::Lifo.pmf(3).unwrap(), vec![0.0, 0.0, 1.0]);

        let p = SamplingPolicy::delta_uniform(0.5, 1.0)
            .unwrap()
            .pmf(10)
            .unwrap();
        assert!((p[9] - 0.55).abs() < 1e-15);
        assert!(p[..9].iter().all(|&x| (x - 0.05).abs() < 1e-15));

        for bias in [0.0, 0.3, 1.0] {
            let p = SamplingPolicy::delta_uniform(0.0, bias)
                .unwrap()
                .pmf(4)
                .unwrap();
            assert_eq!(p, vec![0.25; 4]);
        }

        assert_eq!(SamplingPolicy::Uniform.pmf(0), Err(Error::EmptyQueue));
    }

    #[test]
    fn dirac_rounds_half_up_and_clamps() {
        assert_eq!(dirac_position(0.0, 7), 1);
        assert_eq!(dirac_position(1.0, 7), 7);
        assert_eq!(dirac_position(0.5, 5), 3);
        assert_eq!(dirac_position(0.5, 4), 2);
        assert_eq!(dirac_position(0.25, 10), 3);
        assert_eq!(dirac_position(0.1, 1), 1);
    }

    #[test]
    fn serve_fifo_lifo_and_closed_server() {
        let mut q = filled(1.0, 1.0, 3);
        let p = q.try_serve(&SamplingPolicy::Lifo, &mut rng(0), &mut rng(1));
        assert_eq!(p, Some(packet(3)));
        assert_eq!(
            q.packets().copied().collect::<Vec<_>>(),
            vec![packet(1), packet(2)]
        );

        let mut q = filled(1.0, 1.0, 3);
        let p = q.try_serve(&SamplingPolicy::Fifo, &mut rng(0), &mut rng(1));
        assert_eq!(p, Some(packet(1)));
        assert_eq!(
            q.packets().copied().collect::<Vec<_>>(),
            vec![packet(2), packet(3)]
        );

        let mut q = filled(1.0, 0.0, 3);
        let (mut a, mut b) = (rng(0), rng(1));
        for _ in 0..100 {
            assert!(q
                .try_serve(&SamplingPolicy::Uniform, &mut a, &mut b)
                .is_none());
        }
        assert_eq!(q.len(), 3);

        let mut empty = GeoGeoQueue::new(1.0, 1.0).unwrap();
        assert!(empty
            .try_serve(&SamplingPolicy::Fifo, &mut a, &mut b)
            .is_none());
    }

    #[test]
    fn length_bookkeeping() {
        let mut q = GeoGeoQueue::new(1.0, 1.0).unwrap();
        assert_eq!(q.len(), 0);
        let mut r = rng(4);
        for i in 0..3 {
            q.admit(packet(i), &mut r);
        }
        q.try_serve(&SamplingPolicy::Uniform, &mut r.clone(), &mut r);
        assert_eq!(q.len(), 2);
        assert_eq!(q.admitted(), q.served() + q.len() as u64);

        let mut q = GeoGeoQueue::new(1.0, 0.0).unwrap();
        for i in 0..50 {
            q.admit(packet(i), &mut r);
            q.try_serve(&SamplingPolicy::Lifo, &mut r.clone(), &mut r);
        }
        assert_eq!(q.len(), 50);
    }

    #[test]
    fn service_frequencies_match_pmf() {
        let len = 8;
        let n = 100_000;
        let policies = [
            SamplingPolicy::Uniform,
            SamplingPolicy::delta_uniform(0.5, 1.0).unwrap(),
            SamplingPolicy::delta_uniform(0.3, 0.5).unwrap(),
        ];
        for policy in policies {
            let pmf = policy.pmf(len).unwrap();
            let mut r = rng(17);
            let mut hist = vec![0usize; len];
            for _ in 0..n {
                hist[policy.index_from_uniform(len, r.random())] += 1;
            }
            for (h, p) in hist.iter().zip(&pmf) {
                assert!(
                    (*h as f64 / n as f64 - p).abs() < 0.01,
                    "{policy}: {hist:?}"
                );
            }
        }
    }

    #[test]
    fn policy_endpoints_select_identically() {
        let lifo_like = SamplingPolicy::delta_uniform(1.0, 1.0).unwrap();
        let fifo_like = SamplingPolicy::delta_uniform(1.0, 0.0).unwrap();
        let uniform_like = SamplingPolicy::delta_uniform(0.0, 0.7).unwrap();
        let mut r = rng(8);
        for _ in 0..10_000 {
            let len = r.random_range(1..200);
            let u: f64 = r.random();
            assert_eq!(
                lifo_like.index_from_uniform(len, u),
                SamplingPolicy::Lifo.index_from_uniform(len, u)
            );
            assert_eq!(
                fifo_like.index_from_uniform(len, u),
                SamplingPolicy::Fifo.index_from_uniform(len, u)
            );
            assert_eq!(
                uniform_like.index_from_uniform(len, u),
                SamplingPolicy::Uniform.index_from_uniform(len, u)
            );
        }
    }
}
