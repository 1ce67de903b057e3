//! Two-sample tests used to compare replication batches.

use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

use crate::metrics::mean_std;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Welch {
    /// `mean(a) - mean(b)`.
    pub diff: f64,
    /// `sqrt(s_a^2 / n_a + s_b^2 / n_b)`.
    pub se: f64,
    pub t: f64,
    pub df: f64,
    /// Two-sided p-value.
    pub p: f64,
}

impl Welch {
    /// `mean(a) > mean(b)` and the difference is significant at `level`.
    pub fn greater(&self, level: f64) -> bool {
        self.diff > 0.0 && self.p < level
    }

    /// `mean(a) < mean(b)` and the difference is significant at `level`.
    pub fn less(&self, level: f64) -> bool {
        self.diff < 0.0 && self.p < level
    }
}

/// Welch's unequal-variance t-test. Both samples need at least two values.
pub fn welch(a: &[f64], b: &[f64]) -> Welch {
    assert!(
        a.len() >= 2 && b.len() >= 2,
        "welch needs two values per sample"
    );
    let (ma, sa) = mean_std(a);
    let (mb, sb) = mean_std(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sa * sa / na, sb * sb / nb);
    let se = (va + vb).sqrt();
    let diff = ma - mb;
    if se == 0.0 {
        let p = if diff == 0.0 { 1.0 } else { 0.0 };
        let t = if diff == 0.0 {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        };
        return Welch {
            diff,
            se,
            t,
            df: na + nb - 2.0,
            p,
        };
    }
    let t = diff / se;
    let df = (va + vb).powi(2) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Welch { diff, se, t, df, p }
}

/// Pearson chi-square p-value of `counts` against equal cell probabilities.
pub fn chi_square_uniform(counts: &[u64]) -> f64 {
    let k = counts.len();
    assert!(k >= 2);
    let n: u64 = counts.iter().sum();
    let expected = n as f64 / k as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let dist = ChiSquared::new((k - 1) as f64).expect("k >= 2");
    1.0 - dist.cdf(stat)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welch_matches_hand_computation() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [2.0, 4.0, 6.0, 8.0, 10.0, 12.0];
        let w = welch(&a, &b);
        // var(a) = 2.5, var(b) = 14; se^2 = 0.5 + 14/6
        let se = (0.5f64 + 14.0 / 6.0).sqrt();
        assert!((w.diff + 4.0).abs() < 1e-12);
        assert!((w.se - se).abs() < 1e-12);
        let df = (0.5f64 + 14.0 / 6.0).powi(2) / (0.25 / 4.0 + (14.0f64 / 6.0).powi(2) / 5.0);
        assert!((w.df - df).abs() < 1e-9);
        // scipy.stats.ttest_ind(a, b, equal_var=False).pvalue
        assert!((w.p - 0.049_284_338).abs() < 1e-6, "{}", w.p);
        assert!((w.t + 2.376_354_103).abs() < 1e-8);
        assert!(w.less(0.05) && !w.less(0.01));
    }

    #[test]
    fn welch_degenerate_samples() {
        assert_eq!(welch(&[1.0, 1.0], &[1.0, 1.0]).p, 1.0);
        assert!(welch(&[2.0, 2.0], &[1.0, 1.0]).greater(0.01));
    }

    #[test]
    fn chi_square_extremes() {
        assert!(chi_square_uniform(&[2500, 2500, 2500, 2500]) > 0.99);
        assert!(chi_square_uniform(&[4000, 2000, 2000, 2000]) < 1e-6);
    }
}
