use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::StabilityError;

/// Change of an exponent relative to the tibia-controller baseline.
/// Negative values mean the condition diverges more slowly (more stable).
pub fn delta_lambda(lambda: f64, lambda_tc: f64) -> f64 {
    lambda - lambda_tc
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub sd: f64,
    pub n: usize,
}

pub fn mean_sd(values: &[f64]) -> Result<MeanSd, StabilityError> {
    if values.is_empty() {
        return Err(StabilityError::EmptySample);
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(MeanSd { mean, sd, n })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankSumResult {
    /// Rank sum of the first sample (midranks for ties).
    pub statistic: f64,
    pub p_value: f64,
    pub significant: bool,
    /// Exact enumeration rather than the normal approximation.
    pub exact: bool,
}

/// Largest group size handled by exact enumeration.
pub const EXACT_LIMIT: usize = 20;

/// Midranks (1-based) of the pooled sample, doubled so ties stay integral.
fn doubled_midranks(pooled: &[f64]) -> Vec<u64> {
    let n = pooled.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0u64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        // Mean of 1-based ranks i+1..=j+1, doubled.
        let r2 = (i + j + 2) as u64;
        for &k in &order[i..=j] {
            ranks[k] = r2;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided Wilcoxon rank-sum test. Exact null distribution by dynamic
/// programming over subsets when both groups have at most 20 values,
/// otherwise the normal approximation with tie and continuity correction.
pub fn wilcoxon_ranksum(a: &[f64], b: &[f64], alpha: f64) -> Result<RankSumResult, StabilityError> {
    if a.is_empty() || b.is_empty() {
        return Err(StabilityError::EmptySample);
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StabilityError::InvalidParameter("samples must be finite".into()));
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = doubled_midranks(&pooled);
    let (na, nb) = (a.len(), b.len());
    let n = na + nb;
    let s2: u64 = ranks[..na].iter().sum();
    let statistic = s2 as f64 / 2.0;
    if pooled.iter().all(|&v| v == pooled[0]) {
        return Ok(RankSumResult { statistic, p_value: 1.0, significant: false, exact: na.max(nb) <= EXACT_LIMIT });
    }

    // Doubled expectation of the rank sum.
    let centre2 = (na * (n + 1)) as i64;
    let obs_dev = (s2 as i64 - centre2).abs();

    let (p_value, exact) = if na.max(nb) <= EXACT_LIMIT {
        // counts[k][s]: subsets of size k with doubled rank sum s.
        let max_sum: u64 = ranks.iter().sum();
        let width = max_sum as usize + 1;
        let mut counts = vec![vec![0u128; width]; na + 1];
        counts[0][0] = 1;
        for &r in &ranks {
            for k in (1..=na).rev() {
                let (lo, hi) = counts.split_at_mut(k);
                let (prev, cur) = (&lo[k - 1], &mut hi[0]);
                for s in (r as usize..width).rev() {
                    cur[s] += prev[s - r as usize];
                }
            }
        }
        let total: u128 = counts[na].iter().sum();
        let extreme: u128 = counts[na]
            .iter()
            .enumerate()
            .filter(|(s, _)| (*s as i64 - centre2).abs() >= obs_dev)
            .map(|(_, c)| c)
            .sum();
        (extreme as f64 / total as f64, true)
    } else {
        let (na_f, nb_f, n_f) = (na as f64, nb as f64, n as f64);
        let mut ties = 0.0;
        let mut sorted = pooled.clone();
        sorted.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            let t = (j - i + 1) as f64;
            ties += t * t * t - t;
            i = j + 1;
        }
        let var = na_f * nb_f / 12.0 * ((n_f + 1.0) - ties / (n_f * (n_f - 1.0)));
        let dev = (obs_dev as f64 / 2.0 - 0.5).max(0.0);
        let z = dev / var.sqrt();
        (erfc(z / std::f64::consts::SQRT_2).min(1.0), false)
    };
    Ok(RankSumResult {
        statistic,
        p_value,
        significant: p_value < alpha,
        exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn delta_examples() {
        assert!((delta_lambda(8.30, 7.13) - 1.17).abs() < 1e-12);
        assert!((delta_lambda(4.82, 5.66) + 0.84).abs() < 1e-12);
        assert_eq!(delta_lambda(3.3, 3.3), 0.0);
    }

    #[test]
    fn mean_sd_basic() {
        let m = mean_sd(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m.mean, 2.5);
        assert!((m.sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_sd(&[7.0]).unwrap().sd, 0.0);
        assert_eq!(mean_sd(&[]), Err(StabilityError::EmptySample));
    }

    #[test]
    fn identical_samples() {
        let r = wilcoxon_ranksum(&[2.0; 5], &[2.0; 7], 0.01).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert!(!r.significant);
    }

    #[test]
    fn three_versus_three() {
        let r = wilcoxon_ranksum(&[1.0, 2.0, 3.0], &[101.0, 102.0, 103.0], 0.01).unwrap();
        assert!(r.exact);
        assert_eq!(r.statistic, 6.0);
        assert!((r.p_value - 0.1).abs() < 1e-15);
        assert!(!r.significant);
    }

    #[test]
    fn large_shift_is_significant() {
        let a: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = a.iter().map(|v| v + 3.0 * 0.7).collect();
        let r = wilcoxon_ranksum(&a, &b, 0.01).unwrap();
        assert!(!r.exact);
        assert!(r.significant, "{}", r.p_value);
    }

    /// Oracle: enumerate every assignment of pooled values to the first group.
    fn enumerate_p(a: &[f64], b: &[f64]) -> f64 {
        let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
        let n = pooled.len();
        let rank = |v: f64| {
            let below = pooled.iter().filter(|&&x| x < v).count() as f64;
            let equal = pooled.iter().filter(|&&x| x == v).count() as f64;
            below + (equal + 1.0) / 2.0
        };
        let ranks: Vec<f64> = pooled.iter().map(|&v| rank(v)).collect();
        let mean = a.len() as f64 * (n as f64 + 1.0) / 2.0;
        let obs = (ranks[..a.len()].iter().sum::<f64>() - mean).abs();
        let (mut hits, mut total) = (0u64, 0u64);
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != a.len() {
                continue;
            }
            total += 1;
            let s: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
            if (s - mean).abs() >= obs - 1e-9 {
                hits += 1;
            }
        }
        hits as f64 / total as f64
    }

    proptest! {
        #[test]
        fn exact_matches_enumeration(
            a in prop::collection::vec(0u8..6, 1..8),
            b in prop::collection::vec(0u8..6, 1..8),
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let r = wilcoxon_ranksum(&a, &b, 0.01).unwrap();
            if a.iter().chain(&b).all(|&v| v == a[0]) {
                prop_assert_eq!(r.p_value, 1.0);
            } else {
                prop_assert_eq!(r.p_value, enumerate_p(&a, &b));
            }
        }

        #[test]
        fn symmetric_in_arguments(
            a in prop::collection::vec(-5.0..5.0f64, 1..30),
            b in prop::collection::vec(-5.0..5.0f64, 1..30),
        ) {
            let p = wilcoxon_ranksum(&a, &b, 0.01).unwrap().p_value;
            let q = wilcoxon_ranksum(&b, &a, 0.01).unwrap().p_value;
            prop_assert!((p - q).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&p));
        }

        #[test]
        fn delta_antisymmetric(x in -20.0..20.0f64, y in -20.0..20.0f64) {
            prop_assert_eq!(delta_lambda(x, y), -delta_lambda(y, x));
        }
    }
}
