//! Gait-cycle segmentation, cycle averaging and quasi-stiffness (slope of
//! the averaged moment–angle curve over stance).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::interp_at;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StiffnessError {
    #[error("need at least 2 foot strikes, got {0}")]
    InsufficientEvents(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("foot strike {index} outside signal of length {len}")]
    EventOutOfRange { index: usize, len: usize },
    #[error("no cycles to average")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaitPhaseConfig {
    /// Fraction of the gait cycle that is stance.
    pub stance_fraction: f64,
    /// Reported part of stance, as fractions of stance.
    pub window: (f64, f64),
    /// Samples per normalized gait cycle.
    pub points_per_cycle: usize,
    /// Width of the sliding regression, fraction of stance.
    pub regression_width: f64,
    /// Minimum angle range (deg) inside a regression window.
    pub plateau_tolerance: f64,
}

impl Default for GaitPhaseConfig {
    fn default() -> Self {
        Self {
            stance_fraction: 0.6,
            window: (0.20, 0.85),
            points_per_cycle: 1000,
            regression_width: 0.05,
            plateau_tolerance: 1e-3,
        }
    }
}

impl GaitPhaseConfig {
    pub fn validate(&self) -> Result<(), StiffnessError> {
        let (a, b) = self.window;
        if !(0.0 < a && a < b && b < 1.0) {
            return Err(StiffnessError::InvalidConfig(format!("window {a}..{b} not inside (0, 1)")));
        }
        if !(self.stance_fraction > 0.0 && self.stance_fraction <= 1.0) {
            return Err(StiffnessError::InvalidConfig("stance fraction must be in (0, 1]".into()));
        }
        if self.points_per_cycle < 20 {
            return Err(StiffnessError::InvalidConfig("too few points per cycle".into()));
        }
        if !(self.regression_width > 0.0 && self.regression_width < 0.5) {
            return Err(StiffnessError::InvalidConfig("regression width must be in (0, 0.5)".into()));
        }
        Ok(())
    }

    pub fn stance_points(&self) -> usize {
        (self.stance_fraction * self.points_per_cycle as f64).round() as usize
    }
}

/// Cut `signal` at consecutive foot strikes and resample each cycle
/// `[strike_k, strike_{k+1})` onto `n_points` samples.
pub fn segment_cycles(
    signal: &[f64],
    strikes: &[usize],
    n_points: usize,
) -> Result<Vec<Vec<f64>>, StiffnessError> {
    if strikes.len() < 2 {
        return Err(StiffnessError::InsufficientEvents(strikes.len()));
    }
    if n_points == 0 {
        return Err(StiffnessError::InvalidConfig("n_points must be ≥ 1".into()));
    }
    if let Some(&bad) = strikes.iter().find(|&&s| s >= signal.len()) {
        return Err(StiffnessError::EventOutOfRange { index: bad, len: signal.len() });
    }
    if strikes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(StiffnessError::InvalidConfig("strikes must be strictly increasing".into()));
    }
    Ok(strikes
        .windows(2)
        .map(|w| {
            let step = (w[1] - w[0]) as f64 / n_points as f64;
            (0..n_points)
                .map(|j| interp_at(signal, w[0] as f64 + j as f64 * step))
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleAverage {
    pub mean_moment: Vec<f64>,
    pub mean_angle: Vec<f64>,
    pub n_cycles: usize,
}

fn pointwise_mean(cycles: &[Vec<f64>]) -> Vec<f64> {
    let n = cycles.len() as f64;
    let mut out = vec![0.0; cycles[0].len()];
    for c in cycles {
        for (o, v) in out.iter_mut().zip(c) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|v| *v /= n);
    out
}

/// Pointwise mean of moment and angle cycles.
pub fn average_cycle(
    moment_cycles: &[Vec<f64>],
    angle_cycles: &[Vec<f64>],
) -> Result<CycleAverage, StiffnessError> {
    if moment_cycles.is_empty() || angle_cycles.is_empty() {
        return Err(StiffnessError::Empty);
    }
    let len = moment_cycles[0].len();
    if moment_cycles.len() != angle_cycles.len()
        || moment_cycles.iter().chain(angle_cycles).any(|c| c.len() != len)
    {
        return Err(StiffnessError::InvalidConfig("cycles differ in count or length".into()));
    }
    Ok(CycleAverage {
        mean_moment: pointwise_mean(moment_cycles),
        mean_angle: pointwise_mean(angle_cycles),
        n_cycles: moment_cycles.len(),
    })
}

/// Quasi-stiffness over the reporting window of stance. Masked samples
/// (angle plateau inside the regression window) are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StiffnessProfile {
    /// Position within stance, percent.
    pub stance_percent: Vec<f64>,
    /// Slope dM/dq, Nm/deg.
    pub stiffness: Vec<Option<f64>>,
}

impl StiffnessProfile {
    /// Value at the sample nearest `stance_percent`.
    pub fn at(&self, stance_percent: f64) -> Option<f64> {
        let i = self
            .stance_percent
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - stance_percent).abs().total_cmp(&(b.1 - stance_percent).abs()))?
            .0;
        self.stiffness[i]
    }

    /// Mean of the unmasked values within `[from, to]` percent of stance.
    pub fn mean_between(&self, from: f64, to: f64) -> Option<f64> {
        let vals: Vec<f64> = self
            .stance_percent
            .iter()
            .zip(&self.stiffness)
            .filter(|(p, _)| **p >= from && **p <= to)
            .filter_map(|(_, k)| *k)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// Mean over terminal stance, 60–85 % of stance.
    pub fn terminal(&self) -> Option<f64> {
        self.mean_between(60.0, 85.0)
    }
}

/// Least-squares slope of `y` against `x`, or `None` when `x` spans less
/// than `min_range`.
fn regression_slope(x: &[f64], y: &[f64], min_range: f64) -> Option<f64> {
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi - lo >= min_range) {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    Some(sxy / sxx)
}

/// Instantaneous slope of the averaged moment–angle curve by centred sliding
/// linear regression.
pub fn quasi_stiffness(avg: &CycleAverage, cfg: &GaitPhaseConfig) -> Result<StiffnessProfile, StiffnessError> {
    cfg.validate()?;
    let stance = cfg.stance_points();
    if avg.mean_angle.len() < stance || avg.mean_moment.len() != avg.mean_angle.len() {
        return Err(StiffnessError::InvalidConfig(format!(
            "profiles of length {} shorter than {stance} stance points",
            avg.mean_angle.len()
        )));
    }
    let half = ((cfg.regression_width * stance as f64).round() as usize / 2).max(1);
    let first = (cfg.window.0 * stance as f64).round() as usize;
    let last = (cfg.window.1 * stance as f64).round() as usize;
    let mut stance_percent = Vec::with_capacity(last - first + 1);
    let mut stiffness = Vec::with_capacity(last - first + 1);
    for i in first..=last {
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(avg.mean_angle.len() - 1);
        stance_percent.push(100.0 * i as f64 / stance as f64);
        stiffness.push(regression_slope(
            &avg.mean_angle[lo..=hi],
            &avg.mean_moment[lo..=hi],
            cfg.plateau_tolerance,
        ));
    }
    Ok(StiffnessProfile {
        stance_percent,
        stiffness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn avg_from(angle: impl Fn(f64) -> f64, moment: impl Fn(f64) -> f64) -> CycleAverage {
        let n = 1000;
        let q: Vec<f64> = (0..n).map(|i| angle(i as f64 / n as f64)).collect();
        let m: Vec<f64> = q.iter().map(|&v| moment(v)).collect();
        CycleAverage { mean_moment: m, mean_angle: q, n_cycles: 1 }
    }

    #[test]
    fn segment_examples() {
        let sig: Vec<f64> = (0..400).map(|i| (i as f64 * 0.1).sin()).collect();
        let cycles = segment_cycles(&sig, &[0, 100, 200, 300], 50).unwrap();
        assert_eq!(cycles.len(), 3);
        assert!(cycles.iter().all(|c| c.len() == 50));
        for (k, c) in cycles.iter().enumerate() {
            assert!((c[0] - sig[100 * k]).abs() < 1e-9);
        }
        let strikes: Vec<usize> = (0..176).map(|k| k * 2).collect();
        assert_eq!(segment_cycles(&vec![0.0; 400], &strikes, 10).unwrap().len(), 175);
        assert!(matches!(segment_cycles(&sig, &[3], 10), Err(StiffnessError::InsufficientEvents(1))));
    }

    #[test]
    fn average_examples() {
        let a = vec![1.0, 2.0, 3.0];
        let avg = average_cycle(&[a.clone(), a.clone()], &[a.clone(), a.clone()]).unwrap();
        assert_eq!(avg.mean_moment, a);
        let t = [0.5, -1.0, 2.0];
        let up: Vec<f64> = t.iter().map(|v| v + 0.3).collect();
        let down: Vec<f64> = t.iter().map(|v| v - 0.3).collect();
        let avg = average_cycle(&[up.clone(), down.clone()], &[up, down]).unwrap();
        for (m, v) in avg.mean_moment.iter().zip(t) {
            assert!((m - v).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_relation_gives_flat_profile() {
        let avg = avg_from(|p| 20.0 * p, |q| 10.0 * q);
        let prof = quasi_stiffness(&avg, &GaitPhaseConfig::default()).unwrap();
        assert_eq!(prof.stance_percent.first(), Some(&20.0));
        assert_eq!(prof.stance_percent.last(), Some(&85.0));
        for k in &prof.stiffness {
            assert!((k.unwrap() - 10.0).abs() < 1e-6);
        }
    }

    #[test]
    fn quadratic_relation_tracks_derivative() {
        // q ramps 0 → 10 deg over stance, M = q².
        let avg = avg_from(|p| 10.0 * (p / 0.6).min(1.0), |q| q * q);
        let prof = quasi_stiffness(&avg, &GaitPhaseConfig::default()).unwrap();
        for (pct, k) in prof.stance_percent.iter().zip(&prof.stiffness) {
            let q = 10.0 * pct / 100.0;
            assert!((k.unwrap() / (2.0 * q) - 1.0).abs() < 0.02, "{pct}");
        }
    }

    #[test]
    fn plateau_is_masked() {
        let avg = avg_from(|p| if p < 0.3 { 5.0 } else { 5.0 + p }, |q| 3.0 * q);
        let prof = quasi_stiffness(&avg, &GaitPhaseConfig::default()).unwrap();
        assert!(prof.at(30.0).is_none());
        assert!((prof.at(80.0).unwrap() - 3.0).abs() < 1e-6);
        assert_eq!(prof.stiffness.len(), prof.stance_percent.len());
    }

    #[test]
    fn jittered_average_within_clt_bound() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let sd = 0.5;
        let noise = Normal::new(0.0, sd).unwrap();
        let template: Vec<f64> = (0..100).map(|i| (i as f64 * 0.06).sin() * 10.0).collect();
        let n = 175;
        let cycles: Vec<Vec<f64>> = (0..n)
            .map(|_| template.iter().map(|v| v + noise.sample(&mut rng)).collect())
            .collect();
        let avg = average_cycle(&cycles, &cycles).unwrap();
        let bound = 3.0 * sd / (n as f64).sqrt();
        let outside = avg.mean_moment.iter().zip(&template).filter(|(a, t)| (*a - *t).abs() > bound).count();
        // A 3σ bound is exceeded by ~0.3 % of points.
        assert!(outside <= 2, "{outside}");
    }

    proptest! {
        #[test]
        fn affine_relation_constant(slope in 0.5..50.0f64, offset in -20.0..20.0f64, rate in 1.0..30.0f64) {
            let avg = avg_from(|p| rate * p - 3.0, |q| slope * q + offset);
            let prof = quasi_stiffness(&avg, &GaitPhaseConfig::default()).unwrap();
            for k in &prof.stiffness {
                prop_assert!((k.unwrap() / slope - 1.0).abs() < 1e-6);
            }
        }

        #[test]
        fn unit_rescaling_round_trip(slope in 1.0..30.0f64) {
            // Nm → N·mm and deg → rad scale the slope by 1000·180/π.
            let avg = avg_from(|p| 15.0 * p * p, |q| slope * q + 0.1 * q * q);
            let scale = 1000.0 * 180.0 / std::f64::consts::PI;
            let conv = CycleAverage {
                mean_moment: avg.mean_moment.iter().map(|m| m * 1000.0).collect(),
                mean_angle: avg.mean_angle.iter().map(|q| q.to_radians()).collect(),
                n_cycles: 1,
            };
            let cfg = GaitPhaseConfig { plateau_tolerance: 1e-3f64.to_radians(), ..Default::default() };
            let a = quasi_stiffness(&avg, &GaitPhaseConfig::default()).unwrap();
            let b = quasi_stiffness(&conv, &cfg).unwrap();
            for (x, y) in a.stiffness.iter().zip(&b.stiffness) {
                prop_assert!((y.unwrap() / scale / x.unwrap() - 1.0).abs() < 1e-9);
            }
        }
    }
}
