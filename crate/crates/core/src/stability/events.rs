use serde::{Deserialize, Serialize};

use crate::signal::{butterworth_lowpass, TimeSeries};

use super::StabilityError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EventConfig {
    /// Expected stride duration, s.
    pub nominal_period: f64,
    /// Minimum depth of a heel minimum below its surrounding peaks, mm.
    pub min_prominence: f64,
    /// Low-pass cutoff applied to the heel trajectory, Hz.
    pub cutoff: f64,
}

impl Default for EventConfig {
    fn default() -> Self {
        Self {
            nominal_period: 1.47,
            min_prominence: 20.0,
            cutoff: 5.0,
        }
    }
}

/// Depth of the minimum at `i` below the lower of the two highest points
/// reached before the signal drops below `v[i]` on either side.
fn prominence(v: &[f64], i: usize) -> f64 {
    let mut left = v[i];
    for &x in v[..i].iter().rev() {
        if x < v[i] {
            break;
        }
        left = left.max(x);
    }
    let mut right = v[i];
    for &x in &v[i + 1..] {
        if x < v[i] {
            break;
        }
        right = right.max(x);
    }
    left.min(right) - v[i]
}

/// Foot strikes at minima of the low-passed heel height. Minima need the
/// configured prominence and the heel ahead of its mean anterior-posterior
/// position; when two minima fall within half a nominal stride the deeper
/// one is kept.
pub fn detect_foot_strikes(
    heel_vt: &TimeSeries,
    heel_ap: &TimeSeries,
    cfg: &EventConfig,
) -> Result<Vec<usize>, StabilityError> {
    if heel_vt.len() != heel_ap.len() {
        return Err(StabilityError::InvalidParameter("heel channels differ in length".into()));
    }
    if !(cfg.nominal_period > 0.0 && cfg.min_prominence >= 0.0) {
        return Err(StabilityError::InvalidParameter("invalid event configuration".into()));
    }
    let vt = butterworth_lowpass(heel_vt, 2, cfg.cutoff, true)?;
    let v = vt.samples();
    let ap = heel_ap.samples();
    let ap_mean = ap.iter().sum::<f64>() / ap.len() as f64;

    let mut candidates: Vec<usize> = (1..v.len().saturating_sub(1))
        .filter(|&i| v[i] < v[i - 1] && v[i] <= v[i + 1])
        .filter(|&i| ap[i] > ap_mean && prominence(v, i) >= cfg.min_prominence)
        .collect();
    candidates.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));

    let spacing = 0.5 * cfg.nominal_period * heel_vt.sample_rate();
    let mut accepted: Vec<usize> = Vec::new();
    for c in candidates {
        if accepted.iter().all(|&a| (a.abs_diff(c) as f64) >= spacing) {
            accepted.push(c);
        }
    }
    if accepted.is_empty() {
        return Err(StabilityError::NoEvents);
    }
    accepted.sort_unstable();
    Ok(accepted)
}

/// Rising crossings of `threshold` in a vertical force channel.
pub fn force_onsets(fz: &[f64], threshold: f64) -> Vec<usize> {
    (1..fz.len())
        .filter(|&i| fz[i - 1] <= threshold && fz[i] > threshold)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::AxisTag;
    use crate::trial::{generate_trial_with_truth, Marker, TrialSpec};

    fn series(v: Vec<f64>, rate: f64, tag: AxisTag) -> TimeSeries {
        TimeSeries::new(v, rate, 0.0, tag).unwrap()
    }

    #[test]
    fn matches_generator_touchdowns() {
        let spec = TrialSpec { n_strides: 30, seed: 5, ..Default::default() };
        let (rec, truth) = generate_trial_with_truth(&spec).unwrap();
        let vt = series(rec.marker_axis(Marker::Lheel, AxisTag::Vt), rec.rate, AxisTag::Vt);
        let ap = series(rec.marker_axis(Marker::Lheel, AxisTag::Ap), rec.rate, AxisTag::Ap);
        let ev = detect_foot_strikes(&vt, &ap, &EventConfig::default()).unwrap();
        let expected: Vec<f64> = truth
            .strike_times
            .iter()
            .map(|t| t * rec.rate)
            .filter(|&s| s >= 0.0 && s < rec.len() as f64)
            .collect();
        assert!(ev.len() >= expected.len() - 1 && ev.len() <= expected.len(), "{} vs {}", ev.len(), expected.len());
        for e in &ev {
            let nearest = expected.iter().map(|s| (s - *e as f64).abs()).fold(f64::INFINITY, f64::min);
            assert!(nearest <= 2.0, "event {e} is {nearest} samples off");
        }
    }

    #[test]
    fn constant_heel_has_no_events() {
        let vt = series(vec![40.0; 500], 100.0, AxisTag::Vt);
        let ap = series(vec![0.0; 500], 100.0, AxisTag::Ap);
        assert_eq!(detect_foot_strikes(&vt, &ap, &EventConfig::default()), Err(StabilityError::NoEvents));
    }

    #[test]
    fn rate_invariant_event_times() {
        let heel = |t: f64| {
            let phi = (t / 1.47).fract();
            60.0 * (1.0 - (std::f64::consts::TAU * phi).cos())
        };
        let ap = |t: f64| 100.0 * (std::f64::consts::TAU * t / 1.47).cos();
        let make = |rate: f64| {
            let n = (12.0 * rate) as usize;
            let t: Vec<f64> = (0..n).map(|i| i as f64 / rate).collect();
            let vt = series(t.iter().map(|&x| heel(x)).collect(), rate, AxisTag::Vt);
            let a = series(t.iter().map(|&x| ap(x)).collect(), rate, AxisTag::Ap);
            detect_foot_strikes(&vt, &a, &EventConfig::default())
                .unwrap()
                .into_iter()
                .map(|i| i as f64 / rate)
                .collect::<Vec<_>>()
        };
        let (a, b) = (make(100.0), make(200.0));
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 0.010 + 1e-12, "{x} {y}");
        }
    }

    #[test]
    fn onsets() {
        assert_eq!(force_onsets(&[0.0, 0.0, 50.0, 60.0, 0.0, 10.0, 90.0], 30.0), vec![2, 6]);
    }
}
