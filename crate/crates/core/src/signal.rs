//! Filtering, differentiation, resampling and stride time-normalization.
//!
//! Every analysis stage goes through these primitives. All functions are pure:
//! identical input produces bitwise-identical output.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("series too short: need {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("insufficient strides: need {needed} foot-strike events, got {got}")]
    InsufficientStrides { needed: usize, got: usize },
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
}

/// Anatomical axis a series belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AxisTag {
    #[serde(rename = "ML")]
    Ml,
    #[serde(rename = "AP")]
    Ap,
    #[serde(rename = "VT")]
    Vt,
    #[serde(rename = "scalar")]
    Scalar,
}

impl AxisTag {
    pub const SPATIAL: [AxisTag; 3] = [AxisTag::Ml, AxisTag::Ap, AxisTag::Vt];

    pub fn name(self) -> &'static str {
        match self {
            AxisTag::Ml => "ML",
            AxisTag::Ap => "AP",
            AxisTag::Vt => "VT",
            AxisTag::Scalar => "scalar",
        }
    }
}

/// Uniformly sampled real-valued signal.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    samples: Vec<f64>,
    sample_rate: f64,
    start_time: f64,
    label: AxisTag,
}

impl TimeSeries {
    pub fn new(
        samples: Vec<f64>,
        sample_rate: f64,
        start_time: f64,
        label: AxisTag,
    ) -> Result<Self, SignalError> {
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(SignalError::InvalidParameter(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(SignalError::NonFinite(i));
        }
        Ok(Self {
            samples,
            sample_rate,
            start_time,
            label,
        })
    }

    /// Scalar series starting at t = 0.
    pub fn scalar(samples: Vec<f64>, sample_rate: f64) -> Result<Self, SignalError> {
        Self::new(samples, sample_rate, 0.0, AxisTag::Scalar)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn label(&self) -> AxisTag {
        self.label
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    /// Same metadata, new samples. Samples are assumed finite (produced by a
    /// finite computation on finite input).
    fn with_samples(&self, samples: Vec<f64>) -> Self {
        Self {
            samples,
            sample_rate: self.sample_rate,
            start_time: self.start_time,
            label: self.label,
        }
    }
}

/// Stride boundaries of a time-normalized series.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrideGrid {
    pub stride_boundaries: Vec<usize>,
    pub n_strides: usize,
    pub points_per_stride: usize,
}

impl StrideGrid {
    pub fn normalized_len(&self) -> usize {
        self.n_strides * self.points_per_stride
    }
}

/// One biquad in transposed direct form II.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    /// State that makes a constant input `u` pass through unchanged.
    fn steady_state(&self, u: f64) -> [f64; 2] {
        let z2 = (self.b[2] - self.a[1]) * u;
        let z1 = (self.b[1] - self.a[0]) * u + z2;
        [z1, z2]
    }

    fn run(&self, data: &mut [f64]) {
        if data.is_empty() {
            return;
        }
        let [mut z1, mut z2] = self.steady_state(data[0]);
        for v in data.iter_mut() {
            let x = *v;
            let y = self.b[0] * x + z1;
            z1 = self.b[1] * x - self.a[0] * y + z2;
            z2 = self.b[2] * x - self.a[1] * y;
            *v = y;
        }
    }
}

/// Low-pass Butterworth sections from the bilinear transform with the cutoff
/// prewarped, so the -3 dB point lands exactly on `cutoff`.
fn butterworth_sections(order: usize, cutoff: f64, sample_rate: f64) -> Vec<Biquad> {
    let k = (PI * cutoff / sample_rate).tan();
    let k2 = k * k;
    (1..=order / 2)
        .map(|i| {
            let zeta = (PI * (2 * i - 1) as f64 / (2 * order) as f64).sin();
            let norm = 1.0 + 2.0 * zeta * k + k2;
            let b0 = k2 / norm;
            Biquad {
                b: [b0, 2.0 * b0, b0],
                a: [2.0 * (k2 - 1.0) / norm, (1.0 - 2.0 * zeta * k + k2) / norm],
            }
        })
        .collect()
}

/// Butterworth low-pass filter of order 2 or 4.
///
/// With `zero_phase` the cascade runs forward then backward over an
/// odd-reflected padding of `3 * order` samples, doubling the effective order
/// and cancelling the phase shift. Single-pass filtering is causal. Both
/// start from the steady state of the first sample, so a constant series is
/// returned unchanged.
pub fn butterworth_lowpass(
    series: &TimeSeries,
    order: usize,
    cutoff: f64,
    zero_phase: bool,
) -> Result<TimeSeries, SignalError> {
    if order != 2 && order != 4 {
        return Err(SignalError::InvalidParameter(format!(
            "filter order must be 2 or 4, got {order}"
        )));
    }
    let nyquist = series.sample_rate / 2.0;
    if !(cutoff > 0.0 && cutoff < nyquist) {
        return Err(SignalError::InvalidParameter(format!(
            "cutoff {cutoff} Hz outside (0, {nyquist}) Hz"
        )));
    }
    let needed = 3 * order;
    if series.len() < needed {
        return Err(SignalError::TooShort {
            needed,
            got: series.len(),
        });
    }
    let sections = butterworth_sections(order, cutoff, series.sample_rate);
    let x = &series.samples;
    let n = x.len();

    if !zero_phase {
        let mut out = x.clone();
        for s in &sections {
            s.run(&mut out);
        }
        return Ok(series.with_samples(out));
    }

    let pad = needed.min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

    for s in &sections {
        s.run(&mut ext);
    }
    ext.reverse();
    for s in &sections {
        s.run(&mut ext);
    }
    ext.reverse();
    Ok(series.with_samples(ext[pad..pad + n].to_vec()))
}

/// Trailing moving average; the first `window - 1` outputs average the
/// partial window available so far.
pub fn moving_average(series: &TimeSeries, window: usize) -> Result<TimeSeries, SignalError> {
    if window == 0 {
        return Err(SignalError::InvalidParameter("window must be ≥ 1".into()));
    }
    if window > series.len() {
        return Err(SignalError::TooShort {
            needed: window,
            got: series.len(),
        });
    }
    let x = &series.samples;
    let mut out = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    for i in 0..x.len() {
        acc += x[i];
        if i >= window {
            acc -= x[i - window];
        }
        let width = (i + 1).min(window);
        // Re-sum periodically so the running total does not drift.
        if i % 4096 == 4095 {
            acc = x[i + 1 - width..=i].iter().sum();
        }
        out.push(acc / width as f64);
    }
    Ok(series.with_samples(out))
}

/// Central differences in the interior, one-sided differences at both ends.
pub fn finite_difference(series: &TimeSeries, dt: f64) -> Result<TimeSeries, SignalError> {
    if !(dt > 0.0) {
        return Err(SignalError::InvalidParameter(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let x = &series.samples;
    let n = x.len();
    if n < 2 {
        return Err(SignalError::TooShort { needed: 2, got: n });
    }
    let mut out = Vec::with_capacity(n);
    out.push((x[1] - x[0]) / dt);
    for i in 1..n - 1 {
        out.push((x[i + 1] - x[i - 1]) / (2.0 * dt));
    }
    out.push((x[n - 1] - x[n - 2]) / dt);
    Ok(series.with_samples(out))
}

/// Linear interpolation of `samples` at fractional index `pos`
/// (clamped to the valid range).
pub(crate) fn interp_at(samples: &[f64], pos: f64) -> f64 {
    let last = samples.len() - 1;
    if pos <= 0.0 {
        return samples[0];
    }
    let i = pos.floor() as usize;
    if i >= last {
        return samples[last];
    }
    let frac = pos - i as f64;
    if frac == 0.0 {
        samples[i]
    } else {
        samples[i] + frac * (samples[i + 1] - samples[i])
    }
}

/// Resample onto a new uniform grid covering the same time span.
pub fn resample_linear(series: &TimeSeries, target_rate: f64) -> Result<TimeSeries, SignalError> {
    if !(target_rate > 0.0 && target_rate.is_finite()) {
        return Err(SignalError::InvalidParameter(format!(
            "target rate must be positive, got {target_rate}"
        )));
    }
    if series.is_empty() {
        return Err(SignalError::TooShort { needed: 1, got: 0 });
    }
    let ratio = series.sample_rate / target_rate;
    let span_in_target = (series.len() - 1) as f64 / ratio;
    let count = (span_in_target + 1e-9).floor() as usize + 1;
    let samples = (0..count)
        .map(|j| interp_at(&series.samples, j as f64 * ratio))
        .collect();
    Ok(TimeSeries {
        samples,
        sample_rate: target_rate,
        start_time: series.start_time,
        label: series.label,
    })
}

/// Map each of the first `n_strides` strides onto `n_points / n_strides`
/// samples by linear interpolation between consecutive foot strikes.
pub fn time_normalize(
    series: &TimeSeries,
    events: &[usize],
    n_strides: usize,
    n_points: usize,
) -> Result<(TimeSeries, StrideGrid), SignalError> {
    if n_strides == 0 || n_points == 0 || !n_points.is_multiple_of(n_strides) {
        return Err(SignalError::InvalidParameter(format!(
            "{n_points} points cannot be split evenly over {n_strides} strides"
        )));
    }
    if events.len() < n_strides + 1 {
        return Err(SignalError::InsufficientStrides {
            needed: n_strides + 1,
            got: events.len(),
        });
    }
    if events.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SignalError::InvalidParameter(
            "foot-strike events must be strictly increasing".into(),
        ));
    }
    if events[n_strides] >= series.len() {
        return Err(SignalError::InvalidParameter(format!(
            "event index {} beyond series length {}",
            events[n_strides],
            series.len()
        )));
    }
    let per_stride = n_points / n_strides;
    let mut out = Vec::with_capacity(n_points);
    for k in 0..n_strides {
        let start = events[k] as f64;
        let step = (events[k + 1] - events[k]) as f64 / per_stride as f64;
        out.extend((0..per_stride).map(|j| interp_at(&series.samples, start + j as f64 * step)));
    }
    let grid = StrideGrid {
        stride_boundaries: (0..=n_strides).map(|k| k * per_stride).collect(),
        n_strides,
        points_per_stride: per_stride,
    };
    let normalized = TimeSeries {
        samples: out,
        sample_rate: series.sample_rate,
        start_time: series.start_time + events[0] as f64 / series.sample_rate,
        label: series.label,
    };
    Ok((normalized, grid))
}

/// Magnitude response of the prewarped digital Butterworth at `freq`.
pub fn butterworth_gain(order: usize, cutoff: f64, sample_rate: f64, freq: f64) -> f64 {
    let ratio = (PI * freq / sample_rate).tan() / (PI * cutoff / sample_rate).tan();
    1.0 / (1.0 + ratio.powi(2 * order as i32)).sqrt()
}
