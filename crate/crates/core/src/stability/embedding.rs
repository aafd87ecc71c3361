use serde::{Deserialize, Serialize};

use super::kdtree::{sq_dist, KdTree};
use super::DUPLICATE_FRACTION;
use super::StabilityError;

/// Delay `tau` (samples) and embedding dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingParams {
    pub tau: usize,
    pub dim: usize,
}

impl EmbeddingParams {
    pub fn new(tau: usize, dim: usize) -> Result<Self, StabilityError> {
        if tau < 1 || dim < 2 {
            return Err(StabilityError::InvalidParameter(format!(
                "embedding needs tau ≥ 1 and dim ≥ 2, got tau={tau}, dim={dim}"
            )));
        }
        Ok(Self { tau, dim })
    }
}

/// Delay-embedded state vectors, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Attractor {
    data: Vec<f64>,
    dim: usize,
    /// Samples per stride of the source series.
    pub source_rate: usize,
}

impl Attractor {
    pub fn from_flat(data: Vec<f64>, dim: usize, source_rate: usize) -> Result<Self, StabilityError> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(StabilityError::InvalidParameter("buffer is not a whole number of points".into()));
        }
        Ok(Self { data, dim, source_rate })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }
}

/// Point `i` is `[s(i), s(i+τ), …, s(i+(d−1)τ)]`.
pub fn delay_embed(
    series: &[f64],
    params: EmbeddingParams,
    source_rate: usize,
) -> Result<Attractor, StabilityError> {
    let EmbeddingParams { tau, dim } = params;
    if tau < 1 || dim < 1 {
        return Err(StabilityError::InvalidParameter("tau and dim must be ≥ 1".into()));
    }
    let span = (dim - 1) * tau;
    if series.len() <= span {
        return Err(StabilityError::TooShort { needed: span + 1, got: series.len() });
    }
    let n = series.len() - span;
    let mut data = Vec::with_capacity(n * dim);
    for i in 0..n {
        data.extend((0..dim).map(|k| series[i + k * tau]));
    }
    Ok(Attractor { data, dim, source_rate })
}

/// Bins across the data range for mutual information.
pub const AMI_BINS: usize = 32;
/// Shifted grids averaged per estimate.
const AMI_SHIFTS: usize = 8;
/// Lags averaged when smoothing the AMI curve.
const AMI_SMOOTHING: usize = 5;

/// Bin indices of `series` on `AMI_SHIFTS` equal-width grids, each offset by
/// a fraction of a bin, `AMI_BINS + 1` bins per grid. Averaging the grids
/// removes most of the alignment jitter a single histogram shows on nearly
/// deterministic signals. The family of grids maps onto itself under
/// reflection, so the estimate is invariant under `s → a·s + b`, `a ≠ 0`.
fn shifted_bins(series: &[f64]) -> Vec<Vec<usize>> {
    let lo = series.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = series.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    (0..AMI_SHIFTS)
        .map(|k| {
            let shift = k as f64 / AMI_SHIFTS as f64;
            series
                .iter()
                .map(|&v| {
                    let u = if span > 0.0 { (v - lo) / span } else { 0.0 };
                    ((u * AMI_BINS as f64 + shift).floor() as usize).min(AMI_BINS)
                })
                .collect()
        })
        .collect()
}

fn mutual_information(bins: &[usize], lag: usize, nb: usize) -> f64 {
    let pairs = bins.len() - lag;
    let mut joint = vec![0u32; nb * nb];
    let mut px = vec![0u32; nb];
    let mut py = vec![0u32; nb];
    for i in 0..pairs {
        let (a, b) = (bins[i], bins[i + lag]);
        joint[a * nb + b] += 1;
        px[a] += 1;
        py[b] += 1;
    }
    let n = pairs as f64;
    let mut mi = 0.0;
    for a in 0..nb {
        for b in 0..nb {
            let c = joint[a * nb + b];
            if c > 0 {
                let c = c as f64;
                mi += c / n * (c * n / (px[a] as f64 * py[b] as f64)).log2();
            }
        }
    }
    mi
}

/// Average mutual information (bits) for lags `1..=max_lag`; entry `k` is
/// lag `k + 1`.
pub fn ami_curve(series: &[f64], max_lag: usize) -> Result<Vec<f64>, StabilityError> {
    if max_lag == 0 {
        return Err(StabilityError::InvalidParameter("max_lag must be ≥ 1".into()));
    }
    if series.len() < 10 * max_lag {
        return Err(StabilityError::TooShort { needed: 10 * max_lag, got: series.len() });
    }
    let grids = shifted_bins(series);
    Ok((1..=max_lag)
        .map(|lag| {
            grids.iter().map(|g| mutual_information(g, lag, AMI_BINS + 1)).sum::<f64>() / AMI_SHIFTS as f64
        })
        .collect())
}

fn smooth(curve: &[f64]) -> Vec<f64> {
    let h = AMI_SMOOTHING / 2;
    (0..curve.len())
        .map(|i| {
            let w = &curve[i.saturating_sub(h)..(i + h + 1).min(curve.len())];
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect()
}

/// First local minimum of the lag-smoothed AMI curve. A curve that never
/// falls below its lag-1 value by more than the plug-in estimator's scatter,
/// `3(B−1) / (N ln 2)` bits, is treated as memoryless and gives lag 1.
pub fn ami_delay(series: &[f64], max_lag: usize) -> Result<usize, StabilityError> {
    let curve = ami_curve(series, max_lag)?;
    let eps = 3.0 * (AMI_BINS - 1) as f64 / (series.len() as f64 * std::f64::consts::LN_2);
    let floor = curve.iter().cloned().fold(f64::INFINITY, f64::min);
    if curve[0] - floor < eps {
        return Ok(1);
    }
    let sm = smooth(&curve);
    for i in 0..max_lag.saturating_sub(1) {
        let falling = i == 0 || sm[i] < sm[i - 1];
        if falling && sm[i] <= sm[i + 1] {
            return Ok(i + 1);
        }
    }
    Err(StabilityError::NoMinimum(max_lag))
}

/// Kennel false-nearest-neighbour criteria.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FnnConfig {
    pub max_dim: usize,
    /// Distance-ratio tolerance.
    pub r_tol: f64,
    /// Attractor-size tolerance.
    pub a_tol: f64,
    /// Accepted false-neighbour fraction.
    pub threshold: f64,
}

impl Default for FnnConfig {
    fn default() -> Self {
        Self {
            max_dim: 10,
            r_tol: 15.0,
            a_tol: 2.0,
            threshold: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FnnResult {
    pub dim: usize,
    /// True when no dimension up to `max_dim` met the threshold.
    pub saturated: bool,
    /// False-neighbour fraction for d = 1, 2, …
    pub fractions: Vec<f64>,
}

/// Fraction of nearest neighbours in `d` dimensions that separate when the
/// `(d+1)`-th delay coordinate is added.
pub fn fnn_fraction(series: &[f64], tau: usize, d: usize, cfg: &FnnConfig) -> Result<f64, StabilityError> {
    let span = d * tau;
    if series.len() <= span + 2 {
        return Err(StabilityError::TooShort { needed: span + 3, got: series.len() });
    }
    let n = series.len() - span;
    let emb = delay_embed(&series[..n + (d - 1) * tau], EmbeddingParams { tau, dim: d }, 0)?;
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    let r_a = (series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / series.len() as f64).sqrt();
    // Repeats of the same state (periodic data) carry no information about
    // folding and would make the distance ratio blow up.
    let dup2 = (DUPLICATE_FRACTION * r_a).powi(2) * d as f64;
    let tree = KdTree::new(emb.as_flat(), d);
    let (mut counted, mut false_nn) = (0usize, 0usize);
    for i in 0..n {
        let q = emb.point(i);
        let Some((j, d2)) = tree.nearest(q, |j| j != i && sq_dist(q, tree.point(j)) > dup2) else {
            continue;
        };
        let r = d2.sqrt();
        let extra = (series[i + span] - series[j + span]).abs();
        counted += 1;
        if extra / r > cfg.r_tol || (d2 + extra * extra).sqrt() / r_a > cfg.a_tol {
            false_nn += 1;
        }
    }
    if counted == 0 {
        return Err(StabilityError::InsufficientData("every neighbour pair coincides".into()));
    }
    Ok(false_nn as f64 / counted as f64)
}

/// Smallest dimension whose false-neighbour fraction falls below the
/// threshold, never less than 2.
pub fn fnn_dimension(series: &[f64], tau: usize, cfg: &FnnConfig) -> Result<FnnResult, StabilityError> {
    if tau < 1 || cfg.max_dim < 2 {
        return Err(StabilityError::InvalidParameter("need tau ≥ 1 and max_dim ≥ 2".into()));
    }
    let mut fractions = Vec::new();
    for d in 1..=cfg.max_dim {
        let f = fnn_fraction(series, tau, d, cfg)?;
        fractions.push(f);
        if f < cfg.threshold {
            return Ok(FnnResult { dim: d.max(2), saturated: false, fractions });
        }
    }
    Ok(FnnResult { dim: cfg.max_dim, saturated: true, fractions })
}
