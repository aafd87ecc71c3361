use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::signal::{time_normalize, TimeSeries};

use super::embedding::{ami_delay, delay_embed, fnn_dimension, Attractor, EmbeddingParams, FnnConfig};
use super::kdtree::{sq_dist, KdTree};
use super::stats::{mean_sd, MeanSd};
use super::{StabilityError, DUPLICATE_FRACTION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceResult {
    /// Mean log distance for steps `0..horizon·samples_per_stride`.
    pub curve: Vec<f64>,
    /// Slope over strides 0–1, per stride.
    pub lambda_s: f64,
    /// Slope over strides 4–10, per stride.
    pub lambda_l: f64,
    /// Neighbour pairs averaged.
    pub pairs: usize,
}

fn ls_slope(y: &[f64], x0: usize, sps: usize) -> f64 {
    let n = y.len() as f64;
    let xs = (0..y.len()).map(|i| (x0 + i) as f64 / sps as f64);
    let mx = xs.clone().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, v) in xs.zip(y) {
        sxy += (x - mx) * (v - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

/// Rosenstein local divergence. Every reference point and its neighbour are
/// followed for the full horizon, so each curve sample averages the same
/// pairs. `theiler` excludes neighbours with `|i − j| ≤ theiler`.
pub fn rosenstein_divergence(
    att: &Attractor,
    samples_per_stride: usize,
    horizon_strides: usize,
    theiler: usize,
) -> Result<DivergenceResult, StabilityError> {
    let sps = samples_per_stride;
    if sps < 2 || horizon_strides < 4 {
        return Err(StabilityError::InvalidParameter(
            "need ≥ 2 samples per stride and a horizon of at least 4 strides".into(),
        ));
    }
    let horizon = horizon_strides * sps;
    if att.len() <= horizon + theiler {
        return Err(StabilityError::TooShort { needed: horizon + theiler + 1, got: att.len() });
    }
    let candidates = att.len() - horizon + 1;
    let dim = att.dim();
    let flat = &att.as_flat()[..candidates * dim];
    let centroid: Vec<f64> = (0..dim)
        .map(|k| (0..candidates).map(|i| flat[i * dim + k]).sum::<f64>() / candidates as f64)
        .collect();
    let scale2 = (0..candidates).map(|i| sq_dist(&flat[i * dim..(i + 1) * dim], &centroid)).sum::<f64>()
        / candidates as f64;
    let dup2 = DUPLICATE_FRACTION * DUPLICATE_FRACTION * scale2;
    let tree = KdTree::new(flat, dim);

    let neighbours: Vec<Option<usize>> = (0..candidates)
        .into_par_iter()
        .map(|j| {
            let q = tree.point(j);
            tree.nearest(q, |k| k.abs_diff(j) > theiler && sq_dist(q, tree.point(k)) > dup2)
                .map(|(k, _)| k)
        })
        .collect();

    let mut sum = vec![0.0; horizon];
    let mut pairs = 0;
    let mut logs = vec![0.0; horizon];
    for (j, nb) in neighbours.iter().enumerate() {
        let Some(k) = *nb else { continue };
        let mut finite = true;
        for (i, l) in logs.iter_mut().enumerate() {
            *l = sq_dist(att.point(j + i), att.point(k + i)).sqrt().ln();
            finite &= l.is_finite();
        }
        if finite {
            sum.iter_mut().zip(&logs).for_each(|(s, l)| *s += l);
            pairs += 1;
        }
    }
    if pairs < 10 {
        return Err(StabilityError::InsufficientData(format!("only {pairs} neighbour pairs")));
    }
    let curve: Vec<f64> = sum.iter().map(|s| s / pairs as f64).collect();
    let lambda_s = ls_slope(&curve[..=sps], 0, sps);
    let lambda_l = ls_slope(&curve[4 * sps..], 4 * sps, sps);
    Ok(DivergenceResult {
        curve,
        lambda_s,
        lambda_l,
        pairs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LyapunovConfig {
    pub window_strides: usize,
    pub n_windows: usize,
    pub points_per_stride: usize,
    pub horizon_strides: usize,
    /// Theiler window in strides.
    pub theiler_strides: f64,
    pub max_lag: usize,
    /// Used when the AMI curve has no minimum.
    pub default_tau: usize,
    pub fnn: FnnConfig,
    /// Skip AMI/FNN and use these parameters.
    pub embedding: Option<EmbeddingParams>,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        Self {
            window_strides: 150,
            n_windows: 25,
            points_per_stride: 100,
            horizon_strides: 10,
            theiler_strides: 1.0,
            max_lag: 30,
            default_tau: 10,
            fnn: FnnConfig::default(),
            embedding: None,
        }
    }
}

impl LyapunovConfig {
    /// Strides needed for the configured windows.
    pub fn strides_needed(&self) -> usize {
        self.window_strides + self.n_windows - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedLyapunov {
    pub params: EmbeddingParams,
    /// AMI found no minimum and `default_tau` was used.
    pub tau_fallback: bool,
    pub fnn_saturated: bool,
    /// Length of every normalized window.
    pub window_points: usize,
    pub lambda_s_windows: Vec<f64>,
    pub lambda_l_windows: Vec<f64>,
    pub lambda_s: MeanSd,
    pub lambda_l: MeanSd,
    /// Divergence curve averaged over windows.
    pub mean_curve: Vec<f64>,
}

/// Lyapunov exponents over `n_windows` overlapping windows of
/// `window_strides` strides, window `w` starting at stride `w`. Each window
/// is time-normalized to `window_strides · points_per_stride` samples.
/// Embedding parameters come from the first window and are reused.
pub fn windowed_lyapunov(
    series: &TimeSeries,
    events: &[usize],
    cfg: &LyapunovConfig,
) -> Result<WindowedLyapunov, StabilityError> {
    if cfg.n_windows == 0 || cfg.window_strides == 0 {
        return Err(StabilityError::InvalidParameter("window count and length must be ≥ 1".into()));
    }
    let strides = events.len().saturating_sub(1);
    if strides < cfg.strides_needed() {
        return Err(StabilityError::InsufficientStrides { needed: cfg.strides_needed(), got: strides });
    }
    let pps = cfg.points_per_stride;
    let window_points = cfg.window_strides * pps;
    let normalize = |w: usize| -> Result<Vec<f64>, StabilityError> {
        let (ts, _) = time_normalize(series, &events[w..], cfg.window_strides, window_points)?;
        Ok(ts.into_samples())
    };

    let first = normalize(0)?;
    let (params, tau_fallback, fnn_saturated) = match cfg.embedding {
        Some(p) => (p, false, false),
        None => {
            let (tau, fallback) = match ami_delay(&first, cfg.max_lag) {
                Ok(t) => (t, false),
                Err(StabilityError::NoMinimum(_)) => (cfg.default_tau, true),
                Err(e) => return Err(e),
            };
            let fnn = fnn_dimension(&first, tau, &cfg.fnn)?;
            (EmbeddingParams::new(tau, fnn.dim)?, fallback, fnn.saturated)
        }
    };
    let theiler = (cfg.theiler_strides * pps as f64).round() as usize;

    let results: Vec<_> = (0..cfg.n_windows)
        .into_par_iter()
        .map(|w| {
            let samples = if w == 0 { first.clone() } else { normalize(w)? };
            let att = delay_embed(&samples, params, pps)?;
            rosenstein_divergence(&att, pps, cfg.horizon_strides, theiler)
        })
        .collect::<Result<_, _>>()?;

    let lambda_s_windows: Vec<f64> = results.iter().map(|r| r.lambda_s).collect();
    let lambda_l_windows: Vec<f64> = results.iter().map(|r| r.lambda_l).collect();
    let horizon = results[0].curve.len();
    let mean_curve = (0..horizon)
        .map(|i| results.iter().map(|r| r.curve[i]).sum::<f64>() / results.len() as f64)
        .collect();
    Ok(WindowedLyapunov {
        params,
        tau_fallback,
        fnn_saturated,
        window_points,
        lambda_s: mean_sd(&lambda_s_windows)?,
        lambda_l: mean_sd(&lambda_l_windows)?,
        lambda_s_windows,
        lambda_l_windows,
        mean_curve,
    })
}
