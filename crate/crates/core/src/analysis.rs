//! End-to-end analysis of one recorded trial: local dynamic stability of the
//! CoM velocity, margins of stability per side, and prosthesis
//! quasi-stiffness.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::{butterworth_lowpass, finite_difference, moving_average, AxisTag, SignalError, TimeSeries};
use crate::stability::{
    com_velocity, detect_foot_strikes, estimate_com, force_onsets, mos_ap, mos_ml, omega0, pendulum_length,
    windowed_lyapunov, xcom, EventConfig, LyapunovConfig, MeanSd, MosCycles, MosResult, StabilityError,
};
use crate::stiffness::{average_cycle, quasi_stiffness, segment_cycles, GaitPhaseConfig, StiffnessError, StiffnessProfile};
use crate::trial::{Marker, Point3, TrialRecording};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("recording is empty")]
    EmptyRecording,
    #[error("only {got} strides after excluding {excluded}; need at least {needed}")]
    TooFewStrides { needed: usize, got: usize, excluded: usize },
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error(transparent)]
    Stiffness(#[from] StiffnessError),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    /// Low-pass applied to CoM before the Lyapunov analysis.
    pub lyapunov_order: usize,
    pub lyapunov_cutoff: f64,
    /// Low-pass applied to CoM before XcoM.
    pub mos_order: usize,
    pub mos_cutoff: f64,
    /// Moving-average length applied to the CoP, samples.
    pub cop_window: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            lyapunov_order: 2,
            lyapunov_cutoff: 10.0,
            mos_order: 4,
            mos_cutoff: 5.0,
            cop_window: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub filters: FilterConfig,
    pub lyapunov: LyapunovConfig,
    pub events: EventConfig,
    pub phase: GaitPhaseConfig,
    /// Stance is vertical force above this fraction of body weight.
    pub stance_threshold: f64,
    /// Leading strides to drop; `None` uses the recording's own setting.
    pub excluded_strides: Option<usize>,
    /// Skip the Lyapunov stage (its neighbour searches dominate run time).
    pub skip_lyapunov: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            filters: FilterConfig::default(),
            lyapunov: LyapunovConfig::default(),
            events: EventConfig::default(),
            phase: GaitPhaseConfig::default(),
            stance_threshold: 0.05,
            excluded_strides: None,
            skip_lyapunov: false,
        }
    }
}

/// Lyapunov summary for one CoM velocity axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisLyapunov {
    pub axis: AxisTag,
    pub tau: usize,
    pub dim: usize,
    pub tau_fallback: bool,
    pub fnn_saturated: bool,
    pub n_windows: usize,
    pub window_points: usize,
    pub lambda_s: MeanSd,
    pub lambda_l: MeanSd,
    pub lambda_s_windows: Vec<f64>,
    pub lambda_l_windows: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StiffnessSummary {
    pub n_cycles: usize,
    /// Mean over 20–85 % of stance.
    pub window_mean: Option<f64>,
    /// Mean over 60–85 % of stance.
    pub terminal: Option<f64>,
    pub profile: StiffnessProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub rate: f64,
    pub excluded_strides: usize,
    pub strides_analyzed: usize,
    pub lyapunov: Vec<AxisLyapunov>,
    pub mos: MosResult,
    pub stiffness: StiffnessSummary,
    pub warnings: Vec<String>,
}

impl StabilityReport {
    pub fn axis(&self, axis: AxisTag) -> Option<&AxisLyapunov> {
        self.lyapunov.iter().find(|a| a.axis == axis)
    }
}

/// Curves for plotting alongside a report.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlotData {
    /// Window-averaged divergence curve per axis, sample index in strides.
    pub divergence: Vec<(AxisTag, Vec<f64>)>,
    pub points_per_stride: usize,
    /// Cycle-averaged ankle angle (deg), angular velocity (deg/s) and
    /// moment (Nm) over the gait cycle.
    pub gait_percent: Vec<f64>,
    pub angle: Vec<f64>,
    pub angle_rate: Vec<f64>,
    pub moment: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub report: StabilityReport,
    pub plots: PlotData,
}

fn lowpass(series: &TimeSeries, order: usize, cutoff: f64) -> Result<TimeSeries, SignalError> {
    butterworth_lowpass(series, order, cutoff, true)
}

/// Run the full pipeline on one recording.
pub fn analyze_trial(rec: &TrialRecording, cfg: &AnalysisConfig) -> Result<Analysis, AnalysisError> {
    if rec.is_empty() {
        return Err(AnalysisError::EmptyRecording);
    }
    rec.validate().map_err(|e| StabilityError::InvalidParameter(e.to_string()))?;
    let rate = rec.rate;
    let mut warnings = Vec::new();
    let excluded = cfg.excluded_strides.unwrap_or(rec.excluded_strides);

    let heel = |axis| TimeSeries::new(rec.marker_axis(Marker::Lheel, axis), rate, 0.0, axis);
    let strikes = detect_foot_strikes(&heel(AxisTag::Vt)?, &heel(AxisTag::Ap)?, &cfg.events)?;
    if strikes.len() < excluded + 2 {
        return Err(AnalysisError::TooFewStrides {
            needed: 1,
            got: strikes.len().saturating_sub(excluded + 1),
            excluded,
        });
    }
    let left = &strikes[excluded..];
    let strides = left.len() - 1;

    let com = estimate_com(&rec.markers, rate)?;

    // Local dynamic stability.
    let mut lyapunov = Vec::new();
    let mut divergence = Vec::new();
    if !cfg.skip_lyapunov {
        let mut lcfg = cfg.lyapunov;
        if strides < lcfg.window_strides {
            return Err(AnalysisError::TooFewStrides { needed: lcfg.window_strides, got: strides, excluded });
        }
        if strides < lcfg.strides_needed() {
            let n = strides - lcfg.window_strides + 1;
            warnings.push(format!(
                "{strides} strides analyzed; Lyapunov windows reduced from {} to {n}",
                lcfg.n_windows
            ));
            lcfg.n_windows = n;
        }
        let velocity: Vec<TimeSeries> = com
            .iter()
            .map(|c| {
                let f = lowpass(c, cfg.filters.lyapunov_order, cfg.filters.lyapunov_cutoff)?;
                finite_difference(&f, f.dt())
            })
            .collect::<Result<_, _>>()?;
        for v in &velocity {
            let r = windowed_lyapunov(v, left, &lcfg)?;
            if r.tau_fallback {
                warnings.push(format!("{}: no AMI minimum, default delay used", v.label().name()));
            }
            if r.fnn_saturated {
                warnings.push(format!("{}: false-neighbour fraction never fell below threshold", v.label().name()));
            }
            lyapunov.push(AxisLyapunov {
                axis: v.label(),
                tau: r.params.tau,
                dim: r.params.dim,
                tau_fallback: r.tau_fallback,
                fnn_saturated: r.fnn_saturated,
                n_windows: lcfg.n_windows,
                window_points: r.window_points,
                lambda_s: r.lambda_s,
                lambda_l: r.lambda_l,
                lambda_s_windows: r.lambda_s_windows,
                lambda_l_windows: r.lambda_l_windows,
            });
            divergence.push((v.label(), r.mean_curve));
        }
    }

    let mos = margins_of_stability(rec, &com, left, cfg)?;
    let (stiffness, cycle_plots) = prosthesis_stiffness(rec, left, &cfg.phase)?;

    let report = StabilityReport {
        rate,
        excluded_strides: excluded,
        strides_analyzed: strides,
        lyapunov,
        mos,
        stiffness,
        warnings,
    };
    let plots = PlotData {
        divergence,
        points_per_stride: cfg.lyapunov.points_per_stride,
        ..cycle_plots
    };
    Ok(Analysis { report, plots })
}

fn margins_of_stability(
    rec: &TrialRecording,
    com: &[TimeSeries; 3],
    left: &[usize],
    cfg: &AnalysisConfig,
) -> Result<MosResult, AnalysisError> {
    let rate = rec.rate;
    let f = &cfg.filters;
    let filtered = [
        lowpass(&com[0], f.mos_order, f.mos_cutoff)?,
        lowpass(&com[1], f.mos_order, f.mos_cutoff)?,
        lowpass(&com[2], f.mos_order, f.mos_cutoff)?,
    ];
    let vel = com_velocity(&filtered)?;

    let com_points: Vec<Point3> = (0..rec.len())
        .map(|i| Point3 {
            ml: filtered[0].samples()[i],
            ap: filtered[1].samples()[i],
            vt: filtered[2].samples()[i],
        })
        .collect();
    let heel: Vec<Point3> = rec.markers.iter().map(|m| m[Marker::Lheel.index()]).collect();
    let l = pendulum_length(&com_points, &heel, left)?;
    let xcom_ml = xcom(&filtered[0], &vel[0], l)?;
    let xcom_ap = xcom(&filtered[1], &vel[1], l)?;

    // Body weight from the mean total vertical force over whole strides.
    let (first, last) = (left[0], left[left.len() - 1]);
    let total: f64 = (first..last).map(|i| rec.cop_left[i].fz + rec.cop_right[i].fz).sum();
    let bw = total / (last - first) as f64;
    let threshold = cfg.stance_threshold * bw;

    let side = |cop: &[crate::trial::CopSample], cycles: &[(usize, usize)]| -> Result<(MosCycles, MosCycles), AnalysisError> {
        let smooth = |v: Vec<f64>| -> Result<Vec<f64>, SignalError> {
            Ok(moving_average(&TimeSeries::scalar(v, rate)?, f.cop_window)?.into_samples())
        };
        let cop_ml = smooth(cop.iter().map(|c| c.ml).collect())?;
        let cop_ap = smooth(cop.iter().map(|c| c.ap).collect())?;
        let stance: Vec<bool> = cop.iter().map(|c| c.fz > threshold).collect();
        Ok((
            mos_ml(xcom_ml.samples(), &cop_ml, cycles, &stance)?,
            mos_ap(xcom_ap.samples(), &cop_ap, cycles, &stance)?,
        ))
    };

    let left_cycles: Vec<(usize, usize)> = left.windows(2).map(|w| (w[0], w[1])).collect();
    let fz_right: Vec<f64> = rec.cop_right.iter().map(|c| c.fz).collect();
    let right_strikes: Vec<usize> = force_onsets(&fz_right, threshold)
        .into_iter()
        .filter(|&i| i >= first && i <= last)
        .collect();
    let right_cycles: Vec<(usize, usize)> = right_strikes.windows(2).map(|w| (w[0], w[1])).collect();

    let (left_ml, left_ap) = side(&rec.cop_left, &left_cycles)?;
    let (right_ml, right_ap) = side(&rec.cop_right, &right_cycles)?;
    Ok(MosResult {
        pendulum_length: l,
        omega0: omega0(l),
        left_ml,
        left_ap,
        right_ml,
        right_ap,
    })
}

fn prosthesis_stiffness(
    rec: &TrialRecording,
    left: &[usize],
    phase: &GaitPhaseConfig,
) -> Result<(StiffnessSummary, PlotData), AnalysisError> {
    // Prosthesis channels are used as logged: filtering the moment and
    // angle would smear the moment–angle slope the analysis measures.
    let q: Vec<f64> = rec.prosthesis.iter().map(|p| p.state.q).collect();
    let m: Vec<f64> = rec.prosthesis.iter().map(|p| p.state.moment).collect();
    let q_rate = finite_difference(&TimeSeries::scalar(q.clone(), rec.rate)?, 1.0 / rec.rate)?.into_samples();

    let n = phase.points_per_cycle;
    let q_cycles = segment_cycles(&q, left, n)?;
    let m_cycles = segment_cycles(&m, left, n)?;
    let avg = average_cycle(&m_cycles, &q_cycles)?;
    let rate_cycles = segment_cycles(&q_rate, left, n)?;
    let rate_avg = average_cycle(&rate_cycles, &q_cycles)?;
    let profile = quasi_stiffness(&avg, phase)?;

    let lo = 100.0 * phase.window.0;
    let hi = 100.0 * phase.window.1;
    let summary = StiffnessSummary {
        n_cycles: avg.n_cycles,
        window_mean: profile.mean_between(lo, hi),
        terminal: profile.terminal(),
        profile,
    };
    let plots = PlotData {
        gait_percent: (0..n).map(|i| 100.0 * i as f64 / n as f64).collect(),
        angle: avg.mean_angle,
        angle_rate: rate_avg.mean_moment,
        moment: avg.mean_moment,
        ..PlotData::default()
    };
    Ok((summary, plots))
}
