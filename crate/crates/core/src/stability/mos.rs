use serde::{Deserialize, Serialize};

use crate::signal::TimeSeries;
use crate::trial::{Point3, GRAVITY};

use super::stats::{mean_sd, MeanSd};
use super::StabilityError;

/// Eigenfrequency of a pendulum of length `l` (m), s⁻¹.
pub fn omega0(l: f64) -> f64 {
    (GRAVITY / l).sqrt()
}

/// Extrapolated centre of mass `p + v/ω₀` for one axis. Position and
/// velocity share a length unit; `l` is in metres.
pub fn xcom(com: &TimeSeries, com_vel: &TimeSeries, l: f64) -> Result<TimeSeries, StabilityError> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(StabilityError::InvalidParameter(format!("pendulum length must be positive, got {l}")));
    }
    if com.len() != com_vel.len() {
        return Err(StabilityError::InvalidParameter("position and velocity lengths differ".into()));
    }
    let w0 = omega0(l);
    let out = com.samples().iter().zip(com_vel.samples()).map(|(p, v)| p + v / w0).collect();
    Ok(TimeSeries::new(out, com.sample_rate(), com.start_time(), com.label())?)
}

/// Mean CoM-to-heel distance at foot strikes, converted from mm to m.
pub fn pendulum_length(com: &[Point3], heel: &[Point3], strikes: &[usize]) -> Result<f64, StabilityError> {
    let valid: Vec<usize> = strikes.iter().copied().filter(|&s| s < com.len() && s < heel.len()).collect();
    if valid.is_empty() {
        return Err(StabilityError::NoEvents);
    }
    let total: f64 = valid
        .iter()
        .map(|&s| {
            let (c, h) = (com[s], heel[s]);
            ((c.ml - h.ml).powi(2) + (c.ap - h.ap).powi(2) + (c.vt - h.vt).powi(2)).sqrt()
        })
        .sum();
    Ok(total / valid.len() as f64 / 1000.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MosSide {
    Left,
    Right,
}

/// Per-cycle margins for one side and direction.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MosCycles {
    /// Margin per analysed cycle, mm.
    pub values: Vec<f64>,
    /// Cycle index of each value.
    pub cycles: Vec<usize>,
    /// Cycles without any stance frame.
    pub skipped: Vec<usize>,
}

impl MosCycles {
    pub fn summary(&self) -> Option<MeanSd> {
        mean_sd(&self.values).ok()
    }
}

fn scan(
    xcom: &[f64],
    cop: &[f64],
    cycles: &[(usize, usize)],
    stance: &[bool],
    fold: fn(f64, f64) -> f64,
    init: f64,
) -> Result<MosCycles, StabilityError> {
    if xcom.len() != cop.len() || cop.len() != stance.len() {
        return Err(StabilityError::InvalidParameter("XcoM, CoP and stance lengths differ".into()));
    }
    let mut out = MosCycles::default();
    for (k, &(start, end)) in cycles.iter().enumerate() {
        if start >= end || end > cop.len() {
            return Err(StabilityError::InvalidParameter(format!("cycle {k} spans {start}..{end}")));
        }
        let m = (start..end)
            .filter(|&i| stance[i])
            .map(|i| (cop[i] - xcom[i]).abs())
            .fold(init, fold);
        if m == init {
            out.skipped.push(k);
        } else {
            out.values.push(m);
            out.cycles.push(k);
        }
    }
    Ok(out)
}

/// Minimum medial-lateral CoP–XcoM distance over the stance frames of
/// each cycle `[start, end)`.
pub fn mos_ml(
    xcom_ml: &[f64],
    cop_ml: &[f64],
    cycles: &[(usize, usize)],
    stance: &[bool],
) -> Result<MosCycles, StabilityError> {
    scan(xcom_ml, cop_ml, cycles, stance, f64::min, f64::INFINITY)
}

/// Maximum anterior-posterior CoP–XcoM distance over the stance frames of
/// each cycle `[start, end)`.
pub fn mos_ap(
    xcom_ap: &[f64],
    cop_ap: &[f64],
    cycles: &[(usize, usize)],
    stance: &[bool],
) -> Result<MosCycles, StabilityError> {
    scan(xcom_ap, cop_ap, cycles, stance, f64::max, f64::NEG_INFINITY)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MosResult {
    pub pendulum_length: f64,
    pub omega0: f64,
    pub left_ml: MosCycles,
    pub left_ap: MosCycles,
    pub right_ml: MosCycles,
    pub right_ap: MosCycles,
}
