use crate::signal::{finite_difference, AxisTag, TimeSeries};
use crate::trial::{Marker, Point3};

use super::StabilityError;

/// Per-axis mean of the four pelvis markers, ML/AP/VT in mm. Frames with a
/// non-finite pelvis coordinate are reported, never imputed.
pub fn estimate_com(markers: &[[Point3; 5]], rate: f64) -> Result<[TimeSeries; 3], StabilityError> {
    let mut axes: [Vec<f64>; 3] = Default::default();
    for (frame, m) in markers.iter().enumerate() {
        for marker in Marker::PELVIS {
            let p = m[marker.index()];
            if !(p.ml.is_finite() && p.ap.is_finite() && p.vt.is_finite()) {
                return Err(StabilityError::MarkerGap { frame, marker: marker.name() });
            }
        }
        for (k, axis) in AxisTag::SPATIAL.into_iter().enumerate() {
            let sum: f64 = Marker::PELVIS.iter().map(|mk| m[mk.index()].axis(axis)).sum();
            axes[k].push(sum / 4.0);
        }
    }
    let [ml, ap, vt] = axes;
    Ok([
        TimeSeries::new(ml, rate, 0.0, AxisTag::Ml)?,
        TimeSeries::new(ap, rate, 0.0, AxisTag::Ap)?,
        TimeSeries::new(vt, rate, 0.0, AxisTag::Vt)?,
    ])
}

/// Central-difference velocity of each CoM axis.
pub fn com_velocity(com: &[TimeSeries; 3]) -> Result<[TimeSeries; 3], StabilityError> {
    let v = |s: &TimeSeries| finite_difference(s, s.dt());
    Ok([v(&com[0])?, v(&com[1])?, v(&com[2])?])
}
