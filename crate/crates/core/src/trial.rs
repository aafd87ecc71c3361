//! Synthetic treadmill trials: a kinematic gait template drives the
//! controller and plant in closed loop while pelvis markers, heel marker,
//! force-plate centre of pressure and the prosthesis log are recorded.
//!
//! Axes are ML (positive to the right), AP (positive forward), VT (up); marker
//! and CoP positions are in mm. The prosthesis is on the left.

use std::f64::consts::{PI, TAU};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{
    build_gait_lut, AdmittanceParams, ControlError, Controller, ControllerConfig, ControllerLuts,
    ControllerMode, PhaseEstimatorConfig, ProsthesisState,
};
use crate::lut::{build_lut_from_map, uniform_grid, LutError};
use crate::plant::{ground_deflection, step_plant, PlantConfig, PlantError, PlantInput, PlantState, Terrain};
use crate::signal::{resample_linear, AxisTag, TimeSeries};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrialError {
    #[error("invalid trial settings: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Lut(#[from] LutError),
}

pub const GRAVITY: f64 = 9.81;
/// Stance occupies this fraction of each gait cycle.
pub const STANCE_FRACTION: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Marker {
    #[serde(rename = "LASI")]
    Lasi,
    #[serde(rename = "RASI")]
    Rasi,
    #[serde(rename = "LPSI")]
    Lpsi,
    #[serde(rename = "RPSI")]
    Rpsi,
    #[serde(rename = "LHEEL")]
    Lheel,
}

impl Marker {
    pub const ALL: [Marker; 5] = [Marker::Lasi, Marker::Rasi, Marker::Lpsi, Marker::Rpsi, Marker::Lheel];
    pub const PELVIS: [Marker; 4] = [Marker::Lasi, Marker::Rasi, Marker::Lpsi, Marker::Rpsi];

    pub fn name(self) -> &'static str {
        match self {
            Marker::Lasi => "LASI",
            Marker::Rasi => "RASI",
            Marker::Lpsi => "LPSI",
            Marker::Rpsi => "RPSI",
            Marker::Lheel => "LHEEL",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub ml: f64,
    pub ap: f64,
    pub vt: f64,
}

impl Point3 {
    pub fn axis(&self, axis: AxisTag) -> f64 {
        match axis {
            AxisTag::Ml => self.ml,
            AxisTag::Ap => self.ap,
            AxisTag::Vt | AxisTag::Scalar => self.vt,
        }
    }
}

/// Centre of pressure (mm) and vertical force (N) under one foot.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CopSample {
    pub ml: f64,
    pub ap: f64,
    pub fz: f64,
}

/// One controller tick as logged by the prosthesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProsthesisLog {
    pub t: f64,
    pub mode: ControllerMode,
    pub state: ProsthesisState,
    pub gait_percent: f64,
    pub stride_length: f64,
    pub q_d: f64,
    pub x_cmd: f64,
    /// Ground deflection under the prosthetic foot, mm.
    pub deflection: f64,
}

/// Synchronized channels of one walking trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecording {
    pub rate: f64,
    pub markers: Vec<[Point3; 5]>,
    pub cop_left: Vec<CopSample>,
    pub cop_right: Vec<CopSample>,
    pub prosthesis: Vec<ProsthesisLog>,
    pub events_left: Vec<usize>,
    pub events_right: Vec<usize>,
    /// Leading strides to drop before analysis.
    pub excluded_strides: usize,
}

impl TrialRecording {
    pub fn len(&self) -> usize {
        self.markers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.markers.is_empty()
    }

    pub fn marker_axis(&self, marker: Marker, axis: AxisTag) -> Vec<f64> {
        self.markers.iter().map(|f| f[marker.index()].axis(axis)).collect()
    }

    pub fn validate(&self) -> Result<(), TrialError> {
        let n = self.markers.len();
        if self.cop_left.len() != n || self.cop_right.len() != n || self.prosthesis.len() != n {
            return Err(TrialError::InvalidSpec("channel lengths differ".into()));
        }
        for (name, ev) in [("left", &self.events_left), ("right", &self.events_right)] {
            if ev.windows(2).any(|w| w[0] >= w[1]) || ev.last().is_some_and(|&e| e >= n) {
                return Err(TrialError::InvalidSpec(format!(
                    "{name} events not strictly increasing within the trial"
                )));
            }
        }
        Ok(())
    }
}

/// Stride-to-stride variability. Jitter values are relative standard
/// deviations; `persistence` is the lag-one autocorrelation of the
/// stride-to-stride fluctuations (0 = independent strides).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Variability {
    pub period_jitter: f64,
    pub amplitude_jitter: f64,
    pub persistence: f64,
    /// Marker measurement noise, mm.
    pub marker_noise: f64,
}

impl Default for Variability {
    fn default() -> Self {
        Self {
            period_jitter: 0.02,
            amplitude_jitter: 0.02,
            persistence: 0.0,
            marker_noise: 0.0,
        }
    }
}

impl Variability {
    pub fn none() -> Self {
        Self {
            period_jitter: 0.0,
            amplitude_jitter: 0.0,
            persistence: 0.0,
            marker_noise: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationKind {
    /// Ground stiffness changes by `magnitude` kN/m from the stride onward.
    StiffnessStep,
    /// Extra ankle moment peaking at `magnitude` Nm during one stance.
    LoadImpulse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub kind: PerturbationKind,
    pub at_stride: usize,
    pub magnitude: f64,
}

/// Controller choice for a trial; the phase estimator is calibrated from the
/// gait template.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerSettings {
    pub mode: ControllerMode,
    /// Desired stiffness, Nm/deg (AC only).
    pub k_d: f64,
    /// Angle feedback gain, mm/deg.
    pub fb_gain: f64,
    /// Moment feedback gain, mm/Nm.
    pub k_m: f64,
}

impl ControllerSettings {
    pub fn tc() -> Self {
        Self {
            mode: ControllerMode::Tc,
            k_d: 10.0,
            fb_gain: AdmittanceParams::DEFAULT_FB_GAIN,
            k_m: ControllerConfig::DEFAULT_K_M,
        }
    }

    pub fn ac(k_d: f64) -> Self {
        Self {
            mode: ControllerMode::Ac,
            k_d,
            ..Self::tc()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub plant: PlantConfig,
    pub controller: ControllerSettings,
    pub n_strides: usize,
    /// Mean stride period, s.
    pub stride_period: f64,
    pub seed: u64,
    pub variability: Variability,
    pub perturbations: Vec<Perturbation>,
    pub body_mass: f64,
    /// Peak ankle moment of the load template, Nm.
    pub peak_ankle_moment: f64,
    /// Tibia swing amplitude, deg.
    pub tibia_amplitude: f64,
    pub excluded_strides: usize,
}

impl Default for TrialSpec {
    fn default() -> Self {
        Self {
            plant: PlantConfig::default(),
            controller: ControllerSettings::tc(),
            n_strides: 200,
            stride_period: 1.47,
            seed: 0,
            variability: Variability::default(),
            perturbations: Vec::new(),
            body_mass: 60.0,
            peak_ankle_moment: 80.0,
            tibia_amplitude: 20.0,
            excluded_strides: 25,
        }
    }
}

impl TrialSpec {
    pub fn rate(&self) -> f64 {
        1.0 / self.plant.dt
    }

    /// Stride length walked at the nominal period and belt speed, m.
    pub fn self_selected_stride(&self) -> f64 {
        self.plant.belt_speed * self.stride_period
    }

    pub fn body_weight(&self) -> f64 {
        self.body_mass * GRAVITY
    }

    pub fn validate(&self) -> Result<(), TrialError> {
        self.plant.validate()?;
        if self.n_strides < 2 {
            return Err(TrialError::InvalidSpec("need at least 2 strides".into()));
        }
        let positive = [
            ("stride_period", self.stride_period),
            ("body_mass", self.body_mass),
            ("tibia_amplitude", self.tibia_amplitude),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(TrialError::InvalidSpec(format!("{name} must be positive, got {v}")));
            }
        }
        let v = &self.variability;
        if !(0.0..0.2).contains(&v.period_jitter)
            || !(0.0..0.5).contains(&v.amplitude_jitter)
            || !(0.0..1.0).contains(&v.persistence)
            || !(v.marker_noise >= 0.0)
        {
            return Err(TrialError::InvalidSpec(format!("variability out of range: {v:?}")));
        }
        for p in &self.perturbations {
            if p.at_stride >= self.n_strides {
                return Err(TrialError::InvalidSpec(format!(
                    "perturbation at stride {} beyond {} strides",
                    p.at_stride, self.n_strides
                )));
            }
            if p.kind == PerturbationKind::StiffnessStep && p.magnitude != 0.0 {
                match self.plant.terrain {
                    Terrain::Rigid => {
                        return Err(TrialError::InvalidSpec(
                            "stiffness step needs compliant terrain".into(),
                        ))
                    }
                    Terrain::Compliant { stiffness } if stiffness + p.magnitude <= 0.0 => {
                        return Err(TrialError::InvalidSpec(format!(
                            "stiffness step leaves {} kN/m",
                            stiffness + p.magnitude
                        )))
                    }
                    _ => {}
                }
            }
        }
        if self.controller.mode == ControllerMode::Ac {
            AdmittanceParams {
                fb_gain: self.controller.fb_gain,
                ..AdmittanceParams::new(self.controller.k_d)?
            }
            .validated()?;
        }
        Ok(())
    }
}

/// Add a perturbation to trial settings.
pub fn inject_perturbation(
    spec: &TrialSpec,
    kind: PerturbationKind,
    at_stride: usize,
    magnitude: f64,
) -> TrialSpec {
    let mut out = spec.clone();
    out.perturbations.push(Perturbation {
        kind,
        at_stride,
        magnitude,
    });
    out
}

// ---------------------------------------------------------------------------
// Gait template. All profiles take the gait fraction φ ∈ [0, 1) measured from
// the foot strike of the relevant leg.

fn raised_cosine(u: f64) -> f64 {
    0.5 - 0.5 * (PI * u.clamp(0.0, 1.0)).cos()
}

/// Reference ankle angle (deg) at self-selected pace: brief heel rocker,
/// smooth rise to a plateau held through stance, push-off
/// plantarflexion, return to neutral in swing.
pub fn gait_reference_template(phi: f64) -> f64 {
    const HEEL_ROCKER: f64 = -4.0;
    const PLATEAU: f64 = 5.0;
    const PUSH_OFF: f64 = -15.0;
    let phi = phi.rem_euclid(1.0);
    if phi < 0.03 {
        HEEL_ROCKER * (0.5 * PI * phi / 0.03).sin().powi(2)
    } else if phi < 0.07 {
        HEEL_ROCKER + (PLATEAU - HEEL_ROCKER) * raised_cosine((phi - 0.03) / 0.04)
    } else if phi < 0.55 {
        PLATEAU
    } else if phi < 0.63 {
        PLATEAU + (PUSH_OFF - PLATEAU) * raised_cosine((phi - 0.55) / 0.08)
    } else {
        PUSH_OFF * (1.0 - raised_cosine((phi - 0.63) / 0.37))
    }
}

/// External ankle moment as a fraction of its peak: a small heel-strike
/// plantarflexion moment, a monotone rise to the peak late in stance, then
/// release before toe-off.
pub fn ankle_load_profile(phi: f64) -> f64 {
    let phi = phi.rem_euclid(1.0);
    if phi < 0.06 {
        -0.06 * (PI * phi / 0.06).sin().powi(2)
    } else if phi < 0.55 {
        let u = (phi - 0.06) / 0.49;
        1.0 - (1.0 - u) * (1.0 - u)
    } else if phi < STANCE_FRACTION {
        (0.5 * PI * (phi - 0.55) / (STANCE_FRACTION - 0.55)).cos().powi(2)
    } else {
        0.0
    }
}

/// Vertical ground reaction as a fraction of body weight: two peaks of about
/// 1.1 with a mid-stance trough, zero in swing.
pub fn vertical_force_profile(phi: f64) -> f64 {
    let phi = phi.rem_euclid(1.0);
    if phi >= STANCE_FRACTION {
        return 0.0;
    }
    let s = phi / STANCE_FRACTION;
    1.1625 * (PI * s).sin() + 0.3933 * (3.0 * PI * s).sin()
}

const PELVIS_HEIGHT: f64 = 920.0;
const FOOT_ML: f64 = 110.0;
const FOOT_LENGTH: f64 = 220.0;
const HEEL_LIFT: f64 = 30.0;
const SWING_CLEARANCE: f64 = 110.0;
const TIBIA_PHASE0: f64 = 0.0;

/// Pelvis-centre template (mm) per axis, before amplitude modulation.
fn com_template(axis: AxisTag, phi: f64) -> f64 {
    let w = TAU * phi;
    match axis {
        AxisTag::Ml => -28.0 * (w - TAU * 0.3).cos() + 6.0 * (3.0 * w + 0.5).sin() + 2.0 * (5.0 * w + 1.1).sin(),
        AxisTag::Ap => 12.0 * (2.0 * w + 0.3).sin() + 4.0 * (4.0 * w + 1.0).sin() + 1.5 * (6.0 * w).sin(),
        AxisTag::Vt | AxisTag::Scalar => -20.0 * (2.0 * w).cos() + 5.0 * (4.0 * w + 0.7).sin() + 2.0 * (6.0 * w + 1.3).sin(),
    }
}

/// Heel height above the ground (mm): minimum exactly at foot strike.
fn heel_height(phi: f64) -> f64 {
    let phi = phi.rem_euclid(1.0);
    let swing = if phi > 0.6 && phi < 0.97 {
        (PI * (phi - 0.6) / 0.37).sin().powi(2)
    } else {
        0.0
    };
    HEEL_LIFT * 0.5 * (1.0 - (TAU * phi).cos()) + SWING_CLEARANCE * swing
}

/// Heel AP (mm): carried back by the belt in stance, swung forward in swing.
fn heel_ap(phi: f64, period: f64, belt_speed: f64) -> f64 {
    let phi = phi.rem_euclid(1.0);
    let travel = belt_speed * period * 1000.0 * STANCE_FRACTION;
    let front = 0.5 * travel;
    if phi < STANCE_FRACTION {
        front - travel * phi / STANCE_FRACTION
    } else {
        front - travel * (1.0 - raised_cosine((phi - STANCE_FRACTION) / (1.0 - STANCE_FRACTION)))
    }
}

/// Marker offsets from the pelvis centre with zero mean over the four
/// pelvis markers, rotated by the pelvis yaw.
fn pelvis_offsets(yaw: f64) -> [Point3; 4] {
    let (s, c) = yaw.sin_cos();
    let rot = |ml: f64, ap: f64, vt: f64| Point3 {
        ml: c * ml - s * ap,
        ap: s * ml + c * ap,
        vt,
    };
    [
        rot(-120.0, 60.0, 20.0),
        rot(120.0, 60.0, 20.0),
        rot(-50.0, -60.0, -20.0),
        rot(50.0, -60.0, -20.0),
    ]
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
struct StrideParams {
    start: f64,
    period: f64,
    /// Relative amplitude factors for ML, AP, VT pelvis motion.
    amp: [f64; 3],
    tibia: f64,
}

/// Timing and amplitude of every stride, including one virtual stride before
/// the first and one after the last foot strike.
struct Schedule {
    strides: Vec<StrideParams>,
}

impl Schedule {
    fn new(spec: &TrialSpec, rng: &mut ChaCha8Rng) -> Self {
        let n = spec.n_strides + 2;
        let v = &spec.variability;
        let mut ar = |sd: f64| -> Vec<f64> {
            let innov = (1.0 - v.persistence * v.persistence).sqrt();
            let mut prev: f64 = StandardNormal.sample(rng);
            (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    prev = v.persistence * prev + innov * z;
                    sd * prev
                })
                .collect()
        };
        let period = ar(v.period_jitter);
        let amps: Vec<Vec<f64>> = (0..3).map(|_| ar(v.amplitude_jitter)).collect();
        let tibia = ar(v.amplitude_jitter);

        let t_nom = spec.stride_period;
        let mut strides = Vec::with_capacity(n);
        // Virtual stride −1 ends at the first foot strike, about half a
        // stride in and aligned to a sample.
        let rate = spec.rate();
        let mut start = (0.5 * t_nom * rate).round() / rate - t_nom;
        for k in 0..n {
            let virtual_stride = k == 0 || k == n - 1;
            let p = if virtual_stride { t_nom } else { t_nom * (1.0 + period[k]) };
            strides.push(StrideParams {
                start,
                period: p,
                amp: [1.0 + amps[0][k], 1.0 + amps[1][k], 1.0 + amps[2][k]],
                tibia: 1.0 + tibia[k],
            });
            start += p;
        }
        Self { strides }
    }

    /// Time of left foot strike `k` (k = 0..=n_strides).
    fn strike(&self, k: usize) -> f64 {
        self.strides[k + 1].start
    }

    fn end(&self) -> f64 {
        let last = self.strides[self.strides.len() - 1];
        last.start + 0.5 * last.period
    }

    /// Stride index (into `strides`) and gait fraction at time `t`.
    fn locate(&self, t: f64) -> (usize, f64) {
        let k = self
            .strides
            .partition_point(|s| s.start <= t)
            .saturating_sub(1);
        let s = &self.strides[k];
        (k, ((t - s.start) / s.period).clamp(0.0, 1.0 - 1e-15))
    }

    /// Amplitude factor interpolated from this stride's value to the next.
    fn blend(&self, k: usize, phi: f64, f: impl Fn(&StrideParams) -> f64) -> f64 {
        let a = f(&self.strides[k]);
        let b = self.strides.get(k + 1).map_or(a, &f);
        a + phi * (b - a)
    }
}

/// Ground truth produced alongside a recording.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialTruth {
    /// Pelvis centre per frame, mm.
    pub com: Vec<Point3>,
    /// Exact left foot-strike times, s.
    pub strike_times: Vec<f64>,
}

/// Simulate a trial.
pub fn generate_trial(spec: &TrialSpec) -> Result<TrialRecording, TrialError> {
    Ok(generate_trial_with_truth(spec)?.0)
}

/// Simulate a trial and also return the generator's ground truth.
pub fn generate_trial_with_truth(spec: &TrialSpec) -> Result<(TrialRecording, TrialTruth), TrialError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let schedule = Schedule::new(spec, &mut rng);
    let rate = spec.rate();
    let dt = spec.plant.dt;
    let n_frames = (schedule.end() * rate).floor() as usize + 1;
    let bw = spec.body_weight();
    let ssp = spec.self_selected_stride();
    let n = spec.n_strides;
    let belt = spec.plant.belt_speed;

    // Left stride k (0-based) is schedule stride k + 1.
    let terrain_for = |stride: usize| -> Terrain {
        let mut terrain = spec.plant.terrain;
        for p in &spec.perturbations {
            if p.kind == PerturbationKind::StiffnessStep && stride > p.at_stride {
                if let Terrain::Compliant { stiffness } = terrain {
                    terrain = Terrain::Compliant { stiffness: stiffness + p.magnitude };
                }
            }
        }
        terrain
    };
    let impulse_for = |stride: usize| -> f64 {
        spec.perturbations
            .iter()
            .filter(|p| p.kind == PerturbationKind::LoadImpulse && stride == p.at_stride + 1)
            .map(|p| p.magnitude)
            .sum()
    };

    let moment_lut = build_lut_from_map(
        &spec.plant.moment_map,
        &uniform_grid(-40.0, 40.0, 1.0),
        &uniform_grid(-30.0, 30.0, 1.0),
    )?;
    let gait_lut = build_gait_lut(gait_reference_template, ssp, &[0.0, 0.5, 1.0, 1.5, 2.0])?;
    let phase_cfg = PhaseEstimatorConfig::for_sinusoid(
        spec.stride_period,
        spec.tibia_amplitude,
        TIBIA_PHASE0,
        ssp,
    );
    let ctl_cfg = ControllerConfig {
        mode: spec.controller.mode,
        admittance: AdmittanceParams {
            k_d: spec.controller.k_d,
            b_d: 0.0,
            i_d: 0.0,
            fb_gain: spec.controller.fb_gain,
        },
        k_m: spec.controller.k_m,
        phase: phase_cfg,
    };
    let mut controller = Controller::new(
        ctl_cfg,
        ControllerLuts {
            moment: moment_lut.clone(),
            gait: gait_lut,
        },
    )?;

    let model = &moment_lut;
    let mut plant = PlantState::at_rest(0.0, model);
    let mut plant_cfg = spec.plant;

    let mut markers = Vec::with_capacity(n_frames);
    let mut com_truth = Vec::with_capacity(n_frames);
    let mut prosthesis = Vec::with_capacity(n_frames);
    let mut force_left = Vec::with_capacity(n_frames);
    let mut force_right = Vec::with_capacity(n_frames);

    for i in 0..n_frames {
        let t = i as f64 / rate;
        let (k, phi) = schedule.locate(t);
        let sp = schedule.strides[k];
        let terrain = terrain_for(k);
        plant_cfg.terrain = terrain;

        // Right leg leads the left by half a stride.
        let phi_r = (phi + 0.5).rem_euclid(1.0);
        let f_left = bw * vertical_force_profile(phi);
        let f_right = bw * vertical_force_profile(phi_r);
        force_left.push(f_left);
        force_right.push(f_right);
        let d_left = ground_deflection(f_left, &terrain);
        let d_right = ground_deflection(f_right, &terrain);
        let total = f_left + f_right;
        let sink = if total > 0.0 { (f_left * d_left + f_right * d_right) / total } else { 0.0 };

        let com = Point3 {
            ml: schedule.blend(k, phi, |s| s.amp[0]) * com_template(AxisTag::Ml, phi),
            ap: schedule.blend(k, phi, |s| s.amp[1]) * com_template(AxisTag::Ap, phi),
            vt: PELVIS_HEIGHT + schedule.blend(k, phi, |s| s.amp[2]) * com_template(AxisTag::Vt, phi) - sink,
        };
        com_truth.push(com);
        let yaw = 5f64.to_radians() * (TAU * phi).sin();
        let mut frame = [Point3::default(); 5];
        for (slot, off) in frame.iter_mut().zip(pelvis_offsets(yaw)) {
            *slot = Point3 {
                ml: com.ml + off.ml,
                ap: com.ap + off.ap,
                vt: com.vt + off.vt,
            };
        }
        frame[Marker::Lheel.index()] = Point3 {
            ml: -FOOT_ML,
            ap: heel_ap(phi, sp.period, belt),
            vt: heel_height(phi),
        };
        markers.push(frame);

        // Closed loop tick.
        let tibia_amp = spec.tibia_amplitude * schedule.blend(k, phi, |s| s.tibia);
        let omega = tibia_amp * TAU / sp.period * (TAU * phi + TIBIA_PHASE0).cos();
        let sensed = ProsthesisState {
            x: plant.x,
            q: plant.q,
            moment: plant.moment,
            tibia_omega: omega,
        };
        let out = controller.tick(&sensed, dt)?;
        prosthesis.push(ProsthesisLog {
            t,
            mode: spec.controller.mode,
            state: sensed,
            gait_percent: controller.phase.gait_percent,
            stride_length: controller.phase.stride_length,
            q_d: out.q_d,
            x_cmd: out.x_cmd,
            deflection: d_left,
        });
        let load = spec.peak_ankle_moment * ankle_load_profile(phi)
            + impulse_for(k) * if phi < STANCE_FRACTION { (PI * phi / STANCE_FRACTION).sin() } else { 0.0 };
        plant = step_plant(
            &plant,
            &PlantInput {
                motor_cmd: out.x_cmd,
                external_moment: load,
                vertical_force: f_left,
            },
            &plant_cfg,
            model,
        )?;
    }

    if spec.variability.marker_noise > 0.0 {
        let sd = spec.variability.marker_noise;
        for frame in &mut markers {
            for p in frame.iter_mut() {
                let z: [f64; 3] = [
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                ];
                p.ml += sd * z[0];
                p.ap += sd * z[1];
                p.vt += sd * z[2];
            }
        }
    }

    let cop_left = force_plate(&schedule, spec, n_frames, false)?;
    let cop_right = force_plate(&schedule, spec, n_frames, true)?;

    let strike_times: Vec<f64> = (0..=n).map(|k| schedule.strike(k)).collect();
    let events_left = strike_times.iter().map(|t| (t * rate).round() as usize).collect();
    let events_right = (0..schedule.strides.len())
        .map(|k| schedule.strides[k].start + 0.5 * schedule.strides[k].period)
        .map(|t| (t * rate).round())
        .filter(|&i| i >= 1.0 && (i as usize) < n_frames - 1)
        .map(|i| i as usize)
        .collect();

    let rec = TrialRecording {
        rate,
        markers,
        cop_left,
        cop_right,
        prosthesis,
        events_left,
        events_right,
        excluded_strides: spec.excluded_strides,
    };
    rec.validate()?;
    Ok((
        rec,
        TrialTruth {
            com: com_truth,
            strike_times,
        },
    ))
}

/// Force-plate rate of the simulated treadmill, Hz.
pub const FORCE_PLATE_RATE: f64 = 65.0;

/// Centre of pressure sampled at the force-plate rate and upsampled to the
/// recording rate. Between stances the last toe-off position is held.
fn force_plate(
    schedule: &Schedule,
    spec: &TrialSpec,
    n_frames: usize,
    right: bool,
) -> Result<Vec<CopSample>, TrialError> {
    let rate = spec.rate();
    let span = (n_frames - 1) as f64 / rate;
    let m = (span * FORCE_PLATE_RATE).floor() as usize + 1;
    let bw = spec.body_weight();
    let belt = spec.plant.belt_speed;
    let side = if right { 1.0 } else { -1.0 };
    let mut ml = Vec::with_capacity(m);
    let mut ap = Vec::with_capacity(m);
    let mut fz = Vec::with_capacity(m);
    for j in 0..m {
        let t = j as f64 / FORCE_PLATE_RATE;
        let (k, phi_l) = schedule.locate(t);
        let phi = if right { (phi_l + 0.5).rem_euclid(1.0) } else { phi_l };
        let period = schedule.strides[k].period;
        // Progress along the foot, frozen at toe-off through swing.
        let s = (phi / STANCE_FRACTION).min(1.0);
        let stance_phi = phi.min(STANCE_FRACTION);
        ml.push(side * (FOOT_ML - 15.0 * (PI * s).sin()));
        ap.push(heel_ap(stance_phi, period, belt) + FOOT_LENGTH * raised_cosine(s));
        fz.push(bw * vertical_force_profile(phi));
    }
    let up = |v: Vec<f64>| -> Result<Vec<f64>, TrialError> {
        let ts = TimeSeries::new(v, FORCE_PLATE_RATE, 0.0, AxisTag::Scalar)
            .map_err(|e| TrialError::InvalidSpec(e.to_string()))?;
        let mut out = resample_linear(&ts, rate)
            .map_err(|e| TrialError::InvalidSpec(e.to_string()))?
            .into_samples();
        let last = *out.last().unwrap_or(&0.0);
        out.resize(n_frames, last);
        Ok(out)
    };
    let (ml, ap, fz) = (up(ml)?, up(ap)?, up(fz)?);
    Ok((0..n_frames)
        .map(|i| CopSample {
            ml: ml[i],
            ap: ap[i],
            fz: fz[i],
        })
        .collect())
}
