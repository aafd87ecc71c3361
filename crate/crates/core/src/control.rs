//! Tibia controller (TC) and admittance controller (AC) as 100 Hz
//! discrete-time state machines producing motor-position commands.
//!
//! Sign conventions: ankle angle `q` is positive in dorsiflexion, the ankle
//! moment `M` is positive when the joint resists a dorsiflexing load, motor
//! position `x` is in mm.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lut::{Lut2D, LutAxis, LutError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Lut(#[from] LutError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ControllerMode {
    Tc,
    Ac,
}

impl ControllerMode {
    pub fn name(self) -> &'static str {
        match self {
            ControllerMode::Tc => "TC",
            ControllerMode::Ac => "AC",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ProsthesisState {
    /// Motor position, mm.
    pub x: f64,
    /// Ankle angle, deg.
    pub q: f64,
    /// Ankle moment, Nm.
    pub moment: f64,
    /// Tibia angular velocity, deg/s.
    pub tibia_omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmittanceParams {
    /// Desired stiffness, Nm/deg.
    pub k_d: f64,
    /// Desired damping, Nm·s/deg. Always zero here.
    pub b_d: f64,
    /// Desired inertia, Nm·s²/deg. Always zero here.
    pub i_d: f64,
    /// Angle-error feedback gain, mm/deg.
    pub fb_gain: f64,
}

impl AdmittanceParams {
    pub const DEFAULT_FB_GAIN: f64 = 0.45;

    pub fn new(k_d: f64) -> Result<Self, ControlError> {
        Self {
            k_d,
            b_d: 0.0,
            i_d: 0.0,
            fb_gain: Self::DEFAULT_FB_GAIN,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self, ControlError> {
        if !(self.k_d > 0.0 && self.k_d.is_finite()) {
            return Err(ControlError::InvalidParameter(format!(
                "K_d must be positive, got {}",
                self.k_d
            )));
        }
        if self.b_d != 0.0 || self.i_d != 0.0 {
            return Err(ControlError::InvalidParameter(
                "damping and inertia terms must be zero".into(),
            ));
        }
        if !(self.fb_gain >= 0.0 && self.fb_gain.is_finite()) {
            return Err(ControlError::InvalidParameter(format!(
                "feedback gain must be ≥ 0, got {}",
                self.fb_gain
            )));
        }
        Ok(self)
    }
}

/// Tuning of the tibia phase-plane estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseEstimatorConfig {
    /// Leak time constant of the tibia-angle integrator, s.
    pub leak_tau: f64,
    /// Time constant of the running-mean removal, s.
    pub mean_tau: f64,
    /// Stride period assumed before the first full stride, s.
    pub nominal_period: f64,
    /// Polar angle of the phase-plane orbit at foot strike, rad.
    pub strike_phase: f64,
    /// Stride length per unit of orbit radius, m/deg.
    pub stride_calibration: f64,
    /// Self-selected-pace stride length, m.
    pub ssp: f64,
}

impl PhaseEstimatorConfig {
    pub const DEFAULT_LEAK_TAU: f64 = 2.0;

    /// Calibrate for sinusoidal tibia motion `θ = amplitude · sin(2π φ + phase0)`
    /// (φ the gait fraction from foot strike) whose nominal orbit should
    /// read as a stride of `ssp` metres.
    pub fn for_sinusoid(period: f64, amplitude_deg: f64, phase0: f64, ssp: f64) -> Self {
        let tau = Self::DEFAULT_LEAK_TAU;
        let w = TAU / period;
        let (gain, lead) = Self::high_pass(w, tau, tau);
        Self {
            leak_tau: tau,
            mean_tau: tau,
            nominal_period: period,
            strike_phase: (phase0 + lead).rem_euclid(TAU),
            stride_calibration: ssp / (gain * amplitude_deg),
            ssp,
        }
    }

    /// Gain and phase lead of the leaky integrator followed by mean removal,
    /// relative to an ideal integrator, at angular frequency `w`.
    fn high_pass(w: f64, leak_tau: f64, mean_tau: f64) -> (f64, f64) {
        let stage = |tau: f64| {
            let wt = w * tau;
            (wt / (1.0 + wt * wt).sqrt(), (1.0 / wt).atan())
        };
        let (g1, p1) = stage(leak_tau);
        let (g2, p2) = stage(mean_tau);
        (g1 * g2, p1 + p2)
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        let positive = [
            ("leak_tau", self.leak_tau),
            ("mean_tau", self.mean_tau),
            ("nominal_period", self.nominal_period),
            ("stride_calibration", self.stride_calibration),
            ("ssp", self.ssp),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ControlError::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Phase-plane estimator state: de-drifted tibia angle against scaled
/// angular velocity gives a near-circular orbit whose polar angle is the gait
/// phase and whose radius tracks stride length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TibiaPhaseState {
    /// Leaky integral of ω, deg.
    pub theta_integral: f64,
    /// Running mean of the integral, deg.
    pub theta_mean: f64,
    /// Polar angle of the orbit, rad in [0, 2π).
    pub phase_angle: f64,
    /// Gait fraction since the last estimated foot strike, [0, 1).
    pub gait_percent: f64,
    /// Estimated stride length, m.
    pub stride_length: f64,
    /// Self-selected-pace stride length, m.
    pub ssp: f64,
    /// Ratio turning ω (deg/s) into the units of the centred angle, 1/s.
    pub omega_scale: f64,
    /// Completed strides.
    pub strides: u64,
    acc_omega_sq: f64,
    acc_theta_sq: f64,
    acc_radius: f64,
    acc_n: u64,
}

impl TibiaPhaseState {
    pub fn new(cfg: &PhaseEstimatorConfig) -> Self {
        let w = TAU / cfg.nominal_period;
        let (gain, _) = PhaseEstimatorConfig::high_pass(w, cfg.leak_tau, cfg.mean_tau);
        Self {
            theta_integral: 0.0,
            theta_mean: 0.0,
            phase_angle: 0.0,
            gait_percent: 0.0,
            stride_length: cfg.ssp,
            ssp: cfg.ssp,
            omega_scale: w / gain,
            strides: 0,
            acc_omega_sq: 0.0,
            acc_theta_sq: 0.0,
            acc_radius: 0.0,
            acc_n: 0,
        }
    }

    pub fn stride_length_norm(&self) -> f64 {
        self.stride_length / self.ssp
    }
}

/// Advance the phase estimator by one sample of tibia angular velocity.
pub fn tibia_phase_update(
    state: &TibiaPhaseState,
    omega: f64,
    dt: f64,
    cfg: &PhaseEstimatorConfig,
) -> TibiaPhaseState {
    if omega == 0.0 || !omega.is_finite() || !(dt > 0.0) {
        return *state;
    }
    let mut s = *state;
    // Exact discretisation of θ' = ω − θ/τ for ω held over the step.
    let decay = (-dt / cfg.leak_tau).exp();
    s.theta_integral = s.theta_integral * decay + omega * cfg.leak_tau * (1.0 - decay);
    let alpha = 1.0 - (-dt / cfg.mean_tau).exp();
    s.theta_mean += alpha * (s.theta_integral - s.theta_mean);

    let centred = s.theta_integral - s.theta_mean;
    let scaled = omega / s.omega_scale;
    s.phase_angle = centred.atan2(scaled).rem_euclid(TAU);
    s.acc_omega_sq += omega * omega;
    s.acc_theta_sq += centred * centred;
    s.acc_radius += centred.hypot(scaled);
    s.acc_n += 1;

    let raw = ((s.phase_angle - cfg.strike_phase).rem_euclid(TAU) / TAU).min(1.0 - 1e-12);
    // A wrap is only accepted late in a stride; just after one, backward
    // jitter across the strike point is held rather than read as a new stride.
    let advance = raw - state.gait_percent;
    if state.gait_percent >= 0.5 && advance < -0.5 {
        // Foot strike: close the stride.
        if s.acc_n > 1 && s.acc_theta_sq > 0.0 {
            s.omega_scale = (s.acc_omega_sq / s.acc_theta_sq).sqrt();
            s.stride_length = cfg.stride_calibration * s.acc_radius / s.acc_n as f64;
        }
        s.strides += 1;
        s.acc_omega_sq = 0.0;
        s.acc_theta_sq = 0.0;
        s.acc_radius = 0.0;
        s.acc_n = 0;
        s.gait_percent = raw;
    } else if (0.0..0.5).contains(&advance) {
        s.gait_percent = raw;
    }
    s
}

/// Blend weight `a = 0.5 cos(π L) + 0.5` for normalized stride length `L`.
pub fn blend_weight(stride_length_norm: f64) -> f64 {
    if stride_length_norm < 1.0 {
        0.5 * (PI * stride_length_norm.max(0.0)).cos() + 0.5
    } else {
        0.0
    }
}

/// TC command: moment feedback dominates at short strides, the gait
/// reference takes over at and above self-selected pace.
pub fn blend_commands(x_m: f64, x_g: f64, stride_length_norm: f64) -> f64 {
    if stride_length_norm < 1.0 {
        let a = blend_weight(stride_length_norm);
        a * x_m + (1.0 - a) * x_g
    } else {
        x_g
    }
}

/// Proportional moment feedback `x_m = k_m · M`, saturated to `motor_range`.
pub fn moment_feedback(moment: f64, k_m: f64, motor_range: (f64, f64)) -> f64 {
    (k_m * moment).clamp(motor_range.0, motor_range.1)
}

/// Unloaded motor position that realizes the gait-table reference angle.
pub fn tibia_reference_motor(
    gait_percent: f64,
    stride_length: f64,
    gait_lut: &Lut2D,
    moment_lut: &Lut2D,
) -> Result<f64, ControlError> {
    let q_ref = gait_lut.eval(gait_percent, stride_length)?;
    Ok(moment_lut.invert(0.0, (LutAxis::B, q_ref))?)
}

/// Virtual unloaded ankle angle for motor position `x_d_tc`.
pub fn admittance_equilibrium(x_d_tc: f64, moment_lut: &Lut2D) -> Result<f64, ControlError> {
    Ok(moment_lut.invert(0.0, (LutAxis::A, x_d_tc))?)
}

/// `q_d = q_e + M / K_d`, clamped to `angle_range`.
pub fn admittance_target(
    q_e: f64,
    moment: f64,
    k_d: f64,
    angle_range: (f64, f64),
) -> Result<f64, ControlError> {
    if !(k_d > 0.0) {
        return Err(ControlError::InvalidParameter(format!(
            "K_d must be positive, got {k_d}"
        )));
    }
    Ok((q_e + moment / k_d).clamp(angle_range.0, angle_range.1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnkleCommand {
    pub x_ff: f64,
    pub x_fb: f64,
    pub x_cmd: f64,
    /// Feedforward target fell outside the table and was saturated.
    pub saturated: bool,
}

/// Invert with the target clamped into the slice's reachable range.
fn invert_saturating(
    lut: &Lut2D,
    target: f64,
    fixed: (LutAxis, f64),
) -> Result<(f64, bool), ControlError> {
    match lut.invert(target, fixed) {
        Ok(v) => Ok((v, false)),
        Err(LutError::Unreachable { lo, hi, .. }) => {
            Ok((lut.invert(target.clamp(lo, hi), fixed)?, true))
        }
        Err(e) => Err(e.into()),
    }
}

/// Feedforward through the inverted moment table plus proportional angle
/// feedback.
pub fn ankle_controller(
    q_d: f64,
    q: f64,
    moment: f64,
    moment_lut: &Lut2D,
    fb_gain: f64,
) -> Result<AnkleCommand, ControlError> {
    let (x_ff, saturated) = invert_saturating(moment_lut, moment, (LutAxis::B, q_d))?;
    let x_fb = fb_gain * (q_d - q);
    let x_cmd = moment_lut.clamp(LutAxis::A, x_ff + x_fb);
    Ok(AnkleCommand {
        x_ff,
        x_fb,
        x_cmd,
        saturated,
    })
}

/// Lookup tables a controller instance reads.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerLuts {
    /// Moment as a function of (motor position mm, ankle angle deg).
    pub moment: Lut2D,
    /// Reference ankle angle as a function of (gait fraction, stride length m).
    pub gait: Lut2D,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub mode: ControllerMode,
    pub admittance: AdmittanceParams,
    /// Moment-feedback gain, mm/Nm.
    pub k_m: f64,
    pub phase: PhaseEstimatorConfig,
}

impl ControllerConfig {
    pub const DEFAULT_K_M: f64 = 0.1;

    pub fn validate(&self) -> Result<(), ControlError> {
        if self.mode == ControllerMode::Ac {
            self.admittance.validated()?;
        }
        if !self.k_m.is_finite() {
            return Err(ControlError::InvalidParameter("k_m must be finite".into()));
        }
        self.phase.validate()
    }
}

/// Everything a tick computes, for logging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickOutput {
    pub x_d_tc: f64,
    /// Desired ankle angle; for TC the gait-table reference.
    pub q_d: f64,
    pub x_cmd: f64,
    pub saturated: bool,
}

/// One controller tick given an already-updated phase estimate.
pub fn step_controller(
    cfg: &ControllerConfig,
    state: &ProsthesisState,
    phase: &TibiaPhaseState,
    luts: &ControllerLuts,
) -> Result<TickOutput, ControlError> {
    let motor_range = luts.moment.range(LutAxis::A);
    let angle_range = luts.moment.range(LutAxis::B);
    let gp = luts.gait.clamp(LutAxis::A, phase.gait_percent);
    let stride = luts.gait.clamp(LutAxis::B, phase.stride_length);
    let q_ref = luts
        .moment
        .clamp(LutAxis::B, luts.gait.eval(gp, stride)?);
    let x_g = luts.moment.invert(0.0, (LutAxis::B, q_ref))?;
    let x_m = moment_feedback(state.moment, cfg.k_m, motor_range);
    let x_d_tc = blend_commands(x_m, x_g, phase.stride_length_norm());

    match cfg.mode {
        ControllerMode::Tc => Ok(TickOutput {
            x_d_tc,
            q_d: q_ref,
            x_cmd: x_d_tc,
            saturated: false,
        }),
        ControllerMode::Ac => {
            let (q_e, sat_e) = invert_saturating(&luts.moment, 0.0, (LutAxis::A, x_d_tc))?;
            let q_d = admittance_target(q_e, state.moment, cfg.admittance.k_d, angle_range)?;
            let cmd = ankle_controller(q_d, state.q, state.moment, &luts.moment, cfg.admittance.fb_gain)?;
            Ok(TickOutput {
                x_d_tc,
                q_d,
                x_cmd: cmd.x_cmd,
                saturated: cmd.saturated || sat_e,
            })
        }
    }
}

/// Phase estimator plus control law, stepped once per sample.
#[derive(Debug, Clone)]
pub struct Controller {
    pub cfg: ControllerConfig,
    pub luts: ControllerLuts,
    pub phase: TibiaPhaseState,
}

impl Controller {
    pub fn new(cfg: ControllerConfig, luts: ControllerLuts) -> Result<Self, ControlError> {
        cfg.validate()?;
        if !luts.moment.is_monotone_along(LutAxis::A) || !luts.moment.is_monotone_along(LutAxis::B)
        {
            return Err(ControlError::InvalidParameter(
                "moment table must be invertible along both axes".into(),
            ));
        }
        let phase = TibiaPhaseState::new(&cfg.phase);
        Ok(Self { cfg, luts, phase })
    }

    pub fn tick(&mut self, state: &ProsthesisState, dt: f64) -> Result<TickOutput, ControlError> {
        self.phase = tibia_phase_update(&self.phase, state.tibia_omega, dt, &self.cfg.phase);
        step_controller(&self.cfg, state, &self.phase, &self.luts)
    }
}

/// Gait reference table: rows are gait fractions on a 1 % grid, columns
/// stride lengths; the reference angle scales linearly with stride length
/// relative to `reference_stride`.
pub fn build_gait_lut(
    template: impl Fn(f64) -> f64,
    reference_stride: f64,
    stride_grid: &[f64],
) -> Result<Lut2D, LutError> {
    let phases = crate::lut::uniform_grid(0.0, 1.0, 0.01);
    let values = phases
        .iter()
        .flat_map(|&p| {
            let base = template(p);
            stride_grid.iter().map(move |&l| base * l / reference_stride)
        })
        .collect();
    Ok(Lut2D::new(phases, stride_grid.to_vec(), values)?.with_units("fraction", "m"))
}
