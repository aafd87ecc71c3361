//! Lumped series-elastic ankle: a motor position loop, a one-degree-of-freedom
//! ankle driven by an external moment, and a linear compliant ground.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lut::{MomentModel, SyntheticMomentMap};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("simulation diverged at t = {0} s")]
    Diverged(f64),
    #[error("invalid plant configuration: {0}")]
    InvalidConfig(String),
}

/// Walking surface under both feet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Terrain {
    Rigid,
    /// Vertical stiffness in kN/m (numerically N/mm).
    Compliant { stiffness: f64 },
}

impl Terrain {
    pub fn stiffness(&self) -> Option<f64> {
        match self {
            Terrain::Rigid => None,
            Terrain::Compliant { stiffness } => Some(*stiffness),
        }
    }
}

/// Vertical ground deflection (mm) under `force` newtons.
pub fn ground_deflection(force: f64, terrain: &Terrain) -> f64 {
    match terrain {
        Terrain::Rigid => 0.0,
        Terrain::Compliant { stiffness } => force.max(0.0) / stiffness,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    /// Series spring stiffness, kN/m.
    pub sea_stiffness: f64,
    /// Spring lever arm about the ankle, m.
    pub lever_arm: f64,
    pub moment_map: SyntheticMomentMap,
    /// Foot and pylon inertia about the ankle, kg·m².
    pub ankle_inertia: f64,
    /// Joint viscous damping, Nm·s/deg.
    pub ankle_damping: f64,
    pub terrain: Terrain,
    /// Treadmill belt speed, m/s.
    pub belt_speed: f64,
    /// Natural frequency of the critically damped motor position loop, Hz.
    pub motor_loop_bandwidth: f64,
    /// Control and recording period, s.
    pub dt: f64,
    /// Integration substeps per control period.
    pub substeps: u32,
}

impl Default for PlantConfig {
    fn default() -> Self {
        let sea_stiffness = 377.0;
        let lever_arm = 0.03;
        Self {
            sea_stiffness,
            lever_arm,
            moment_map: SyntheticMomentMap::from_sea(sea_stiffness, lever_arm)
                .expect("default spring is valid"),
            ankle_inertia: 0.01,
            ankle_damping: 0.045,
            terrain: Terrain::Rigid,
            belt_speed: 0.65,
            motor_loop_bandwidth: 35.0,
            dt: 0.01,
            substeps: 10,
        }
    }
}

impl PlantConfig {
    pub fn validate(&self) -> Result<(), PlantError> {
        let positive = [
            ("sea_stiffness", self.sea_stiffness),
            ("lever_arm", self.lever_arm),
            ("ankle_inertia", self.ankle_inertia),
            ("belt_speed", self.belt_speed),
            ("motor_loop_bandwidth", self.motor_loop_bandwidth),
            ("dt", self.dt),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PlantError::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.ankle_damping >= 0.0) {
            return Err(PlantError::InvalidConfig("ankle_damping must be ≥ 0".into()));
        }
        if let Terrain::Compliant { stiffness } = self.terrain {
            if !(stiffness > 0.0 && stiffness.is_finite()) {
                return Err(PlantError::InvalidConfig(format!(
                    "ground stiffness must be positive, got {stiffness}"
                )));
            }
        }
        if self.substeps == 0 {
            return Err(PlantError::InvalidConfig("substeps must be ≥ 1".into()));
        }
        Ok(())
    }

    /// Ankle inertia in Nm·s²/deg.
    fn inertia_deg(&self) -> f64 {
        self.ankle_inertia * PI / 180.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlantState {
    pub t: f64,
    /// Motor position, mm.
    pub x: f64,
    /// Motor velocity, mm/s.
    pub x_vel: f64,
    /// Ankle angle, deg.
    pub q: f64,
    /// Ankle velocity, deg/s.
    pub q_vel: f64,
    /// Spring moment, Nm.
    pub moment: f64,
    /// Ground deflection under this foot, mm.
    pub deflection: f64,
}

impl PlantState {
    /// At rest with the motor at `x` and the ankle at its zero-moment angle
    /// (the motor is taken as the origin when no such angle exists nearby).
    pub fn at_rest(x: f64, model: &dyn MomentModel) -> Self {
        let k = model.dmoment_dq(x, 0.0);
        let q = if k != 0.0 { -model.moment(x, 0.0) / k } else { 0.0 };
        Self {
            x,
            q,
            moment: model.moment(x, q),
            ..Self::default()
        }
    }

    /// Kinetic plus spring energy about the zero-moment angle for the
    /// current motor position (J with angles converted to rad).
    pub fn mechanical_energy(&self, cfg: &PlantConfig, model: &dyn MomentModel) -> f64 {
        let k = model.dmoment_dq(self.x, self.q);
        let rad = PI / 180.0;
        let kinetic = 0.5 * cfg.ankle_inertia * (self.q_vel * rad).powi(2);
        // Spring moment is linear in q locally: ½ M² / k.
        let spring = if k > 0.0 {
            0.5 * self.moment.powi(2) / (k / rad)
        } else {
            0.0
        };
        kinetic + spring
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantInput {
    /// Motor position command, mm.
    pub motor_cmd: f64,
    /// Moment applied to the ankle by the user and ground, Nm.
    pub external_moment: f64,
    /// Vertical ground reaction under this foot, N.
    pub vertical_force: f64,
}

/// Advance one control period. The motor loop and the ankle are integrated
/// with backward Euler on `cfg.substeps` substeps, so any stiffness is stable
/// and a free ankle only loses energy.
pub fn step_plant(
    state: &PlantState,
    input: &PlantInput,
    cfg: &PlantConfig,
    model: &dyn MomentModel,
) -> Result<PlantState, PlantError> {
    if !(cfg.dt > 0.0) || cfg.substeps == 0 {
        return Err(PlantError::InvalidConfig("dt and substeps must be positive".into()));
    }
    let h = cfg.dt / cfg.substeps as f64;
    let wn = 2.0 * PI * cfg.motor_loop_bandwidth;
    let inertia = cfg.inertia_deg();
    let c = cfg.ankle_damping;
    let mut s = *state;
    for _ in 0..cfg.substeps {
        // Motor: x'' = wn² (cmd − x) − 2 wn x'.
        let v = (s.x_vel + h * wn * wn * (input.motor_cmd - s.x)) / (1.0 + 2.0 * wn * h + wn * wn * h * h);
        s.x += h * v;
        s.x_vel = v;

        // Ankle: I q'' = M_ext − M(x, q) − c q', linearised about q.
        let m0 = model.moment(s.x, s.q);
        let k = model.dmoment_dq(s.x, s.q);
        let w = (inertia * s.q_vel / h + input.external_moment - m0) / (inertia / h + c + k * h);
        s.q += h * w;
        s.q_vel = w;
    }
    s.t = state.t + cfg.dt;
    s.moment = model.moment(s.x, s.q);
    s.deflection = ground_deflection(input.vertical_force, &cfg.terrain);
    if ![s.x, s.x_vel, s.q, s.q_vel, s.moment, s.deflection]
        .iter()
        .all(|v| v.is_finite())
    {
        return Err(PlantError::Diverged(s.t));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn converges_to_command_and_zero_moment_angle() {
        let cfg = PlantConfig::default();
        let map = cfg.moment_map;
        let mut s = PlantState::default();
        let input = PlantInput {
            motor_cmd: 5.0,
            ..Default::default()
        };
        // Five time constants of the motor loop.
        let steps = (5.0 / (2.0 * PI * cfg.motor_loop_bandwidth) / cfg.dt).ceil() as usize + 1;
        for _ in 0..steps {
            s = step_plant(&s, &input, &cfg, &map).unwrap();
        }
        assert!((s.x - 5.0).abs() < 0.05 * 5.0, "{}", s.x);
        for _ in 0..200 {
            s = step_plant(&s, &input, &cfg, &map).unwrap();
        }
        assert!((s.x - 5.0).abs() < 1e-9);
        // Zero moment at q = x / rho.
        assert!((s.q - 5.0 / map.rho).abs() < 1e-6, "{}", s.q);
        assert!(s.moment.abs() < 1e-5);
    }

    #[test]
    fn static_load_balances_spring() {
        let cfg = PlantConfig::default();
        let map = cfg.moment_map;
        let mut s = PlantState::default();
        let input = PlantInput {
            motor_cmd: 0.0,
            external_moment: 40.0,
            vertical_force: 0.0,
        };
        for _ in 0..300 {
            s = step_plant(&s, &input, &cfg, &map).unwrap();
        }
        assert!((s.moment - 40.0).abs() < 1e-6);
        assert!((s.q - 40.0 / map.locked_stiffness()).abs() < 1e-6);
    }

    #[test]
    fn deflection_anchors() {
        let soft = Terrain::Compliant { stiffness: 63.0 };
        let softer = Terrain::Compliant { stiffness: 25.0 };
        assert!((ground_deflection(630.0, &soft) - 10.0).abs() < 1e-12);
        assert!((ground_deflection(500.0, &softer) - 20.0).abs() < 1e-12);
        assert_eq!(ground_deflection(630.0, &Terrain::Rigid), 0.0);

        let cfg = PlantConfig { terrain: soft, ..PlantConfig::default() };
        let s = step_plant(
            &PlantState::default(),
            &PlantInput {
                vertical_force: 630.0,
                ..Default::default()
            },
            &cfg,
            &cfg.moment_map,
        )
        .unwrap();
        assert!((s.deflection - 10.0).abs() < 1e-12);
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = PlantConfig::default();
        let r = step_plant(
            &PlantState::default(),
            &PlantInput {
                motor_cmd: f64::NAN,
                ..Default::default()
            },
            &cfg,
            &cfg.moment_map,
        );
        assert!(matches!(r, Err(PlantError::Diverged(_))));
    }

    proptest! {
        #[test]
        fn deflection_linear_in_load(f in 0.0..2000.0f64, k in 5.0..500.0f64) {
            let t = Terrain::Compliant { stiffness: k };
            let d1 = ground_deflection(f, &t);
            let d2 = ground_deflection(2.0 * f, &t);
            prop_assert!((d2 - 2.0 * d1).abs() <= 1e-12 * (1.0 + d2.abs()));
        }

        #[test]
        fn free_ankle_energy_non_increasing(q0 in -20.0..20.0f64, v0 in -300.0..300.0f64, x in -10.0..10.0f64) {
            let cfg = PlantConfig::default();
            let map = cfg.moment_map;
            let mut s = PlantState { x, q: q0, q_vel: v0, moment: map.moment(x, q0), ..Default::default() };
            let input = PlantInput { motor_cmd: x, ..Default::default() };
            let mut e = s.mechanical_energy(&cfg, &map);
            for _ in 0..100 {
                s = step_plant(&s, &input, &cfg, &map).unwrap();
                let e1 = s.mechanical_energy(&cfg, &map);
                prop_assert!(e1 <= e * (1.0 + 1e-12) + 1e-15);
                e = e1;
            }
        }

        #[test]
        fn stepping_is_deterministic(cmd in -20.0..20.0f64, m in -80.0..80.0f64) {
            let cfg = PlantConfig::default();
            let input = PlantInput { motor_cmd: cmd, external_moment: m, vertical_force: 500.0 };
            let a = step_plant(&PlantState::default(), &input, &cfg, &cfg.moment_map).unwrap();
            let b = step_plant(&PlantState::default(), &input, &cfg, &cfg.moment_map).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
