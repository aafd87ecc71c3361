//! Run configuration, read from a TOML file and overridden by flags.

use std::path::{Path, PathBuf};

use ankle_core::analysis::AnalysisConfig;
use ankle_core::control::{AdmittanceParams, ControllerConfig, ControllerMode};
use ankle_core::plant::{PlantConfig, Terrain};
use ankle_core::trial::{ControllerSettings, Perturbation, TrialSpec, Variability};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Simulate,
    Analyze,
    Compare,
}

/// Trial to simulate. Units: k_d Nm/deg, ground stiffness kN/m, period s,
/// body mass kg, belt speed m/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialConfig {
    pub controller: ControllerMode,
    pub k_d: f64,
    pub fb_gain: f64,
    pub k_m: f64,
    /// Ground stiffness under both feet; absent means rigid.
    pub ground_stiffness: Option<f64>,
    pub n_strides: usize,
    pub seed: u64,
    pub stride_period: f64,
    pub excluded_strides: usize,
    pub body_mass: f64,
    pub peak_ankle_moment: f64,
    pub belt_speed: f64,
    pub variability: Variability,
    pub perturbations: Vec<Perturbation>,
}

impl Default for TrialConfig {
    fn default() -> Self {
        let spec = TrialSpec::default();
        Self {
            controller: ControllerMode::Tc,
            k_d: 15.0,
            fb_gain: AdmittanceParams::DEFAULT_FB_GAIN,
            k_m: ControllerConfig::DEFAULT_K_M,
            ground_stiffness: None,
            n_strides: spec.n_strides,
            seed: spec.seed,
            stride_period: spec.stride_period,
            excluded_strides: spec.excluded_strides,
            body_mass: spec.body_mass,
            peak_ankle_moment: spec.peak_ankle_moment,
            belt_speed: spec.plant.belt_speed,
            variability: spec.variability,
            perturbations: Vec::new(),
        }
    }
}

impl TrialConfig {
    pub fn to_spec(&self) -> TrialSpec {
        let plant = PlantConfig {
            terrain: match self.ground_stiffness {
                Some(stiffness) => Terrain::Compliant { stiffness },
                None => Terrain::Rigid,
            },
            belt_speed: self.belt_speed,
            ..PlantConfig::default()
        };
        TrialSpec {
            plant,
            controller: ControllerSettings {
                mode: self.controller,
                k_d: self.k_d,
                fb_gain: self.fb_gain,
                k_m: self.k_m,
            },
            n_strides: self.n_strides,
            stride_period: self.stride_period,
            seed: self.seed,
            variability: self.variability,
            perturbations: self.perturbations.clone(),
            body_mass: self.body_mass,
            peak_ankle_moment: self.peak_ankle_moment,
            excluded_strides: self.excluded_strides,
            ..TrialSpec::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub alpha: f64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self { alpha: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub out: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub baseline: Option<PathBuf>,
    pub candidates: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Option<Mode>,
    pub trial: TrialConfig,
    pub analysis: AnalysisConfig,
    pub compare: CompareConfig,
    pub paths: Paths,
}

impl RunConfig {
    /// Parse and validate a config file. Relative paths inside it resolve
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut cfg.paths.out, &mut cfg.paths.manifest, &mut cfg.paths.baseline].into_iter().flatten() {
            resolve(p);
        }
        cfg.paths.candidates.iter_mut().for_each(resolve);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.trial;
        if t.controller == ControllerMode::Ac && !(t.k_d > 0.0 && t.k_d.is_finite()) {
            return Err(CliError::Config(format!("k_d must be positive for AC, got {}", t.k_d)));
        }
        if let Some(k) = t.ground_stiffness {
            if !(k > 0.0 && k.is_finite()) {
                return Err(CliError::Config(format!("ground stiffness must be positive, got {k}")));
            }
        }
        if t.excluded_strides >= t.n_strides {
            return Err(CliError::Config(format!(
                "excluding {} of {} strides leaves nothing to analyze",
                t.excluded_strides, t.n_strides
            )));
        }
        t.to_spec().validate().map_err(|e| CliError::Config(e.to_string()))?;
        if !(self.compare.alpha > 0.0 && self.compare.alpha < 1.0) {
            return Err(CliError::Config(format!("alpha must lie in (0, 1), got {}", self.compare.alpha)));
        }
        self.analysis
            .phase
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let p = &self.paths;
        for path in p.manifest.iter().chain(&p.baseline).chain(&p.candidates) {
            if !path.exists() {
                return Err(CliError::Config(format!("{} does not exist", path.display())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_mirror_reference_protocol() {
        let cfg = RunConfig::default();
        let spec = cfg.trial.to_spec();
        assert_eq!(spec.n_strides, 200);
        assert_eq!(spec.excluded_strides, 25);
        assert_eq!(spec.rate(), 100.0);
        assert_eq!(spec.stride_period, 1.47);
        assert_eq!(spec.plant.belt_speed, 0.65);
        assert_eq!(cfg.analysis.lyapunov.window_strides, 150);
        assert_eq!(cfg.analysis.lyapunov.n_windows, 25);
        assert_eq!(cfg.analysis.lyapunov.points_per_stride, 100);
        assert_eq!(cfg.compare.alpha, 0.01);
        cfg.validate().unwrap();
    }

    #[test]
    fn parses_partial_toml() {
        let cfg: RunConfig = toml::from_str(
            r#"
            mode = "simulate"
            [trial]
            controller = "AC"
            k_d = 20.0
            ground_stiffness = 63.0
            [analysis.lyapunov]
            n_windows = 3
            "#,
        )
        .unwrap();
        assert_eq!(cfg.mode, Some(Mode::Simulate));
        assert_eq!(cfg.trial.k_d, 20.0);
        assert_eq!(cfg.trial.to_spec().plant.terrain, Terrain::Compliant { stiffness: 63.0 });
        assert_eq!(cfg.analysis.lyapunov.n_windows, 3);
        assert_eq!(cfg.analysis.lyapunov.window_strides, 150);
    }

    #[test]
    fn rejects_zero_admittance_stiffness() {
        let mut cfg = RunConfig::default();
        cfg.trial.controller = ControllerMode::Ac;
        cfg.trial.k_d = 0.0;
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
        cfg.trial.controller = ControllerMode::Tc;
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_unknown_keys_and_missing_paths() {
        assert!(toml::from_str::<RunConfig>("[trial]\nkd = 3.0").is_err());
        let mut cfg = RunConfig::default();
        cfg.paths.baseline = Some(PathBuf::from("/nonexistent/report.json"));
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
    }
}
