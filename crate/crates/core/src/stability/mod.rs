//! Gait stability: centre of mass, delay embedding, local divergence
//! exponents, foot-strike detection, margins of stability and the
//! statistics used to compare conditions.

mod com;
mod embedding;
mod events;
pub mod kdtree;
mod lyapunov;
mod mos;
mod stats;

use thiserror::Error;

use crate::signal::SignalError;

pub use com::{com_velocity, estimate_com};
pub use embedding::{ami_curve, ami_delay, delay_embed, fnn_dimension, Attractor, EmbeddingParams, FnnConfig, FnnResult};
pub use events::{detect_foot_strikes, force_onsets, EventConfig};
pub use lyapunov::{rosenstein_divergence, windowed_lyapunov, DivergenceResult, LyapunovConfig, WindowedLyapunov};
pub use mos::{mos_ap, mos_ml, omega0, pendulum_length, xcom, MosCycles, MosResult, MosSide};
pub use stats::{delta_lambda, mean_sd, wilcoxon_ranksum, MeanSd, RankSumResult};

/// Neighbours closer than this fraction of the signal scale are treated as
/// the same state and skipped, so exact repeats of a periodic orbit neither
/// produce ln 0 nor spurious false neighbours.
const DUPLICATE_FRACTION: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("series too short: need {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("average mutual information has no local minimum up to lag {0}")]
    NoMinimum(usize),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("insufficient strides: need {needed}, got {got}")]
    InsufficientStrides { needed: usize, got: usize },
    #[error("no foot strikes detected")]
    NoEvents,
    #[error("marker {marker} missing at frame {frame}")]
    MarkerGap { frame: usize, marker: &'static str },
    #[error("sample is empty")]
    EmptySample,
    #[error(transparent)]
    Signal(#[from] SignalError),
}
