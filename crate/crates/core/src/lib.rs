//! Prosthetic ankle control and gait stability analysis.

pub mod analysis;
pub mod control;
pub mod lut;
pub mod plant;
pub mod trial;
pub mod signal;
pub mod stability;
pub mod stiffness;
