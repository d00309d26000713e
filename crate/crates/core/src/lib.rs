//! Kicked Lieb-Liniger rotor in the non-interacting and Tonks-Girardeau
//! limits: single-particle eigenstates, stroboscopic Floquet evolution,
//! one-body density matrices and momentum-space observables.

pub mod config;
pub mod error;
pub mod grid;
pub mod harness;
pub mod floquet;
pub mod linalg;
pub mod observables;
pub mod oracle;
pub mod scalar;
pub mod spham;
pub mod tonks;
pub mod units;

pub use error::{Error, Result};
pub use scalar::{Cplx, Real};

pub use config::{ConfigMap, ExperimentConfig};
pub use harness::{run_experiment, RunManifest, RunOutput, Series};

pub type Grid64 = grid::Grid<f64>;
pub type Orbital64 = grid::Orbital<f64>;
pub type Grid32 = grid::Grid<f32>;
pub type Orbital32 = grid::Orbital<f32>;
pub type Obdm64 = tonks::Obdm<f64>;
pub type Obdm32 = tonks::Obdm<f32>;
pub type Floquet64 = floquet::Floquet<f64>;
pub type Floquet32 = floquet::Floquet<f32>;
