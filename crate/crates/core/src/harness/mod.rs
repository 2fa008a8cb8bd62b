//! End-to-end experiments: contraction curves with two estimators, rate
//! fits, coupling-time survival, the gradient (Kuwada) check and
//! convergence to equilibrium. Every run is a pure function of its config
//! and master seed; per-path streams are independent of the worker count.

mod contraction;
mod equilibrium;
mod fit;
mod kuwada;
pub mod output;
mod survival;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use contraction::{contraction_experiment, ContractionConfig, ContractionCurve, ContractionResult, Estimator};
pub use equilibrium::{equilibrium_experiment, gaussian_w2_ou, EquilibriumConfig, EquilibriumCurve};
pub use fit::{fit_rate, FitOptions, FitReport};
pub use kuwada::{kuwada_check, KuwadaConfig, KuwadaProbe, KuwadaReport};
pub use survival::{coupling_time_experiment, CouplingTimeConfig, SurvivalCurve};

use crate::coupling::CouplingError;
use crate::model::ModelError;
use crate::ot::OtError;
use crate::theory::TheoryError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
    #[error(transparent)]
    Ot(#[from] OtError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error("{pointer}: {message}")]
    Config { pointer: String, message: String },
    #[error("no usable decay window: {0}")]
    InsufficientDecay(String),
    #[error("finite-difference step: {0}")]
    Stencil(String),
}

impl HarnessError {
    pub(crate) fn config(pointer: &str, message: impl Into<String>) -> Self {
        HarnessError::Config {
            pointer: pointer.to_string(),
            message: message.into(),
        }
    }
}

/// Pass/fail of one assertion in an experiment summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Check {
        Check {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        }
    }
}

fn check_point(pointer: &str, v: &[f64], d: usize) -> Result<(), HarnessError> {
    if v.len() != d {
        return Err(HarnessError::config(pointer, format!("expected {d} coordinates, got {}", v.len())));
    }
    if v.iter().any(|c| !c.is_finite()) {
        return Err(HarnessError::config(pointer, "coordinates must be finite"));
    }
    Ok(())
}

fn check_paths(n: usize) -> Result<(), HarnessError> {
    if n < 2 {
        return Err(HarnessError::config("/n_paths", "need at least 2 paths for standard errors"));
    }
    Ok(())
}
