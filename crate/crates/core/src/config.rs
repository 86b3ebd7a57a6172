//! Runtime constants and global tolerances.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

/// Environment variable overriding [`constraint_tol`].
pub const TOL_ENV: &str = "SPINOPTICS_TOL";

pub const DEFAULT_CONSTRAINT_TOL: f64 = 1e-9;

/// Threshold on `|conj(e) x e|` below which a polarization counts as linear.
pub const LINEAR_TOL: f64 = 1e-9;

/// Guard on `1 - lambdabar^2 R(E, conj E, E, conj E)`.
pub const SINGULAR_TOL: f64 = 1e-6;

/// Above this value of `lambdabar |grad(1/n)|` the slow-gradient foliation is flagged.
pub const SLOW_GRADIENT_WARN: f64 = 0.1;

static TOL: OnceLock<f64> = OnceLock::new();

/// Tolerance used when validating constraint invariants of inputs.
///
/// Read once from `SPINOPTICS_TOL`; unparsable or non-positive values fall
/// back to the default.
pub fn constraint_tol() -> f64 {
    *TOL.get_or_init(|| {
        std::env::var(TOL_ENV)
            .ok()
            .and_then(|s| s.trim().parse::<f64>().ok())
            .filter(|t| t.is_finite() && *t > 0.0)
            .unwrap_or(DEFAULT_CONSTRAINT_TOL)
    })
}

/// Planck constant and vacuum color. Only their ratio, the reduced
/// wavelength, enters the ray dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    #[serde(default = "one")]
    pub hbar: f64,
    #[serde(default = "one")]
    pub p_color: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for Constants {
    fn default() -> Self {
        Constants { hbar: 1.0, p_color: 1.0 }
    }
}

impl Constants {
    pub fn new(hbar: f64, p_color: f64) -> Self {
        Constants { hbar, p_color }
    }

    pub fn lambdabar(&self) -> f64 {
        self.hbar / self.p_color
    }
}
