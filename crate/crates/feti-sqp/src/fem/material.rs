//! Isotropic material constants for the compressible Neo-Hooke model.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaterialError {
    #[error("Young's modulus must be positive and finite, got {0}")]
    BadModulus(f64),
    #[error("Poisson ratio must lie strictly inside (0, 0.5), got {0}")]
    BadPoisson(f64),
}

/// Isotropic elastic constants with the Lame parameters precomputed from
/// (E, nu). Construction rejects non-physical inputs, so `mu > 0` and
/// `lambda > 0` hold for every live value.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Material {
    pub e: f64,
    pub nu: f64,
    pub mu: f64,
    pub lambda: f64,
}

impl Material {
    /// Converts engineering constants to Lame parameters:
    /// `mu = E / (2 (1 + nu))`, `lambda = E nu / ((1 + nu)(1 - 2 nu))`.
    pub fn new(e: f64, nu: f64) -> Result<Self, MaterialError> {
        if !(e > 0.0 && e.is_finite()) {
            return Err(MaterialError::BadModulus(e));
        }
        if !(nu > 0.0 && nu < 0.5) {
            return Err(MaterialError::BadPoisson(nu));
        }
        let mu = e / (2.0 * (1.0 + nu));
        let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
        Ok(Self { e, nu, mu, lambda })
    }
}
