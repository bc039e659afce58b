//! Compressible Neo-Hooke strain energy and its derivatives.
//!
//! The density is
//!
//! ```text
//! psi(F) = mu/2 (tr(F^T F) - offset) - mu ln(det F) + lambda/2 ln(det F)^2
//! ```
//!
//! with `offset` the trace of the identity, so the reference configuration
//! has zero energy and zero stress. Plane strain embeds the in-plane
//! deformation gradient as `diag(F, 1)` in 3D: the determinant is unchanged
//! and the trace shifts by exactly 1, so working with 2x2 matrices and
//! `TRACE_OFFSET_2D` reproduces the 3D density.

use nalgebra::{Matrix2, Matrix3};
use thiserror::Error;

use super::material::Material;

/// tr(I) in the plane-strain reduction.
pub const TRACE_OFFSET_2D: f64 = 2.0;
/// tr(I) in full 3D.
pub const TRACE_OFFSET_3D: f64 = 3.0;

/// The deformation gradient left the admissible set `det F > 0`, where the
/// logarithmic terms of the energy are undefined.
#[derive(Debug, Error, Clone, Copy, PartialEq)]
#[error("deformation gradient has non-positive determinant {det}")]
pub struct InadmissibleDeformation {
    pub det: f64,
}

fn density_from_invariants(
    tr_c: f64,
    det_f: f64,
    mat: &Material,
    offset: f64,
) -> Result<f64, InadmissibleDeformation> {
    if !(det_f > 0.0) {
        return Err(InadmissibleDeformation { det: det_f });
    }
    let lj = det_f.ln();
    Ok(0.5 * mat.mu * (tr_c - offset) - mat.mu * lj + 0.5 * mat.lambda * lj * lj)
}

/// Energy density of an in-plane deformation gradient.
pub fn energy_density(f: &Matrix2<f64>, mat: &Material) -> Result<f64, InadmissibleDeformation> {
    density_from_invariants(f.norm_squared(), f.determinant(), mat, TRACE_OFFSET_2D)
}

/// Energy density of a full 3D deformation gradient; used to cross-check the
/// plane-strain reduction.
pub fn energy_density_3d(f: &Matrix3<f64>, mat: &Material) -> Result<f64, InadmissibleDeformation> {
    density_from_invariants(f.norm_squared(), f.determinant(), mat, TRACE_OFFSET_3D)
}

/// First Piola-Kirchhoff stress `P = mu F + (lambda ln(det F) - mu) F^{-T}`.
pub fn first_piola(f: &Matrix2<f64>, mat: &Material) -> Result<Matrix2<f64>, InadmissibleDeformation> {
    Ok(DeformationState::new(*f)?.piola(mat))
}

/// An in-plane deformation gradient validated once at construction:
/// `det F > 0` holds for every live value, so the energy and stress
/// evaluations below cannot fail.
#[derive(Debug, Clone, Copy)]
pub struct DeformationState {
    f: Matrix2<f64>,
    det: f64,
}

impl DeformationState {
    pub fn new(f: Matrix2<f64>) -> Result<Self, InadmissibleDeformation> {
        let det = f.determinant();
        if !(det > 0.0) {
            return Err(InadmissibleDeformation { det });
        }
        Ok(Self { f, det })
    }

    /// Builds `F = I + grad u` from a displacement gradient.
    pub fn from_displacement_gradient(grad_u: &Matrix2<f64>) -> Result<Self, InadmissibleDeformation> {
        Self::new(Matrix2::identity() + grad_u)
    }

    pub fn f(&self) -> &Matrix2<f64> {
        &self.f
    }

    pub fn det(&self) -> f64 {
        self.det
    }

    /// `F^{-T}`, written out with the already-validated determinant.
    pub fn inverse_transpose(&self) -> Matrix2<f64> {
        let inv_det = 1.0 / self.det;
        Matrix2::new(
            self.f[(1, 1)] * inv_det,
            -self.f[(1, 0)] * inv_det,
            -self.f[(0, 1)] * inv_det,
            self.f[(0, 0)] * inv_det,
        )
    }

    pub fn energy(&self, mat: &Material) -> f64 {
        let lj = self.det.ln();
        0.5 * mat.mu * (self.f.norm_squared() - TRACE_OFFSET_2D) - mat.mu * lj
            + 0.5 * mat.lambda * lj * lj
    }

    pub fn piola(&self, mat: &Material) -> Matrix2<f64> {
        self.f * mat.mu + self.inverse_transpose() * (mat.lambda * self.det.ln() - mat.mu)
    }
}
