//! Monolithic reference path: assembled Newton on the untorn mesh with a
//! backtracking line search on the energy. No tearing, no multipliers. The
//! domain-decomposition solvers are checked end to end against it, and the
//! benchmark exposes it as a verification mode.

use nalgebra::DVector;
use thiserror::Error;

use crate::fem::{
    assemble_energy, assemble_subdomain, right_edge_traction_load, Material, Quadrature,
    StructuredMesh,
};
use crate::kkt::factor_sparse;
use crate::sqp::armijo_slack;

const SIGMA: f64 = 1e-4;
const BETA: f64 = 0.5;
const ALPHA_MIN: f64 = 9.5367431640625e-7; // 0.5^20

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("inadmissible deformation at an accepted iterate")]
    Inadmissible,
    #[error("global tangent factorization failed: {0}")]
    Factorization(String),
    #[error("energy direction is not descending at iteration {iteration}")]
    NonDescent { iteration: usize },
    #[error("line search failed at iteration {iteration}")]
    LineSearch { iteration: usize },
    #[error("no convergence in {max_outer} iterations (residual {residual:.3e})")]
    MaxIterations { max_outer: usize, residual: f64 },
}

#[derive(Debug, Clone)]
pub struct MonolithicSolution {
    /// Displacement over all mesh dofs (zero on the clamped boundary).
    pub u: DVector<f64>,
    pub outer_iterations: usize,
    pub final_grad_inf: f64,
}

/// Newton iteration on the assembled global energy: factor the tangent,
/// solve for the full-space direction, backtrack on the energy itself.
/// Inadmissible trial states (non-positive deformation determinant) are
/// treated as infinite energy and rejected by the line search.
pub fn monolithic_solve(
    mesh: &StructuredMesh,
    fixed_nodes: &[bool],
    load: Option<&DVector<f64>>,
    material: &Material,
    quad: &Quadrature,
    eps_tol: f64,
    max_outer: usize,
) -> Result<MonolithicSolution, OracleError> {
    let mut u = DVector::zeros(mesh.n_dofs());
    for iteration in 0..=max_outer {
        let m = assemble_subdomain(mesh, fixed_nodes, load, &u, material, quad)
            .map_err(|_| OracleError::Inadmissible)?;
        let residual = m.grad.amax();
        if residual <= eps_tol {
            return Ok(MonolithicSolution {
                u,
                outer_iterations: iteration,
                final_grad_inf: residual,
            });
        }
        if iteration == max_outer {
            return Err(OracleError::MaxIterations { max_outer, residual });
        }
        let ldl = factor_sparse(&m.hess).map_err(OracleError::Factorization)?;
        let rhs: Vec<f64> = m.grad.iter().map(|g| -g).collect();
        let d = DVector::from_vec(ldl.solve(&rhs));
        let slope = m.grad.dot(&d);
        if slope >= 0.0 {
            return Err(OracleError::NonDescent { iteration });
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha >= ALPHA_MIN {
            let trial = &u + &d * alpha;
            let e = assemble_energy(mesh, load, &trial, material, quad)
                .unwrap_or(f64::INFINITY);
            if e <= m.energy + SIGMA * alpha * slope + armijo_slack(m.energy) {
                accepted = Some(trial);
                break;
            }
            alpha *= BETA;
        }
        u = accepted.ok_or(OracleError::LineSearch { iteration })?;
    }
    unreachable!("loop returns or errors before falling through")
}

/// The benchmark family on the untorn mesh: left edge clamped, constant
/// vertical traction on the right edge.
pub fn cantilever_solve(
    mesh: &StructuredMesh,
    material: &Material,
    traction: f64,
    eps_tol: f64,
    max_outer: usize,
) -> Result<MonolithicSolution, OracleError> {
    let load = right_edge_traction_load(mesh, traction);
    monolithic_solve(
        mesh,
        &mesh.left_clamp_mask(),
        Some(&load.f),
        material,
        &Quadrature::for_element_order(mesh.order),
        eps_tol,
        max_outer,
    )
}
