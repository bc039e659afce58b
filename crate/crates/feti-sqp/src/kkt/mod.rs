//! Linear algebra kernels for one SQP step: the block factorization of the
//! torn Hessian, the dual interface solve by preconditioned conjugate
//! gradients, and the KKT back-substitution.
//!
//! A step solves
//!
//! ```text
//! [ H   B^T ] [ du ]   [ -grad ]
//! [ B   0   ] [ dl ] = [ -B u  ]
//! ```
//!
//! by eliminating `du`: the dual Schur system `B H^{-1} B^T dl = B u -
//! B H^{-1} grad` is solved iteratively, then `du = -H^{-1}(grad + B^T dl)`.
//! `H^{-1}` is abstract ([`InverseOperator`]), so the same routine serves the
//! exact block factorization and the quasi-Newton two-loop operator.

mod blocks;
mod pcg;
mod precond;

pub use blocks::{factor_block_hessian, BlockFactorization, HessianBlocks};
pub(crate) use blocks::factor_sparse;
#[cfg(test)]
pub(crate) use blocks::csc_mul_acc;
pub use pcg::{pcg, pcg_from, PcgResult};
pub use precond::{build_dirichlet_preconditioner, DirichletPreconditioner};

use nalgebra::{Cholesky, DVector, Dyn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Application of a symmetric positive definite inverse on the torn space.
pub trait InverseOperator: Sync {
    fn dim(&self) -> usize;
    fn apply_inverse(&self, rhs: &DVector<f64>) -> DVector<f64>;
}

/// Linear equality constraint operator (the jump `B` and its transpose).
pub trait Constraint: Sync {
    fn n_multipliers(&self) -> usize;
    fn n_unknowns(&self) -> usize;
    fn apply(&self, u: &DVector<f64>) -> DVector<f64>;
    fn apply_transpose(&self, lambda: &DVector<f64>) -> DVector<f64>;
}

/// Preconditioner on the multiplier space.
pub trait MultiplierPreconditioner: Sync {
    fn apply(&self, r: &DVector<f64>) -> DVector<f64>;
}

/// No preconditioning.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityPreconditioner;

impl MultiplierPreconditioner for IdentityPreconditioner {
    fn apply(&self, r: &DVector<f64>) -> DVector<f64> {
        r.clone()
    }
}

/// A dense Cholesky factor is a valid inverse operator; used as the
/// quasi-Newton base on small synthetic problems and in oracle checks.
impl InverseOperator for Cholesky<f64, Dyn> {
    fn dim(&self) -> usize {
        self.l_dirty().nrows()
    }

    fn apply_inverse(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.solve(rhs)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactorError {
    #[error("Hessian block of subdomain {subdomain} could not be factored: {reason}")]
    SubdomainBlock { subdomain: usize, reason: String },
    #[error("coarse Schur complement is singular")]
    CoarseSingular,
    #[error("interior block of subdomain {subdomain} could not be factored: {reason}")]
    InteriorBlock { subdomain: usize, reason: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KrylovError {
    #[error("conjugate gradient breakdown at iteration {iteration}: p^T A p = {curvature:e}")]
    Breakdown { iteration: usize, curvature: f64 },
    #[error("conjugate gradient stopped after {max_iters} iterations at relative residual {rel_residual:e}")]
    MaxIterations { max_iters: usize, rel_residual: f64 },
}

/// Tolerance and iteration cap of the dual interface solve.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct KrylovConfig {
    /// Relative preconditioned residual target.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        Self { tol: 1e-10, max_iters: 500 }
    }
}

/// Result of one KKT solve.
#[derive(Debug, Clone)]
pub struct KktSolution {
    pub delta_u: DVector<f64>,
    pub delta_lambda: DVector<f64>,
    pub krylov_iterations: usize,
}

/// Solves the step equations for the current iterate. `grad` is the
/// gradient block of the right-hand side (negated internally) and `bu` the
/// current constraint value.
pub fn solve_kkt<H, C, M>(
    hinv: &H,
    constraint: &C,
    grad: &DVector<f64>,
    bu: &DVector<f64>,
    precond: &M,
    cfg: &KrylovConfig,
) -> Result<KktSolution, KrylovError>
where
    H: InverseOperator + ?Sized,
    C: Constraint + ?Sized,
    M: MultiplierPreconditioner + ?Sized,
{
    solve_kkt_from(hinv, constraint, grad, bu, None, precond, cfg)
}

/// Like [`solve_kkt`] but warm-starting the multiplier iteration at
/// `lambda0`. When the gradient block already contains `-Bᵀλ0` up to a small
/// error (as it does near a solved state), the initial dual residual is tiny
/// and the relative stopping rule tracks the genuinely needed correction
/// instead of the full multiplier magnitude.
pub fn solve_kkt_from<H, C, M>(
    hinv: &H,
    constraint: &C,
    grad: &DVector<f64>,
    bu: &DVector<f64>,
    lambda0: Option<&DVector<f64>>,
    precond: &M,
    cfg: &KrylovConfig,
) -> Result<KktSolution, KrylovError>
where
    H: InverseOperator + ?Sized,
    C: Constraint + ?Sized,
    M: MultiplierPreconditioner + ?Sized,
{
    debug_assert_eq!(grad.len(), constraint.n_unknowns());
    debug_assert_eq!(bu.len(), constraint.n_multipliers());
    let t = hinv.apply_inverse(grad);
    if constraint.n_multipliers() == 0 {
        return Ok(KktSolution {
            delta_u: -t,
            delta_lambda: DVector::zeros(0),
            krylov_iterations: 0,
        });
    }
    let g = bu - constraint.apply(&t);
    let result = pcg_from(
        |mu| constraint.apply(&hinv.apply_inverse(&constraint.apply_transpose(mu))),
        precond,
        &g,
        lambda0,
        cfg,
    )?;
    let mut delta_u = hinv.apply_inverse(&constraint.apply_transpose(&result.x));
    delta_u += &t;
    delta_u.neg_mut();
    Ok(KktSolution {
        delta_u,
        delta_lambda: result.x,
        krylov_iterations: result.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::JumpOperator;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn dense_spd(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(n, n) * (n as f64)
    }

    #[test]
    fn hand_solved_two_dof_system() {
        let h = DMatrix::identity(2, 2).cholesky().unwrap();
        let b = JumpOperator { n_unknowns: 2, weight: 1.0, rows: vec![(0, 1)] };
        let grad = DVector::from_vec(vec![-2.0, 0.0]);
        let bu = DVector::zeros(1);
        let sol = solve_kkt(&h, &b, &grad, &bu, &IdentityPreconditioner, &KrylovConfig::default())
            .unwrap();
        assert_relative_eq!(sol.delta_lambda[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(sol.delta_u[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(sol.delta_u[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn stationary_point_yields_zero_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = dense_spd(4, &mut rng).cholesky().unwrap();
        let b = JumpOperator { n_unknowns: 4, weight: 1.0, rows: vec![(0, 2), (1, 3)] };
        let sol = solve_kkt(
            &h,
            &b,
            &DVector::zeros(4),
            &DVector::zeros(2),
            &IdentityPreconditioner,
            &KrylovConfig::default(),
        )
        .unwrap();
        assert_eq!(sol.krylov_iterations, 0);
        assert_relative_eq!(sol.delta_u.norm(), 0.0, epsilon = 1e-14);
        assert_relative_eq!(sol.delta_lambda.norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn unconstrained_case_is_plain_newton() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let hm = dense_spd(5, &mut rng);
        let h = hm.clone().cholesky().unwrap();
        let b = JumpOperator { n_unknowns: 5, weight: 1.0, rows: vec![] };
        let grad = DVector::from_fn(5, |_, _| rng.gen_range(-1.0..1.0));
        let sol = solve_kkt(
            &h,
            &b,
            &grad,
            &DVector::zeros(0),
            &IdentityPreconditioner,
            &KrylovConfig::default(),
        )
        .unwrap();
        assert_relative_eq!((&hm * &sol.delta_u + &grad).norm(), 0.0, epsilon = 1e-10);
    }

    /// Random small instances against a dense saddle-point solve.
    #[test]
    fn matches_dense_kkt_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..20 {
            let n = rng.gen_range(4..=12);
            let hm = dense_spd(n, &mut rng);
            let h = hm.clone().cholesky().unwrap();
            let rows = vec![(0, 1), (2, 3)];
            let b = JumpOperator { n_unknowns: n, weight: 1.0, rows: rows.clone() };
            let m = rows.len();
            let grad = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let bu = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
            let sol = solve_kkt(
                &h,
                &b,
                &grad,
                &bu,
                &IdentityPreconditioner,
                &KrylovConfig { tol: 1e-12, max_iters: 200 },
            )
            .unwrap();

            // Dense saddle-point system.
            let mut kkt = DMatrix::zeros(n + m, n + m);
            kkt.view_mut((0, 0), (n, n)).copy_from(&hm);
            for (r, &(plus, minus)) in rows.iter().enumerate() {
                kkt[(n + r, plus)] = 1.0;
                kkt[(n + r, minus)] = -1.0;
                kkt[(plus, n + r)] = 1.0;
                kkt[(minus, n + r)] = -1.0;
            }
            let mut rhs = DVector::zeros(n + m);
            rhs.rows_mut(0, n).copy_from(&(-&grad));
            rhs.rows_mut(n, m).copy_from(&(-&bu));
            let dense = kkt.lu().solve(&rhs).expect("dense KKT solvable");

            let max_err = (0..n)
                .map(|i| (sol.delta_u[i] - dense[i]).abs())
                .chain((0..m).map(|r| (sol.delta_lambda[r] - dense[n + r]).abs()))
                .fold(0.0f64, f64::max);
            assert!(max_err <= 1e-8, "trial {trial}: KKT mismatch {max_err:e}");

            // Residual form of the same check.
            let res_u = &hm * &sol.delta_u + b.apply_transpose(&sol.delta_lambda) + &grad;
            let res_c = b.apply(&sol.delta_u) + &bu;
            assert!(res_u.amax() <= 1e-8);
            assert!(res_c.amax() <= 1e-8);
        }
    }
}
