//! Nonlinear FETI-DP with a globalized quasi-Newton SQP driver.
//!
//! The library tears a 2D hyperelastic finite element problem into
//! subdomains, enforces interface continuity through Lagrange multipliers,
//! and minimizes the torn energy subject to the jump constraints. Two
//! solvers are provided:
//!
//! * [`sqp::sqp_solve`]: a BFGS-accelerated SQP method that keeps a factored
//!   exact Hessian as the quasi-Newton base and refactors only on restarts,
//! * [`sqp::newton_penalty_solve`]: an exact-Hessian Lagrange-Newton baseline
//!   globalized with a differentiable exact penalty function.
//!
//! Both reduce each step to a dual interface problem solved by preconditioned
//! conjugate gradients ([`kkt::solve_kkt`]). The [`bench`] module and the
//! `feti-sqp` binary run both solvers on a clamped cantilever beam under an
//! end traction and record iteration and factorization counts.

pub mod bench;
pub mod config;
pub mod decomp;
pub mod fem;
pub mod kkt;
pub mod oracle;
pub mod problem;
pub mod qn;
pub mod sqp;
