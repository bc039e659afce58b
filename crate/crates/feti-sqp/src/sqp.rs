//! The two solver drivers.
//!
//! [`sqp_solve`] is the quasi-Newton SQP method: steps come from the KKT
//! system with the BFGS-updated inverse, globalized by an l1 merit function
//! with Armijo backtracking, a nondecreasing penalty parameter, and exact
//! Hessian restarts when progress stalls. [`newton_penalty_solve`] is the
//! exact-Hessian baseline globalized by a differentiable penalty merit; it
//! refactors every iteration. Both report a per-iteration trace so cost
//! comparisons and globalization invariants can be checked after the fact.

use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kkt::{solve_kkt, solve_kkt_from, Constraint, KrylovConfig};
use crate::problem::{FactoredHessian, ProblemError, SqpProblem};
use crate::qn::QnState;

/// Direction of the gradient part of the restart test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RestartGradTest {
    /// Restart when the gradient norm failed to drop by the factor
    /// `1 - eta2` (the reading consistent with "insufficient decrease").
    InsufficientDecrease,
    /// The literal inequality `(1 - eta2) * next < prev`, which fires on
    /// good steps instead; kept selectable for comparison runs.
    AsPrinted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SqpConfig {
    /// Stopping tolerance on the stationarity/feasibility residual.
    pub eps_tol: f64,
    /// Margin of the penalty update `mu = max(mu, |dl|_inf + eps_update)`.
    pub eps_update: f64,
    pub mu0: f64,
    /// Merit-stall threshold of the restart test; 0 disables restarts.
    pub eta1: f64,
    /// Gradient-decrease threshold of the restart test.
    pub eta2: f64,
    /// Armijo sufficient-decrease factor.
    pub sigma: f64,
    /// Backtracking contraction.
    pub beta: f64,
    pub alpha_min: f64,
    pub max_outer: usize,
    /// Quasi-Newton memory between restarts.
    pub m_max: usize,
    /// Curvature safeguard for accepting secant pairs.
    pub curvature_tol: f64,
    pub krylov: KrylovConfig,
    pub restart_grad_test: RestartGradTest,
}

impl Default for SqpConfig {
    fn default() -> Self {
        Self {
            eps_tol: 1e-8,
            eps_update: 1.0,
            mu0: 10.0,
            eta1: 0.25,
            eta2: 0.25,
            sigma: 1e-4,
            beta: 0.5,
            alpha_min: (0.5f64).powi(20),
            max_outer: 100,
            m_max: crate::qn::DEFAULT_MEMORY,
            curvature_tol: crate::qn::DEFAULT_CURVATURE_TOL,
            krylov: KrylovConfig::default(),
            restart_grad_test: RestartGradTest::InsufficientDecrease,
        }
    }
}

impl SqpConfig {
    /// All violations at once, so a bad config is fixable in one pass.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut errors = Vec::new();
        let mut positive = |name: &str, v: f64| {
            if !(v > 0.0 && v.is_finite()) {
                errors.push(format!("{name} must be positive and finite, got {v}"));
            }
        };
        positive("eps_tol", self.eps_tol);
        positive("eps_update", self.eps_update);
        positive("mu0", self.mu0);
        positive("curvature_tol", self.curvature_tol);
        positive("krylov.tol", self.krylov.tol);
        let mut unit = |name: &str, v: f64, allow_zero: bool| {
            let ok = v.is_finite() && v < 1.0 && (v > 0.0 || (allow_zero && v == 0.0));
            if !ok {
                let lo = if allow_zero { "[0, 1)" } else { "(0, 1)" };
                errors.push(format!("{name} must lie in {lo}, got {v}"));
            }
        };
        unit("eta1", self.eta1, true);
        unit("eta2", self.eta2, true);
        unit("sigma", self.sigma, false);
        unit("beta", self.beta, false);
        unit("alpha_min", self.alpha_min, false);
        if self.max_outer == 0 {
            errors.push("max_outer must be at least 1".into());
        }
        if self.m_max == 0 {
            errors.push("m_max must be at least 1".into());
        }
        if self.krylov.max_iters == 0 {
            errors.push("krylov.max_iters must be at least 1".into());
        }
        if errors.is_empty() { Ok(()) } else { Err(errors) }
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    MaxOuterIterations,
    /// Line search failed with a freshly factored exact Hessian.
    LineSearchFailed,
    /// Interface solve failed with a freshly factored exact Hessian.
    KrylovFailed,
    /// Step was not a descent direction even after recovery.
    NonDescentDirection,
}

/// One accepted outer iteration, with everything needed to re-verify the
/// globalization rules from the outside.
#[derive(Debug, Clone, Serialize)]
pub struct IterationTrace {
    pub k: usize,
    /// Residual max(|grad J + B'l|_inf, |Bu|_inf) at the iterate the step
    /// started from.
    pub grad_l_inf: f64,
    pub constraint_inf: f64,
    /// Penalty parameter used by this step's line search.
    pub mu: f64,
    pub delta_lambda_inf: f64,
    /// Directional derivative of the merit function along the step.
    pub dp1: f64,
    /// Merit at the old iterate, same penalty as `merit_after`.
    pub merit_before: f64,
    pub merit_after: f64,
    pub alpha: f64,
    pub krylov_iterations: usize,
    /// Exact Hessian recomputed during or at the end of this iteration.
    pub restarted: bool,
    pub precond_built: bool,
    /// `|l_next - dl|_inf`; zero by construction for the SQP driver, absent
    /// for the baseline (which updates multipliers incrementally).
    pub lambda_update_residual: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub converged: bool,
    pub termination: Termination,
    pub outer_iterations: usize,
    pub total_krylov_iterations: usize,
    pub hessian_recomputations: usize,
    pub preconditioner_builds: usize,
    pub final_grad_l_inf: f64,
    pub final_constraint_inf: f64,
    pub solve_seconds: f64,
    pub trace: Vec<IterationTrace>,
}

pub struct Solution {
    pub u: DVector<f64>,
    pub lambda: DVector<f64>,
    pub report: SolveReport,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid solver configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

#[derive(Debug, Error, Clone, Copy, PartialEq)]
#[error("no step length >= {alpha_min:e} satisfied the Armijo condition")]
pub struct LineSearchFailure {
    pub alpha_min: f64,
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    if v.is_empty() { 0.0 } else { v.amax() }
}

fn l1_norm(v: &DVector<f64>) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Stationarity/feasibility residual of the first-order conditions.
pub fn kkt_residual_inf<C: Constraint>(
    constraint: &C,
    grad_j: &DVector<f64>,
    lambda: &DVector<f64>,
    bu: &DVector<f64>,
) -> f64 {
    let grad_l = grad_j + constraint.apply_transpose(lambda);
    inf_norm(&grad_l).max(inf_norm(bu))
}

/// l1 merit `J(u) + mu |Bu|_1`; infinite on inadmissible states.
pub fn merit_p1<P: SqpProblem>(problem: &P, u: &DVector<f64>, mu: f64) -> f64 {
    problem.objective(u) + mu * l1_norm(&problem.jump().apply(u))
}

/// Directional derivative of the l1 merit along an SQP step (which
/// satisfies `B(u + d) = 0`, so the constraint term drops at full rate).
pub fn dir_derivative_p1(grad_j: &DVector<f64>, d: &DVector<f64>, bu_l1: f64, mu: f64) -> f64 {
    grad_j.dot(d) - mu * bu_l1
}

/// `mu_next = max(mu, |dl|_inf + eps_update)`: keeps the penalty above the
/// multiplier scale so the merit function stays exact.
pub fn penalty_update(mu: f64, delta_lambda_inf: f64, eps_update: f64) -> f64 {
    mu.max(delta_lambda_inf + eps_update)
}

/// Fires when the merit stalled while the gradient did not drop enough;
/// both thresholds relative.
pub fn restart_check(
    p1_prev: f64,
    p1_next: f64,
    grad_prev: f64,
    grad_next: f64,
    eta1: f64,
    eta2: f64,
    mode: RestartGradTest,
) -> bool {
    let merit_stalled = (p1_next - p1_prev).abs() < eta1 * p1_prev.abs();
    let grad_test = match mode {
        RestartGradTest::InsufficientDecrease => grad_next > (1.0 - eta2) * grad_prev,
        RestartGradTest::AsPrinted => (1.0 - eta2) * grad_next < grad_prev,
    };
    merit_stalled && grad_test
}

/// Rounding allowance added to the sufficient-decrease test. Near a solved
/// state the required decrease `sigma * alpha * slope` falls below what the
/// merit evaluation can resolve: the assembled energy is a long sum whose
/// rounding noise is orders of magnitude above one ulp of the result, and
/// stays absolute when cancellation makes the summed value itself small.
/// Without this allowance no trial step could pass once decreases shrink to
/// that scale, even though the iterate is still improving.
pub fn armijo_slack(merit0: f64) -> f64 {
    1024.0 * f64::EPSILON * (1.0 + merit0.abs())
}

/// Backtracks `alpha` in {1, beta, beta^2, ...} until the merit drop beats
/// `sigma * alpha * slope` up to rounding slack. The acceptance comparison
/// is written so NaN or infinite trial merits reject the step.
fn backtrack(
    merit0: f64,
    slope: f64,
    cfg: &SqpConfig,
    mut merit_at: impl FnMut(f64) -> f64,
) -> Result<(f64, f64, usize), LineSearchFailure> {
    debug_assert!(slope < 0.0);
    let mut alpha = 1.0;
    let mut evaluations = 0;
    while alpha >= cfg.alpha_min {
        let m = merit_at(alpha);
        evaluations += 1;
        if m <= merit0 + cfg.sigma * alpha * slope + armijo_slack(merit0) {
            return Ok((alpha, m, evaluations));
        }
        alpha *= cfg.beta;
    }
    Err(LineSearchFailure { alpha_min: cfg.alpha_min })
}

/// Armijo backtracking on the l1 merit; returns the accepted step length
/// and the merit values at both ends.
pub fn armijo_backtrack<P: SqpProblem>(
    problem: &P,
    u: &DVector<f64>,
    d: &DVector<f64>,
    mu: f64,
    dp1: f64,
    cfg: &SqpConfig,
) -> Result<(f64, f64, f64), LineSearchFailure> {
    let merit0 = merit_p1(problem, u, mu);
    let (alpha, merit_alpha, _) =
        backtrack(merit0, dp1, cfg, |a| merit_p1(problem, &(u + d * a), mu))?;
    Ok((alpha, merit0, merit_alpha))
}

/// Differentiable penalty merit of the baseline:
/// `L + mu/2 |Bu|^2 + |B grad_u L|^2`; infinite on inadmissible states.
pub fn merit_dp<P: SqpProblem>(
    problem: &P,
    u: &DVector<f64>,
    lambda: &DVector<f64>,
    mu: f64,
) -> f64 {
    let jump = problem.jump();
    match problem.objective_gradient(u) {
        Err(_) => f64::INFINITY,
        Ok((j, grad_j)) => {
            let bu = jump.apply(u);
            let grad_l = grad_j + jump.apply_transpose(lambda);
            let bgl = jump.apply(&grad_l);
            j + lambda.dot(&bu) + 0.5 * mu * bu.norm_squared() + bgl.norm_squared()
        }
    }
}

enum Reject {
    Krylov,
    NonDescent,
    LineSearch,
}

struct Accepted {
    delta_u: DVector<f64>,
    delta_lambda: DVector<f64>,
    krylov_iterations: usize,
    mu_next: f64,
    dp1: f64,
    alpha: f64,
    merit_before: f64,
    merit_after: f64,
}

/// Globalized SQP with quasi-Newton Hessian approximations and exact
/// restarts. Multipliers are replaced by the subproblem multiplier each
/// step; the exact Hessian is refactored only at the start, on forced
/// recovery, and when the restart test fires.
pub fn sqp_solve<P: SqpProblem>(
    problem: &P,
    u0: &DVector<f64>,
    cfg: &SqpConfig,
) -> Result<Solution, SolveError> {
    cfg.validate().map_err(SolveError::Config)?;
    assert_eq!(u0.len(), problem.n_unknowns());
    let clock = Instant::now();
    let jump = problem.jump();

    let mut u = u0.clone();
    let mut lambda = DVector::zeros(jump.n_multipliers());
    let mut mu = cfg.mu0;
    let (mut objective, mut grad_j) = problem.objective_gradient(&u)?;
    let mut bu = jump.apply(&u);
    let mut residual = kkt_residual_inf(jump, &grad_j, &lambda, &bu);

    let mut state: Option<(QnState<P::Hessian>, P::Precond)> = None;
    // True while the quasi-Newton base is the exact Hessian at the current
    // iterate; recovery refactoring is pointless (and skipped) then.
    let mut base_fresh = false;
    let mut trace: Vec<IterationTrace> = Vec::new();
    let mut hessian_recomputations = 0usize;
    let mut preconditioner_builds = 0usize;
    let mut total_krylov = 0usize;
    let mut termination = Termination::MaxOuterIterations;

    let mut k = 0;
    while k < cfg.max_outer {
        if residual <= cfg.eps_tol {
            termination = Termination::Converged;
            break;
        }
        let mut restarted = false;
        if state.is_none() {
            let h = problem.factor_hessian(&u)?;
            let pre = problem.preconditioner(&h)?;
            hessian_recomputations += 1;
            preconditioner_builds += 1;
            state = Some((QnState::with_memory(h, cfg.m_max, cfg.curvature_tol), pre));
            base_fresh = true;
            restarted = true;
        }

        let bu_l1 = l1_norm(&bu);
        let mut krylov_this_iter = 0usize;
        let accepted = loop {
            let (qn, pre) = state.as_ref().expect("base factorization exists");
            let reject = match solve_kkt_from(
                qn,
                jump,
                &grad_j,
                &bu,
                Some(&lambda),
                pre,
                &cfg.krylov,
            ) {
                Err(_) => Reject::Krylov,
                Ok(sol) => {
                    krylov_this_iter += sol.krylov_iterations;
                    let mu_next =
                        penalty_update(mu, inf_norm(&sol.delta_lambda), cfg.eps_update);
                    let dp1 = dir_derivative_p1(&grad_j, &sol.delta_u, bu_l1, mu_next);
                    if dp1 < 0.0 {
                        match armijo_backtrack(problem, &u, &sol.delta_u, mu_next, dp1, cfg) {
                            Ok((alpha, merit_before, merit_after)) => {
                                break Ok(Accepted {
                                    delta_u: sol.delta_u,
                                    delta_lambda: sol.delta_lambda,
                                    krylov_iterations: krylov_this_iter,
                                    mu_next,
                                    dp1,
                                    alpha,
                                    merit_before,
                                    merit_after,
                                });
                            }
                            Err(_) => Reject::LineSearch,
                        }
                    } else {
                        Reject::NonDescent
                    }
                }
            };
            if base_fresh {
                // The exact Hessian at this very iterate already failed;
                // another refactoring cannot help.
                break Err(match reject {
                    Reject::Krylov => Termination::KrylovFailed,
                    Reject::NonDescent => Termination::NonDescentDirection,
                    Reject::LineSearch => Termination::LineSearchFailed,
                });
            }
            let h = problem.factor_hessian(&u)?;
            let pre_new = problem.preconditioner(&h)?;
            hessian_recomputations += 1;
            preconditioner_builds += 1;
            let (qn, pre) = state.as_mut().expect("base factorization exists");
            qn.restart(h);
            *pre = pre_new;
            base_fresh = true;
            restarted = true;
        };
        let step = match accepted {
            Ok(step) => step,
            Err(reason) => {
                termination = reason;
                break;
            }
        };

        // The merit comparison of the restart test mixes penalties: the new
        // iterate is measured with the updated mu, the old one with the mu
        // its own line search used.
        let p1_prev_own_mu = objective + mu * bu_l1;
        let residual_prev = residual;
        let constraint_prev = inf_norm(&bu);

        u.axpy(step.alpha, &step.delta_u, 1.0);
        let lambda_next = step.delta_lambda.clone();
        mu = step.mu_next;
        let (objective_next, grad_j_next) = problem.objective_gradient(&u)?;
        bu = jump.apply(&u);
        residual = kkt_residual_inf(jump, &grad_j_next, &lambda_next, &bu);

        let pair_d = &step.delta_u * step.alpha;
        let pair_y = &grad_j_next - &grad_j;
        let (qn, _) = state.as_mut().expect("base factorization exists");
        qn.update(pair_d, pair_y);
        base_fresh = false;

        if !restarted
            && restart_check(
                p1_prev_own_mu,
                step.merit_after,
                residual_prev,
                residual,
                cfg.eta1,
                cfg.eta2,
                cfg.restart_grad_test,
            )
        {
            let h = problem.factor_hessian(&u)?;
            let pre_new = problem.preconditioner(&h)?;
            hessian_recomputations += 1;
            preconditioner_builds += 1;
            let (qn, pre) = state.as_mut().expect("base factorization exists");
            qn.restart(h);
            *pre = pre_new;
            base_fresh = true;
            restarted = true;
        }

        trace.push(IterationTrace {
            k,
            grad_l_inf: residual_prev,
            constraint_inf: constraint_prev,
            mu,
            delta_lambda_inf: inf_norm(&step.delta_lambda),
            dp1: step.dp1,
            merit_before: step.merit_before,
            merit_after: step.merit_after,
            alpha: step.alpha,
            krylov_iterations: step.krylov_iterations,
            restarted,
            precond_built: restarted,
            lambda_update_residual: Some(inf_norm(&(&lambda_next - &step.delta_lambda))),
        });

        lambda = lambda_next;
        objective = objective_next;
        grad_j = grad_j_next;
        total_krylov += step.krylov_iterations;
        k += 1;
    }
    if termination == Termination::MaxOuterIterations && residual <= cfg.eps_tol {
        termination = Termination::Converged;
    }

    let report = SolveReport {
        converged: termination == Termination::Converged,
        termination,
        outer_iterations: trace.len(),
        total_krylov_iterations: total_krylov,
        hessian_recomputations,
        preconditioner_builds,
        final_grad_l_inf: residual,
        final_constraint_inf: inf_norm(&bu),
        solve_seconds: clock.elapsed().as_secs_f64(),
        trace,
    };
    Ok(Solution { u, lambda, report })
}

/// Exact-Hessian Lagrange-Newton baseline, globalized by the differentiable
/// penalty merit. Assembles and factors the Hessian every iteration;
/// multipliers move incrementally along the step.
pub fn newton_penalty_solve<P: SqpProblem>(
    problem: &P,
    u0: &DVector<f64>,
    cfg: &SqpConfig,
) -> Result<Solution, SolveError> {
    cfg.validate().map_err(SolveError::Config)?;
    assert_eq!(u0.len(), problem.n_unknowns());
    let clock = Instant::now();
    let jump = problem.jump();

    let mut u = u0.clone();
    let mut lambda = DVector::zeros(jump.n_multipliers());
    let mut mu = cfg.mu0;
    let (_, mut grad_j) = problem.objective_gradient(&u)?;
    let mut bu = jump.apply(&u);
    let mut residual = kkt_residual_inf(jump, &grad_j, &lambda, &bu);

    let mut trace: Vec<IterationTrace> = Vec::new();
    let mut hessian_recomputations = 0usize;
    let mut preconditioner_builds = 0usize;
    let mut total_krylov = 0usize;
    let mut termination = Termination::MaxOuterIterations;

    let mut k = 0;
    while k < cfg.max_outer {
        if residual <= cfg.eps_tol {
            termination = Termination::Converged;
            break;
        }
        let hessian = problem.factor_hessian(&u)?;
        let precond = problem.preconditioner(&hessian)?;
        hessian_recomputations += 1;
        preconditioner_builds += 1;

        let grad_l = &grad_j + jump.apply_transpose(&lambda);
        let sol = match solve_kkt(&hessian, jump, &grad_l, &bu, &precond, &cfg.krylov) {
            Ok(sol) => sol,
            Err(_) => {
                termination = Termination::KrylovFailed;
                break;
            }
        };
        total_krylov += sol.krylov_iterations;

        // Directional derivative of the penalty merit along (du, dl); the
        // mu-dependent part is affine, so a descent-restoring mu is exact.
        let bgl = jump.apply(&grad_l);
        let bt_bgl = jump.apply_transpose(&bgl);
        let b_du = jump.apply(&sol.delta_u);
        let slope_const = grad_l.dot(&sol.delta_u)
            + 2.0 * hessian.matvec(&bt_bgl).dot(&sol.delta_u)
            + bu.dot(&sol.delta_lambda)
            + 2.0 * jump.apply(&bt_bgl).dot(&sol.delta_lambda);
        let slope_mu = bu.dot(&b_du);
        let mut dp = slope_const + mu * slope_mu;
        if !(dp < 0.0) {
            // One recovery attempt: raise mu far enough that the affine
            // slope turns negative (possible only while Bu != 0).
            let mu_retry = if slope_mu < 0.0 {
                (10.0 * mu).max((slope_const + 0.1 * slope_const.abs() + 1e-12) / -slope_mu)
            } else {
                10.0 * mu
            };
            dp = slope_const + mu_retry * slope_mu;
            if !(dp < 0.0) {
                termination = Termination::NonDescentDirection;
                break;
            }
            mu = mu_retry;
        }

        let merit0 = merit_dp(problem, &u, &lambda, mu);
        let search = backtrack(merit0, dp, cfg, |a| {
            merit_dp(problem, &(&u + &sol.delta_u * a), &(&lambda + &sol.delta_lambda * a), mu)
        });
        let (alpha, merit_after, _) = match search {
            Ok(hit) => hit,
            Err(_) => {
                termination = Termination::LineSearchFailed;
                break;
            }
        };

        let residual_prev = residual;
        let constraint_prev = inf_norm(&bu);
        u.axpy(alpha, &sol.delta_u, 1.0);
        lambda.axpy(alpha, &sol.delta_lambda, 1.0);
        let (_, grad_j_next) = problem.objective_gradient(&u)?;
        grad_j = grad_j_next;
        bu = jump.apply(&u);
        residual = kkt_residual_inf(jump, &grad_j, &lambda, &bu);

        trace.push(IterationTrace {
            k,
            grad_l_inf: residual_prev,
            constraint_inf: constraint_prev,
            mu,
            delta_lambda_inf: inf_norm(&sol.delta_lambda),
            dp1: dp,
            merit_before: merit0,
            merit_after,
            alpha,
            krylov_iterations: sol.krylov_iterations,
            restarted: true,
            precond_built: true,
            lambda_update_residual: None,
        });
        k += 1;
    }
    if termination == Termination::MaxOuterIterations && residual <= cfg.eps_tol {
        termination = Termination::Converged;
    }

    let report = SolveReport {
        converged: termination == Termination::Converged,
        termination,
        outer_iterations: trace.len(),
        total_krylov_iterations: total_krylov,
        hessian_recomputations,
        preconditioner_builds,
        final_grad_l_inf: residual,
        final_constraint_inf: inf_norm(&bu),
        solve_seconds: clock.elapsed().as_secs_f64(),
        trace,
    };
    Ok(Solution { u, lambda, report })
}
