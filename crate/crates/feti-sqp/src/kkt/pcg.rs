//! Preconditioned conjugate gradients on the multiplier space.

use nalgebra::DVector;

use super::{KrylovConfig, KrylovError, MultiplierPreconditioner};

#[derive(Debug, Clone)]
pub struct PcgResult {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Solves `A x = rhs` for a symmetric positive definite operator, starting
/// from zero. Convergence is declared when the preconditioned residual norm
/// `sqrt(r^T M^{-1} r)` drops below `tol` times its initial value.
pub fn pcg<A, M>(
    apply_a: A,
    precond: &M,
    rhs: &DVector<f64>,
    cfg: &KrylovConfig,
) -> Result<PcgResult, KrylovError>
where
    A: Fn(&DVector<f64>) -> DVector<f64>,
    M: MultiplierPreconditioner + ?Sized,
{
    pcg_from(apply_a, precond, rhs, None, cfg)
}

/// Like [`pcg`] but starting from `x0` when given. Convergence is measured
/// relative to the initial residual at `x0`, with a rounding floor scaled by
/// the preconditioned norm of `rhs`: once the residual sits a few ulps of
/// the rhs magnitude above zero, further reduction is not resolvable in
/// double precision and the iteration stops rather than erroring out.
pub fn pcg_from<A, M>(
    apply_a: A,
    precond: &M,
    rhs: &DVector<f64>,
    x0: Option<&DVector<f64>>,
    cfg: &KrylovConfig,
) -> Result<PcgResult, KrylovError>
where
    A: Fn(&DVector<f64>) -> DVector<f64>,
    M: MultiplierPreconditioner + ?Sized,
{
    let n = rhs.len();
    let warm = x0.is_some_and(|v| v.amax() != 0.0);
    let mut x = match x0 {
        Some(v) if warm => {
            debug_assert_eq!(v.len(), n);
            v.clone()
        }
        _ => DVector::zeros(n),
    };
    if n == 0 {
        return Ok(PcgResult { x, iterations: 0, rel_residual: 0.0 });
    }
    let mut r = if warm { rhs - apply_a(&x) } else { rhs.clone() };
    if r.amax() == 0.0 {
        return Ok(PcgResult { x, iterations: 0, rel_residual: 0.0 });
    }
    let mut z = precond.apply(&r);
    let mut rho = r.dot(&z);
    if rho <= 0.0 {
        return Err(KrylovError::Breakdown { iteration: 0, curvature: rho });
    }
    let rho0 = rho;
    let threshold = if warm {
        let z_rhs = precond.apply(rhs);
        let noise = 64.0 * f64::EPSILON;
        (cfg.tol * cfg.tol * rho0).max(noise * noise * rhs.dot(&z_rhs))
    } else {
        cfg.tol * cfg.tol * rho0
    };
    let mut p = z.clone();
    let mut rel = 1.0;
    for iteration in 1..=cfg.max_iters {
        let q = apply_a(&p);
        let pq = p.dot(&q);
        if pq <= 0.0 {
            return Err(KrylovError::Breakdown { iteration, curvature: pq });
        }
        let alpha = rho / pq;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &q, 1.0);
        z = precond.apply(&r);
        let rho_next = r.dot(&z);
        rel = (rho_next.max(0.0) / rho0).sqrt();
        if rho_next.max(0.0) <= threshold {
            return Ok(PcgResult { x, iterations: iteration, rel_residual: rel });
        }
        p *= rho_next / rho;
        p += &z;
        rho = rho_next;
    }
    Err(KrylovError::MaxIterations { max_iters: cfg.max_iters, rel_residual: rel })
}
