//! Block factorization of the torn Hessian.
//!
//! The Hessian of the torn Lagrangian couples each subdomain's `u_B` block
//! only with itself and with the global primal block:
//!
//! ```text
//! H = [ K_BB^(1)              K_BPi^(1) ]
//!     [          ...          ...       ]
//!     [              K_BB^(N) K_BPi^(N) ]
//!     [ K_PiB^(1) ... K_PiB^(N) K_PiPi  ]
//! ```
//!
//! Factoring the sparse `K_BB` blocks independently and the small dense
//! primal Schur complement `S_PiPi = K_PiPi - sum_i K_PiB K_BB^{-1} K_BPi`
//! yields an exact solve by block elimination.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Dyn};
use rayon::prelude::*;
use sprs::{CsMat, FillInReduction, SymmetryCheck};
use sprs_ldl::{Ldl, LdlNumeric};

use crate::decomp::TornLayout;

use super::{FactorError, InverseOperator};

/// `out += M v` for a CSC matrix.
pub(crate) fn csc_mul_acc(m: &CsMat<f64>, v: &[f64], out: &mut [f64]) {
    debug_assert!(m.is_csc());
    debug_assert_eq!(m.cols(), v.len());
    debug_assert_eq!(m.rows(), out.len());
    for (col, colvec) in m.outer_iterator().enumerate() {
        let x = v[col];
        if x != 0.0 {
            for (row, &val) in colvec.iter() {
                out[row] += val * x;
            }
        }
    }
}

/// Assembled second derivatives of the torn Lagrangian at one iterate, in
/// the block structure above. `kbb[i]` is ordered interior-first like the
/// layout; `kbp[i]` has one column per local primal slot.
#[derive(Debug, Clone)]
pub struct HessianBlocks {
    pub layout: Arc<TornLayout>,
    pub kbb: Vec<CsMat<f64>>,
    pub kbp: Vec<DMatrix<f64>>,
    pub kpp: DMatrix<f64>,
}

impl HessianBlocks {
    /// `H v` over the flat torn layout; used for directional derivatives of
    /// the penalty merit function.
    pub fn matvec(&self, v: &DVector<f64>) -> DVector<f64> {
        let lay = &self.layout;
        debug_assert_eq!(v.len(), lay.n_total());
        let mut out = DVector::zeros(lay.n_total());
        let pi_off = lay.pi_offset;
        for (i, sub) in lay.subs.iter().enumerate() {
            let nb = sub.n_b();
            let vb = v.as_slice()[sub.offset..sub.offset + nb].to_vec();
            csc_mul_acc(
                &self.kbb[i],
                &vb,
                &mut out.as_mut_slice()[sub.offset..sub.offset + nb],
            );
            let npil = sub.pi_dofs.len();
            if npil > 0 {
                let vpil = DVector::from_fn(npil, |a, _| v[pi_off + sub.pi_dofs[a].1]);
                let coupled = &self.kbp[i] * &vpil;
                for r in 0..nb {
                    out[sub.offset + r] += coupled[r];
                }
                let vb_vec = DVector::from_vec(vb);
                let w = self.kbp[i].tr_mul(&vb_vec);
                for (a, &(_, pi)) in sub.pi_dofs.iter().enumerate() {
                    out[pi_off + pi] += w[a];
                }
            }
        }
        if lay.n_pi > 0 {
            let vpi = v.rows(pi_off, lay.n_pi).clone_owned();
            let kv = &self.kpp * vpi;
            for p in 0..lay.n_pi {
                out[pi_off + p] += kv[p];
            }
        }
        out
    }
}

/// Factored torn Hessian: independent sparse LDL^T factors per subdomain
/// plus a dense LU of the primal Schur complement.
pub struct BlockFactorization {
    layout: Arc<TornLayout>,
    sub_ldl: Vec<LdlNumeric<f64, usize>>,
    kbp: Vec<DMatrix<f64>>,
    /// Per subdomain `K_BB^{-1} K_BPi`, reused for the back-substitution.
    x: Vec<DMatrix<f64>>,
    spp_lu: Option<nalgebra::LU<f64, Dyn, Dyn>>,
}

pub(crate) fn factor_sparse(m: &CsMat<f64>) -> Result<LdlNumeric<f64, usize>, String> {
    Ldl::new()
        .check_symmetry(SymmetryCheck::DontCheckSymmetry)
        .fill_in_reduction(FillInReduction::ReverseCuthillMcKee)
        .numeric(m.view())
        .map_err(|e| e.to_string())
}

/// Factors the block Hessian. Per-subdomain factorizations run in parallel;
/// a singular subdomain block or singular coarse Schur complement is
/// reported as an error for the driver to handle.
pub fn factor_block_hessian(blocks: &HessianBlocks) -> Result<BlockFactorization, FactorError> {
    let layout = Arc::clone(&blocks.layout);
    let per_sub: Result<Vec<_>, FactorError> = layout
        .subs
        .par_iter()
        .enumerate()
        .map(|(i, sub)| {
            let ldl = factor_sparse(&blocks.kbb[i])
                .map_err(|reason| FactorError::SubdomainBlock { subdomain: i, reason })?;
            let nb = sub.n_b();
            let npil = sub.pi_dofs.len();
            let mut x = DMatrix::zeros(nb, npil);
            for a in 0..npil {
                let col: Vec<f64> = blocks.kbp[i].column(a).iter().copied().collect();
                let sol = ldl.solve(&col);
                x.column_mut(a).copy_from_slice(&sol);
            }
            Ok((ldl, x))
        })
        .collect();
    let per_sub = per_sub?;

    let mut sub_ldl = Vec::with_capacity(per_sub.len());
    let mut x_all = Vec::with_capacity(per_sub.len());
    let mut spp = blocks.kpp.clone();
    for ((ldl, x), sub) in per_sub.into_iter().zip(&layout.subs) {
        let corr = blocks.kbp[sub_ldl.len()].tr_mul(&x);
        for (a, &(_, pa)) in sub.pi_dofs.iter().enumerate() {
            for (b, &(_, pb)) in sub.pi_dofs.iter().enumerate() {
                spp[(pa, pb)] -= corr[(a, b)];
            }
        }
        sub_ldl.push(ldl);
        x_all.push(x);
    }
    let spp_lu = if layout.n_pi > 0 {
        let lu = spp.lu();
        if !lu.is_invertible() {
            return Err(FactorError::CoarseSingular);
        }
        Some(lu)
    } else {
        None
    };
    Ok(BlockFactorization {
        layout,
        sub_ldl,
        kbp: blocks.kbp.clone(),
        x: x_all,
        spp_lu,
    })
}

impl BlockFactorization {
    /// Applies the inverse of the assembled Hessian by block elimination.
    pub fn block_solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let lay = &self.layout;
        debug_assert_eq!(rhs.len(), lay.n_total());
        let pi_off = lay.pi_offset;
        let z: Vec<Vec<f64>> = lay
            .subs
            .par_iter()
            .enumerate()
            .map(|(i, sub)| {
                let seg = rhs.as_slice()[sub.offset..sub.offset + sub.n_b()].to_vec();
                self.sub_ldl[i].solve(&seg)
            })
            .collect();

        let mut gpi = rhs.rows(pi_off, lay.n_pi).clone_owned();
        for (i, sub) in lay.subs.iter().enumerate() {
            if sub.pi_dofs.is_empty() {
                continue;
            }
            let zi = DVector::from_vec(z[i].clone());
            let w = self.kbp[i].tr_mul(&zi);
            for (a, &(_, pi)) in sub.pi_dofs.iter().enumerate() {
                gpi[pi] -= w[a];
            }
        }
        let y = match &self.spp_lu {
            Some(lu) => lu.solve(&gpi).expect("factored coarse Schur complement"),
            None => DVector::zeros(0),
        };

        let mut out = DVector::zeros(lay.n_total());
        for (i, sub) in lay.subs.iter().enumerate() {
            let nb = sub.n_b();
            let mut xb = DVector::from_vec(z[i].clone());
            if !sub.pi_dofs.is_empty() {
                let yl = DVector::from_fn(sub.pi_dofs.len(), |a, _| y[sub.pi_dofs[a].1]);
                xb -= &self.x[i] * yl;
            }
            out.rows_mut(sub.offset, nb).copy_from(&xb);
        }
        out.rows_mut(pi_off, lay.n_pi).copy_from(&y);
        out
    }
}

impl InverseOperator for BlockFactorization {
    fn dim(&self) -> usize {
        self.layout.n_total()
    }

    fn apply_inverse(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.block_solve(rhs)
    }
}
