//! Dirichlet preconditioner for the dual interface solve.
//!
//! For each subdomain, split `K_BB` into interior (I) and dual interface
//! (G) dofs and form the action of the interface Schur complement
//! `S = K_GG - K_GI K_II^{-1} K_IG`. The preconditioner is
//! `M^{-1} = B_D (blockdiag S^(i)) B_D^T` with the multiplicity-scaled jump
//! `B_D`. It is built from the Hessian blocks at a restart point and then
//! deliberately kept frozen; the SQP driver rebuilds it only when it
//! refactors the exact Hessian.

use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;
use sprs::{CsMat, TriMat};
use sprs_ldl::LdlNumeric;

use crate::decomp::{JumpOperator, TornLayout};
use crate::kkt::Constraint;

use super::blocks::{csc_mul_acc, HessianBlocks};
use super::{FactorError, MultiplierPreconditioner};

struct SubSchur {
    n_interior: usize,
    n_dual: usize,
    kii_ldl: Option<LdlNumeric<f64, usize>>,
    /// dual x interior coupling and its transpose.
    kgi: CsMat<f64>,
    kig: CsMat<f64>,
    kgg: CsMat<f64>,
}

impl SubSchur {
    /// `S v` on the subdomain's dual dofs.
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_dual];
        csc_mul_acc(&self.kgg, v, &mut out);
        if let Some(ldl) = &self.kii_ldl {
            let mut t = vec![0.0; self.n_interior];
            csc_mul_acc(&self.kig, v, &mut t);
            let u = ldl.solve(&t);
            let mut corr = vec![0.0; self.n_dual];
            csc_mul_acc(&self.kgi, &u, &mut corr);
            for (o, c) in out.iter_mut().zip(&corr) {
                *o -= c;
            }
        }
        out
    }
}

pub struct DirichletPreconditioner {
    layout: Arc<TornLayout>,
    scaled_jump: JumpOperator,
    subs: Vec<SubSchur>,
}

/// Builds the frozen interface preconditioner from Hessian blocks assembled
/// at the current restart point.
pub fn build_dirichlet_preconditioner(
    blocks: &HessianBlocks,
    scaled_jump: &JumpOperator,
) -> Result<DirichletPreconditioner, FactorError> {
    let layout = Arc::clone(&blocks.layout);
    let subs: Result<Vec<_>, FactorError> = layout
        .subs
        .par_iter()
        .enumerate()
        .map(|(i, sub)| {
            let ni = sub.n_interior;
            let nd = sub.n_dual;
            let mut tii = TriMat::new((ni, ni));
            let mut tgi = TriMat::new((nd, ni));
            let mut tig = TriMat::new((ni, nd));
            let mut tgg = TriMat::new((nd, nd));
            for (val, (r, c)) in blocks.kbb[i].iter() {
                match (r < ni, c < ni) {
                    (true, true) => tii.add_triplet(r, c, *val),
                    (false, true) => tgi.add_triplet(r - ni, c, *val),
                    (true, false) => tig.add_triplet(r, c - ni, *val),
                    (false, false) => tgg.add_triplet(r - ni, c - ni, *val),
                }
            }
            let kii_ldl = if ni > 0 {
                Some(super::blocks::factor_sparse(&tii.to_csc()).map_err(|reason| {
                    FactorError::InteriorBlock { subdomain: i, reason }
                })?)
            } else {
                None
            };
            Ok(SubSchur {
                n_interior: ni,
                n_dual: nd,
                kii_ldl,
                kgi: tgi.to_csc(),
                kig: tig.to_csc(),
                kgg: tgg.to_csc(),
            })
        })
        .collect();
    Ok(DirichletPreconditioner {
        layout,
        scaled_jump: scaled_jump.clone(),
        subs: subs?,
    })
}

impl MultiplierPreconditioner for DirichletPreconditioner {
    fn apply(&self, r: &DVector<f64>) -> DVector<f64> {
        let w = self.scaled_jump.apply_transpose(r);
        let segments: Vec<Vec<f64>> = self
            .layout
            .subs
            .par_iter()
            .zip(&self.subs)
            .map(|(lay, schur)| {
                if schur.n_dual == 0 {
                    return Vec::new();
                }
                let start = lay.offset + lay.n_interior;
                schur.apply(&w.as_slice()[start..start + schur.n_dual])
            })
            .collect();
        let mut out = DVector::zeros(self.layout.n_total());
        for (lay, seg) in self.layout.subs.iter().zip(&segments) {
            let start = lay.offset + lay.n_interior;
            for (k, v) in seg.iter().enumerate() {
                out[start + k] = *v;
            }
        }
        self.scaled_jump.apply(&out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::SubLayout;
    use crate::kkt::blocks::tests::{dense_to_csc, stub_layout};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Two single-dof subdomains joined by one scaled jump row.
    #[test]
    fn scalar_interface_gives_positive_scalar() {
        let mut layout = (*stub_layout(&[1, 1], &[vec![], vec![]], 0)).clone();
        for sub in &mut layout.subs {
            sub.n_interior = 0;
            sub.n_dual = 1;
        }
        layout.n_lambda = 1;
        let layout = Arc::new(layout);
        let blocks = HessianBlocks {
            layout: Arc::clone(&layout),
            kbb: vec![
                dense_to_csc(&DMatrix::from_element(1, 1, 2.0)),
                dense_to_csc(&DMatrix::from_element(1, 1, 3.0)),
            ],
            kbp: vec![DMatrix::zeros(1, 0), DMatrix::zeros(1, 0)],
            kpp: DMatrix::zeros(0, 0),
        };
        let bd = JumpOperator { n_unknowns: 2, weight: 0.5, rows: vec![(0, 1)] };
        let m = build_dirichlet_preconditioner(&blocks, &bd).unwrap();
        let out = m.apply(&DVector::from_element(1, 1.0));
        // B_D^T 1 = (1/2, -1/2); S = diag(2, 3); B_D (1, -3/2) = 1/2 + 3/4.
        assert_relative_eq!(out[0], 1.25, epsilon = 1e-14);
    }

    fn elasticity_like_blocks(rng: &mut impl Rng) -> (Arc<TornLayout>, HessianBlocks, JumpOperator) {
        // Two subdomains, 4 interior + 2 dual dofs each, duals glued.
        let mut subs = Vec::new();
        let mut offset = 0;
        for _ in 0..2 {
            subs.push(SubLayout {
                offset,
                n_interior: 4,
                n_dual: 2,
                slots: Vec::new(),
                b_dofs: Vec::new(),
                pi_dofs: Vec::new(),
            });
            offset += 6;
        }
        let layout = Arc::new(TornLayout { subs, pi_offset: offset, n_pi: 0, n_lambda: 2 });
        let kbb: Vec<_> = (0..2)
            .map(|_| {
                let a = DMatrix::from_fn(6, 6, |_, _| rng.gen_range(-1.0..1.0));
                dense_to_csc(&(&a * a.transpose() + DMatrix::identity(6, 6) * 8.0))
            })
            .collect();
        let blocks = HessianBlocks {
            layout: Arc::clone(&layout),
            kbb,
            kbp: vec![DMatrix::zeros(6, 0), DMatrix::zeros(6, 0)],
            kpp: DMatrix::zeros(0, 0),
        };
        let bd = JumpOperator {
            n_unknowns: 12,
            weight: 0.5,
            rows: vec![(4, 10), (5, 11)],
        };
        (layout, blocks, bd)
    }

    #[test]
    fn application_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (_, blocks, bd) = elasticity_like_blocks(&mut rng);
        let m = build_dirichlet_preconditioner(&blocks, &bd).unwrap();
        for _ in 0..5 {
            let a = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
            let b = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
            let lhs = a.dot(&m.apply(&b));
            let rhs = b.dot(&m.apply(&a));
            assert_relative_eq!(lhs, rhs, epsilon = 1e-12);
        }
    }

    #[test]
    fn matches_dense_schur_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (layout, blocks, bd) = elasticity_like_blocks(&mut rng);
        let m = build_dirichlet_preconditioner(&blocks, &bd).unwrap();
        // Dense oracle: S^(i) = K_GG - K_GI K_II^{-1} K_IG per subdomain.
        let mut s_block = DMatrix::zeros(4, 4);
        for (i, _) in layout.subs.iter().enumerate() {
            let mut k = DMatrix::zeros(6, 6);
            for (val, (r, c)) in blocks.kbb[i].iter() {
                k[(r, c)] = *val;
            }
            let kii = k.view((0, 0), (4, 4)).clone_owned();
            let kig = k.view((0, 4), (4, 2)).clone_owned();
            let kgi = k.view((4, 0), (2, 4)).clone_owned();
            let kgg = k.view((4, 4), (2, 2)).clone_owned();
            let s = &kgg - &kgi * kii.lu().solve(&kig).unwrap();
            s_block.view_mut((2 * i, 2 * i), (2, 2)).copy_from(&s);
        }
        // Dense B_D over the dual-only coordinates (4 dual dofs).
        let mut bdm = DMatrix::zeros(2, 4);
        bdm[(0, 0)] = 0.5;
        bdm[(0, 2)] = -0.5;
        bdm[(1, 1)] = 0.5;
        bdm[(1, 3)] = -0.5;
        let dense = &bdm * s_block * bdm.transpose();
        for _ in 0..5 {
            let mu = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
            let got = m.apply(&mu);
            let expect = &dense * &mu;
            assert_relative_eq!((got - expect).norm(), 0.0, epsilon = 1e-11);
        }
    }
}
