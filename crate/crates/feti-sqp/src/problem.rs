//! Problem abstraction consumed by the solver drivers, and its two
//! implementations: the torn hyperelastic cantilever ([`FetiProblem`]) and a
//! dense equality-constrained quadratic ([`QuadraticProblem`]) used as a
//! solver test vehicle.
//!
//! Drivers see a flat unknown vector, an objective with derivatives, a
//! linear constraint operator, and a way to factor the exact Hessian. All
//! tearing bookkeeping stays behind this boundary.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use sprs::TriMat;
use thiserror::Error;

use crate::decomp::{DecompError, Decomposition, JumpOperator, Slot, TornLayout};
use crate::fem::{
    assemble_energy, assemble_gradient, assemble_subdomain, right_edge_traction_load,
    InadmissibleDeformation, Material, Quadrature, StructuredMesh,
};
use crate::kkt::{
    build_dirichlet_preconditioner, factor_block_hessian, BlockFactorization,
    DirichletPreconditioner, FactorError, HessianBlocks, IdentityPreconditioner,
    InverseOperator, MultiplierPreconditioner,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error(transparent)]
    Inadmissible(#[from] InadmissibleDeformation),
    #[error(transparent)]
    Factor(#[from] FactorError),
}

/// Factored exact Hessian: solves against the factorization and multiplies
/// with the original matrix (the latter feeds penalty merit derivatives).
pub trait FactoredHessian: InverseOperator {
    fn matvec(&self, v: &DVector<f64>) -> DVector<f64>;
}

/// Everything a solver driver needs from a constrained minimization problem
/// with linear equality constraints.
pub trait SqpProblem: Sync {
    type Hessian: FactoredHessian;
    type Precond: MultiplierPreconditioner;
    type Jump: crate::kkt::Constraint;

    fn n_unknowns(&self) -> usize;
    fn jump(&self) -> &Self::Jump;
    /// Objective value; `+inf` when the state is inadmissible, so line
    /// searches reject it without special cases.
    fn objective(&self, u: &DVector<f64>) -> f64;
    /// Objective value and gradient; inadmissible states are an error here
    /// because accepted iterates are admissible by construction.
    fn objective_gradient(&self, u: &DVector<f64>) -> Result<(f64, DVector<f64>), ProblemError>;
    /// Assembles and factors the exact Hessian at `u`.
    fn factor_hessian(&self, u: &DVector<f64>) -> Result<Self::Hessian, ProblemError>;
    /// Interface preconditioner frozen from a factored Hessian.
    fn preconditioner(&self, hessian: &Self::Hessian) -> Result<Self::Precond, ProblemError>;
}

/// Torn Hessian with both representations the drivers need.
pub struct FetiHessian {
    pub blocks: HessianBlocks,
    factorization: BlockFactorization,
}

impl InverseOperator for FetiHessian {
    fn dim(&self) -> usize {
        self.blocks.layout.n_total()
    }

    fn apply_inverse(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.factorization.block_solve(rhs)
    }
}

impl FactoredHessian for FetiHessian {
    fn matvec(&self, v: &DVector<f64>) -> DVector<f64> {
        self.blocks.matvec(v)
    }
}

/// A clamped hyperelastic cantilever torn into subdomains: the benchmark
/// problem family. Unknowns live in the flat torn layout; the objective is
/// the sum of per-subdomain strain energies minus the external work.
pub struct FetiProblem {
    decomp: Decomposition,
    material: Material,
    quad: Quadrature,
    /// Consistent nodal forces per subdomain, over local dofs.
    loads: Vec<Option<DVector<f64>>>,
    /// Per-subdomain node mask of the clamped boundary.
    fixed: Vec<Vec<bool>>,
}

impl FetiProblem {
    /// Left edge clamped, constant vertical traction `t` on the right edge.
    /// Loads are assembled per subdomain from that subdomain's own edge
    /// elements, so shared edge nodes receive their subassembled share.
    pub fn cantilever(
        mesh: &StructuredMesh,
        n1: usize,
        n2: usize,
        material: Material,
        traction: f64,
    ) -> Result<Self, DecompError> {
        let decomp = Decomposition::build(mesh, n1, n2, mesh.left_clamp_mask())?;
        let loads = decomp
            .partition
            .subdomains
            .iter()
            .map(|sub| {
                (sub.s1 == n1 - 1).then(|| right_edge_traction_load(&sub.mesh, traction).f)
            })
            .collect();
        let quad = Quadrature::for_element_order(mesh.order);
        Ok(Self::assemble_masks(decomp, material, quad, loads))
    }

    /// Wires an already-built decomposition with explicit per-subdomain
    /// loads (local dof vectors).
    pub fn new(
        decomp: Decomposition,
        material: Material,
        quad: Quadrature,
        loads: Vec<Option<DVector<f64>>>,
    ) -> Self {
        assert_eq!(loads.len(), decomp.n_subdomains());
        Self::assemble_masks(decomp, material, quad, loads)
    }

    fn assemble_masks(
        decomp: Decomposition,
        material: Material,
        quad: Quadrature,
        loads: Vec<Option<DVector<f64>>>,
    ) -> Self {
        let fixed = decomp
            .partition
            .subdomains
            .iter()
            .map(|sub| {
                (0..sub.mesh.n_nodes())
                    .map(|local| decomp.fixed_nodes[sub.global_node(local)])
                    .collect()
            })
            .collect();
        Self { decomp, material, quad, loads, fixed }
    }

    pub fn decomp(&self) -> &Decomposition {
        &self.decomp
    }

    pub fn layout(&self) -> &Arc<TornLayout> {
        &self.decomp.layout
    }

    pub fn material(&self) -> &Material {
        &self.material
    }

    /// Expands the flat torn vector to subdomain-local dofs (fixed dofs 0).
    fn local_displacement(&self, i: usize, u: &DVector<f64>) -> DVector<f64> {
        let lay = &self.decomp.layout.subs[i];
        let mut local = DVector::zeros(lay.slots.len());
        for (dof, slot) in lay.slots.iter().enumerate() {
            match *slot {
                Slot::B(pos) => local[dof] = u[lay.offset + pos],
                Slot::Pi(pi) => local[dof] = u[self.decomp.layout.pi_offset + pi],
                Slot::Fixed => {}
            }
        }
        local
    }

    fn sub_iter(&self) -> impl IndexedParallelIterator<Item = usize> + '_ {
        (0..self.decomp.n_subdomains()).into_par_iter()
    }
}

impl SqpProblem for FetiProblem {
    type Hessian = FetiHessian;
    type Precond = DirichletPreconditioner;
    type Jump = JumpOperator;

    fn n_unknowns(&self) -> usize {
        self.decomp.n_total()
    }

    fn jump(&self) -> &JumpOperator {
        &self.decomp.jump
    }

    fn objective(&self, u: &DVector<f64>) -> f64 {
        let parts: Result<Vec<f64>, InadmissibleDeformation> = self
            .sub_iter()
            .map(|i| {
                assemble_energy(
                    &self.decomp.partition.subdomains[i].mesh,
                    self.loads[i].as_ref(),
                    &self.local_displacement(i, u),
                    &self.material,
                    &self.quad,
                )
            })
            .collect();
        match parts {
            // Fixed summation order keeps the value independent of thread
            // scheduling.
            Ok(parts) => parts.iter().sum(),
            Err(_) => f64::INFINITY,
        }
    }

    fn objective_gradient(&self, u: &DVector<f64>) -> Result<(f64, DVector<f64>), ProblemError> {
        let lay = Arc::clone(&self.decomp.layout);
        let parts: Result<Vec<_>, InadmissibleDeformation> = self
            .sub_iter()
            .map(|i| {
                assemble_gradient(
                    &self.decomp.partition.subdomains[i].mesh,
                    &self.fixed[i],
                    self.loads[i].as_ref(),
                    &self.local_displacement(i, u),
                    &self.material,
                    &self.quad,
                )
            })
            .collect();
        let parts = parts?;
        let mut energy = 0.0;
        let mut grad = DVector::zeros(lay.n_total());
        for (sub, (e, g)) in lay.subs.iter().zip(&parts) {
            energy += e;
            for (dof, slot) in sub.slots.iter().enumerate() {
                match *slot {
                    Slot::B(pos) => grad[sub.offset + pos] = g[dof],
                    // Primal dofs are shared: contributions subassemble.
                    Slot::Pi(pi) => grad[lay.pi_offset + pi] += g[dof],
                    Slot::Fixed => {}
                }
            }
        }
        Ok((energy, grad))
    }

    fn factor_hessian(&self, u: &DVector<f64>) -> Result<FetiHessian, ProblemError> {
        let lay = Arc::clone(&self.decomp.layout);
        let parts: Result<Vec<_>, InadmissibleDeformation> = self
            .sub_iter()
            .map(|i| {
                let sub = &self.decomp.partition.subdomains[i];
                let local = self.local_displacement(i, u);
                let m = assemble_subdomain(
                    &sub.mesh,
                    &self.fixed[i],
                    self.loads[i].as_ref(),
                    &local,
                    &self.material,
                    &self.quad,
                )?;
                let sl = &lay.subs[i];
                let nb = sl.n_b();
                let npil = sl.pi_dofs.len();
                // Local dof -> column in the subdomain's coupling block.
                let mut pi_col = vec![usize::MAX; sl.slots.len()];
                for (a, &(dof, _)) in sl.pi_dofs.iter().enumerate() {
                    pi_col[dof] = a;
                }
                let mut tbb = TriMat::new((nb, nb));
                let mut kbp = DMatrix::zeros(nb, npil);
                let mut kpp = Vec::new();
                for (&v, (r, c)) in m.hess.iter() {
                    match (&sl.slots[r], &sl.slots[c]) {
                        (Slot::B(rb), Slot::B(cb)) => tbb.add_triplet(*rb, *cb, v),
                        (Slot::B(rb), Slot::Pi(_)) => kbp[(*rb, pi_col[c])] += v,
                        // The transposed coupling entries are implied by
                        // symmetry; only the primal-primal part is kept.
                        (Slot::Pi(rp), Slot::Pi(cp)) => kpp.push((*rp, *cp, v)),
                        _ => {}
                    }
                }
                Ok((tbb.to_csc(), kbp, kpp))
            })
            .collect();
        let parts = parts?;
        let mut kbb = Vec::with_capacity(parts.len());
        let mut kbp = Vec::with_capacity(parts.len());
        let mut kpp = DMatrix::zeros(lay.n_pi, lay.n_pi);
        for (bb, bp, pp) in parts {
            kbb.push(bb);
            kbp.push(bp);
            for (r, c, v) in pp {
                kpp[(r, c)] += v;
            }
        }
        let blocks = HessianBlocks { layout: lay, kbb, kbp, kpp };
        let factorization = factor_block_hessian(&blocks)?;
        Ok(FetiHessian { blocks, factorization })
    }

    fn preconditioner(&self, hessian: &FetiHessian) -> Result<DirichletPreconditioner, ProblemError> {
        Ok(build_dirichlet_preconditioner(&hessian.blocks, &self.decomp.scaled_jump)?)
    }
}

/// Dense linear constraint rows; the quadratic test problems' jump.
#[derive(Debug, Clone)]
pub struct DenseConstraint {
    pub rows: DMatrix<f64>,
}

impl crate::kkt::Constraint for DenseConstraint {
    fn n_multipliers(&self) -> usize {
        self.rows.nrows()
    }

    fn n_unknowns(&self) -> usize {
        self.rows.ncols()
    }

    fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.rows * u
    }

    fn apply_transpose(&self, lambda: &DVector<f64>) -> DVector<f64> {
        self.rows.tr_mul(lambda)
    }
}

/// Dense s.p.d. Hessian with its Cholesky factor.
pub struct DenseHessian {
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl InverseOperator for DenseHessian {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply_inverse(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }
}

impl FactoredHessian for DenseHessian {
    fn matvec(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.matrix * v
    }
}

/// `min 1/2 u'Au - b'u  s.t.  Cu = 0` with s.p.d. `A`: one exact SQP step
/// from any start lands on the KKT point, which pins driver behavior.
pub struct QuadraticProblem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub constraint: DenseConstraint,
}

impl QuadraticProblem {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, c: DMatrix<f64>) -> Self {
        assert_eq!(a.nrows(), a.ncols());
        assert_eq!(a.nrows(), b.len());
        assert_eq!(c.ncols(), a.ncols());
        Self { a, b, constraint: DenseConstraint { rows: c } }
    }
}

impl SqpProblem for QuadraticProblem {
    type Hessian = DenseHessian;
    type Precond = IdentityPreconditioner;
    type Jump = DenseConstraint;

    fn n_unknowns(&self) -> usize {
        self.b.len()
    }

    fn jump(&self) -> &DenseConstraint {
        &self.constraint
    }

    fn objective(&self, u: &DVector<f64>) -> f64 {
        0.5 * u.dot(&(&self.a * u)) - self.b.dot(u)
    }

    fn objective_gradient(&self, u: &DVector<f64>) -> Result<(f64, DVector<f64>), ProblemError> {
        Ok((self.objective(u), &self.a * u - &self.b))
    }

    fn factor_hessian(&self, _u: &DVector<f64>) -> Result<DenseHessian, ProblemError> {
        let chol = Cholesky::new(self.a.clone()).ok_or(FactorError::CoarseSingular)?;
        Ok(DenseHessian { matrix: self.a.clone(), chol })
    }

    fn preconditioner(&self, _h: &DenseHessian) -> Result<IdentityPreconditioner, ProblemError> {
        Ok(IdentityPreconditioner)
    }
}
