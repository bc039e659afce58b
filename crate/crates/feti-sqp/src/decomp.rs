//! Tearing of a structured mesh into a grid of subdomains.
//!
//! The global mesh is split into `n1 x n2` subdomain meshes. Every node is
//! classified once:
//!
//! * `Fixed`: Dirichlet nodes, eliminated everywhere,
//! * `Interior`: nodes touching a single subdomain,
//! * `Primal`: subdomain corner vertices shared by at least two subdomains;
//!   their dofs are assembled into one global coarse vector,
//! * `Dual`: remaining interface nodes, duplicated per touching subdomain
//!   and glued by Lagrange multiplier constraints.
//!
//! The torn vector layout is `[u_B^(1), ..., u_B^(N), u_Pi]` where each
//! `u_B^(i)` holds the subdomain's interior dofs first, then its dual dofs.
//! The jump operator `B` has one row per duplicated dual dof with entries
//! `+1` on the lower-indexed subdomain's copy and `-1` on the other; the
//! scaled variant used by the preconditioner carries `+-1/2` (the inverse
//! dual multiplicity, which is always 2 in this 2D vertex-primal setting).

use std::sync::Arc;

use nalgebra::DVector;
use thiserror::Error;

use crate::fem::mesh::{MeshError, StructuredMesh};
use crate::kkt::Constraint;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecompError {
    #[error("subdomain grid {n1} x {n2} does not divide the {nx} x {ny} element mesh")]
    BadPartition { n1: usize, n2: usize, nx: usize, ny: usize },
    #[error("node {node} is shared by {multiplicity} subdomains but is not a subdomain corner")]
    UnexpectedMultiplicity { node: usize, multiplicity: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// One subdomain of the partition: a structured mesh of its own plus its
/// placement in the global node grid.
#[derive(Debug, Clone)]
pub struct Subdomain {
    pub index: usize,
    pub s1: usize,
    pub s2: usize,
    pub mesh: StructuredMesh,
    /// Global grid position of local node (0, 0).
    pub node_offset: (usize, usize),
    /// Rows of the global node grid, for local -> global node conversion.
    global_nny: usize,
}

impl Subdomain {
    pub fn global_node(&self, local: usize) -> usize {
        let (lx, ly) = self.mesh.node_grid_position(local);
        (self.node_offset.0 + lx) * self.global_nny + self.node_offset.1 + ly
    }

    pub fn local_node(&self, global: usize) -> usize {
        let ix = global / self.global_nny - self.node_offset.0;
        let iy = global % self.global_nny - self.node_offset.1;
        self.mesh.node_index(ix, iy)
    }
}

/// Element-disjoint split of the mesh into `n1 x n2` subdomains, with the
/// per-node count of touching subdomains.
#[derive(Debug, Clone)]
pub struct Partition {
    pub n1: usize,
    pub n2: usize,
    pub subdomains: Vec<Subdomain>,
    /// Subdomain indices touching each global node, ascending.
    pub owners: Vec<Vec<usize>>,
}

impl Partition {
    pub fn n_subdomains(&self) -> usize {
        self.subdomains.len()
    }

    pub fn multiplicity(&self, node: usize) -> usize {
        self.owners[node].len()
    }
}

/// Splits the mesh; every element belongs to exactly one subdomain.
pub fn partition(mesh: &StructuredMesh, n1: usize, n2: usize) -> Result<Partition, DecompError> {
    if n1 == 0 || n2 == 0 || mesh.nx % n1 != 0 || mesh.ny % n2 != 0 {
        return Err(DecompError::BadPartition { n1, n2, nx: mesh.nx, ny: mesh.ny });
    }
    let sx = mesh.nx / n1;
    let sy = mesh.ny / n2;
    let p = mesh.order;
    let mut subdomains = Vec::with_capacity(n1 * n2);
    for s1 in 0..n1 {
        for s2 in 0..n2 {
            let origin = [
                mesh.origin[0] + s1 as f64 * (mesh.lx / n1 as f64),
                mesh.origin[1] + s2 as f64 * (mesh.ly / n2 as f64),
            ];
            let local = StructuredMesh::with_origin(
                sx,
                sy,
                mesh.lx / n1 as f64,
                mesh.ly / n2 as f64,
                p,
                origin,
            )?;
            subdomains.push(Subdomain {
                index: s1 * n2 + s2,
                s1,
                s2,
                mesh: local,
                node_offset: (s1 * p * sx, s2 * p * sy),
                global_nny: mesh.n_nodes_y,
            });
        }
    }
    let mut owners = vec![Vec::new(); mesh.n_nodes()];
    for sub in &subdomains {
        for local in 0..sub.mesh.n_nodes() {
            owners[sub.global_node(local)].push(sub.index);
        }
    }
    Ok(Partition { n1, n2, subdomains, owners })
}

/// Classification of one global node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    Fixed,
    Interior { owner: usize },
    Dual { lower: usize, upper: usize },
    Primal { index: usize },
}

#[derive(Debug, Clone)]
pub struct Classification {
    pub classes: Vec<NodeClass>,
    /// Global node ids of primal vertices, ascending; position = primal index.
    pub primal_nodes: Vec<usize>,
}

impl Classification {
    pub fn n_primal_dofs(&self) -> usize {
        2 * self.primal_nodes.len()
    }
}

/// Classifies every node of the partitioned mesh. Corner vertices of the
/// subdomain grid that are shared become primal; shared non-corner nodes
/// become dual; Dirichlet nodes are excluded from all solver sets.
pub fn classify_nodes(
    mesh: &StructuredMesh,
    part: &Partition,
    fixed_nodes: &[bool],
) -> Result<Classification, DecompError> {
    debug_assert_eq!(fixed_nodes.len(), mesh.n_nodes());
    let p = mesh.order;
    let span_x = p * (mesh.nx / part.n1);
    let span_y = p * (mesh.ny / part.n2);
    let mut classes = Vec::with_capacity(mesh.n_nodes());
    let mut primal_nodes = Vec::new();
    for node in 0..mesh.n_nodes() {
        if fixed_nodes[node] {
            classes.push(NodeClass::Fixed);
            continue;
        }
        let owners = &part.owners[node];
        let (ix, iy) = mesh.node_grid_position(node);
        let corner = ix % span_x == 0 && iy % span_y == 0;
        let class = match owners.len() {
            1 => NodeClass::Interior { owner: owners[0] },
            m if m >= 2 && corner => {
                primal_nodes.push(node);
                NodeClass::Primal { index: primal_nodes.len() - 1 }
            }
            2 => NodeClass::Dual { lower: owners[0], upper: owners[1] },
            m => {
                return Err(DecompError::UnexpectedMultiplicity { node, multiplicity: m });
            }
        };
        classes.push(class);
    }
    Ok(Classification { classes, primal_nodes })
}

/// Where one local dof lives in the torn vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    /// Position within the subdomain's `u_B` block.
    B(usize),
    /// Global primal dof index (within `u_Pi`).
    Pi(usize),
    Fixed,
}

/// Torn layout of one subdomain.
#[derive(Debug, Clone)]
pub struct SubLayout {
    /// Start of this subdomain's `u_B` block in the flat torn vector.
    pub offset: usize,
    pub n_interior: usize,
    pub n_dual: usize,
    /// Slot of every local dof (length = local dof count).
    pub slots: Vec<Slot>,
    /// Inverse of the `B` slots: b-position -> local dof.
    pub b_dofs: Vec<usize>,
    /// Primal assembly map R_Pi: pairs (local dof, global primal dof),
    /// ascending in local dof.
    pub pi_dofs: Vec<(usize, usize)>,
}

impl SubLayout {
    pub fn n_b(&self) -> usize {
        self.n_interior + self.n_dual
    }
}

/// Flat layout `[u_B^(1), ..., u_B^(N), u_Pi]`, fixed at decomposition time.
#[derive(Debug, Clone)]
pub struct TornLayout {
    pub subs: Vec<SubLayout>,
    /// Offset of the primal block (= sum of all `u_B` lengths).
    pub pi_offset: usize,
    pub n_pi: usize,
    pub n_lambda: usize,
}

impl TornLayout {
    pub fn n_total(&self) -> usize {
        self.pi_offset + self.n_pi
    }
}

/// Signed jump rows over flat torn indices; `weight` is +-1 for the
/// constraint operator B and +-1/2 for the preconditioner's scaled variant.
#[derive(Debug, Clone)]
pub struct JumpOperator {
    pub n_unknowns: usize,
    pub weight: f64,
    /// (plus, minus) flat index pairs, one row per duplicated dual dof.
    pub rows: Vec<(usize, usize)>,
}

impl Constraint for JumpOperator {
    fn n_multipliers(&self) -> usize {
        self.rows.len()
    }

    fn n_unknowns(&self) -> usize {
        self.n_unknowns
    }

    fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(u.len(), self.n_unknowns);
        let mut out = DVector::zeros(self.rows.len());
        for (r, &(plus, minus)) in self.rows.iter().enumerate() {
            out[r] = self.weight * (u[plus] - u[minus]);
        }
        out
    }

    fn apply_transpose(&self, lambda: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(lambda.len(), self.rows.len());
        let mut out = DVector::zeros(self.n_unknowns);
        for (r, &(plus, minus)) in self.rows.iter().enumerate() {
            out[plus] += self.weight * lambda[r];
            out[minus] -= self.weight * lambda[r];
        }
        out
    }
}

/// Complete decomposition: partition, node classification, torn layout, and
/// the jump operators. Immutable after construction and shared read-only by
/// all solver workers.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub partition: Partition,
    pub classes: Classification,
    pub layout: Arc<TornLayout>,
    pub jump: JumpOperator,
    pub scaled_jump: JumpOperator,
    pub fixed_nodes: Vec<bool>,
    n_global_dofs: usize,
}

impl Decomposition {
    pub fn build(
        mesh: &StructuredMesh,
        n1: usize,
        n2: usize,
        fixed_nodes: Vec<bool>,
    ) -> Result<Self, DecompError> {
        let part = partition(mesh, n1, n2)?;
        let classes = classify_nodes(mesh, &part, &fixed_nodes)?;

        let mut subs = Vec::with_capacity(part.n_subdomains());
        let mut offset = 0;
        for sub in &part.subdomains {
            let n_local = sub.mesh.n_dofs();
            let mut interior = Vec::new();
            let mut dual = Vec::new();
            let mut pi_dofs = Vec::new();
            for local in 0..n_local {
                let gnode = sub.global_node(local / 2);
                match classes.classes[gnode] {
                    NodeClass::Fixed => {}
                    NodeClass::Interior { .. } => interior.push(local),
                    NodeClass::Dual { .. } => dual.push(local),
                    NodeClass::Primal { index } => pi_dofs.push((local, 2 * index + local % 2)),
                }
            }
            let mut slots = vec![Slot::Fixed; n_local];
            let mut b_dofs = Vec::with_capacity(interior.len() + dual.len());
            for (pos, &local) in interior.iter().chain(dual.iter()).enumerate() {
                slots[local] = Slot::B(pos);
                b_dofs.push(local);
            }
            for &(local, pi) in &pi_dofs {
                slots[local] = Slot::Pi(pi);
            }
            subs.push(SubLayout {
                offset,
                n_interior: interior.len(),
                n_dual: dual.len(),
                slots,
                b_dofs,
                pi_dofs,
            });
            offset += interior.len() + dual.len();
        }

        // One constraint row per component of each duplicated dual node;
        // iteration in ascending global node order makes multiplier
        // numbering deterministic.
        let mut rows = Vec::new();
        for (node, class) in classes.classes.iter().enumerate() {
            if let NodeClass::Dual { lower, upper } = *class {
                for c in 0..2 {
                    let mut flat = [0; 2];
                    for (k, owner) in [lower, upper].into_iter().enumerate() {
                        let local = 2 * part.subdomains[owner].local_node(node) + c;
                        match subs[owner].slots[local] {
                            Slot::B(pos) => flat[k] = subs[owner].offset + pos,
                            _ => unreachable!("dual dof must occupy a B slot"),
                        }
                    }
                    rows.push((flat[0], flat[1]));
                }
            }
        }

        let layout = Arc::new(TornLayout {
            subs,
            pi_offset: offset,
            n_pi: classes.n_primal_dofs(),
            n_lambda: rows.len(),
        });
        let n_total = layout.n_total();
        let jump = JumpOperator { n_unknowns: n_total, weight: 1.0, rows: rows.clone() };
        let scaled_jump = JumpOperator { n_unknowns: n_total, weight: 0.5, rows };
        Ok(Self {
            partition: part,
            classes,
            layout,
            jump,
            scaled_jump,
            fixed_nodes,
            n_global_dofs: mesh.n_dofs(),
        })
    }

    pub fn n_subdomains(&self) -> usize {
        self.partition.n_subdomains()
    }

    pub fn n_total(&self) -> usize {
        self.layout.n_total()
    }

    pub fn n_lambda(&self) -> usize {
        self.layout.n_lambda
    }

    pub fn n_global_dofs(&self) -> usize {
        self.n_global_dofs
    }

    /// Duplicates a global vector into the torn layout. Values on fixed
    /// dofs are dropped; the result of scattering any global vector is
    /// continuous, i.e. annihilated by the jump operator.
    pub fn scatter(&self, global: &DVector<f64>) -> TornVector {
        debug_assert_eq!(global.len(), self.n_global_dofs);
        let mut flat = DVector::zeros(self.n_total());
        for (sub, lay) in self.partition.subdomains.iter().zip(&self.layout.subs) {
            for (local, slot) in lay.slots.iter().enumerate() {
                let g = 2 * sub.global_node(local / 2) + local % 2;
                match *slot {
                    Slot::B(pos) => flat[lay.offset + pos] = global[g],
                    Slot::Pi(pi) => flat[self.layout.pi_offset + pi] = global[g],
                    Slot::Fixed => {}
                }
            }
        }
        TornVector { flat, layout: Arc::clone(&self.layout) }
    }

    /// Maps a torn vector back to global dofs, averaging the duplicated
    /// copies of each dual dof; fixed dofs are zero.
    pub fn gather(&self, torn: &TornVector) -> DVector<f64> {
        debug_assert_eq!(torn.flat.len(), self.n_total());
        let mut acc = DVector::zeros(self.n_global_dofs);
        let mut count = vec![0u32; self.n_global_dofs];
        for (sub, lay) in self.partition.subdomains.iter().zip(&self.layout.subs) {
            for (local, slot) in lay.slots.iter().enumerate() {
                let g = 2 * sub.global_node(local / 2) + local % 2;
                match *slot {
                    Slot::B(pos) => {
                        acc[g] += torn.flat[lay.offset + pos];
                        count[g] += 1;
                    }
                    Slot::Pi(pi) => {
                        acc[g] = torn.flat[self.layout.pi_offset + pi];
                        count[g] = 1;
                    }
                    Slot::Fixed => {}
                }
            }
        }
        for (g, &c) in count.iter().enumerate() {
            if c > 1 {
                acc[g] /= c as f64;
            }
        }
        acc
    }
}

/// Flat torn vector with its layout; block views for per-subdomain access.
#[derive(Debug, Clone)]
pub struct TornVector {
    flat: DVector<f64>,
    layout: Arc<TornLayout>,
}

impl TornVector {
    pub fn zeros(layout: &Arc<TornLayout>) -> Self {
        Self { flat: DVector::zeros(layout.n_total()), layout: Arc::clone(layout) }
    }

    pub fn from_flat(layout: &Arc<TornLayout>, flat: DVector<f64>) -> Self {
        assert_eq!(flat.len(), layout.n_total(), "flat vector does not match layout");
        Self { flat, layout: Arc::clone(layout) }
    }

    pub fn flat(&self) -> &DVector<f64> {
        &self.flat
    }

    pub fn into_flat(self) -> DVector<f64> {
        self.flat
    }

    pub fn layout(&self) -> &Arc<TornLayout> {
        &self.layout
    }

    /// View of subdomain i's `u_B` block.
    pub fn sub_b(&self, i: usize) -> nalgebra::DVectorView<'_, f64> {
        let lay = &self.layout.subs[i];
        self.flat.rows(lay.offset, lay.n_b())
    }

    /// View of the global primal block.
    pub fn primal(&self) -> nalgebra::DVectorView<'_, f64> {
        self.flat.rows(self.layout.pi_offset, self.layout.n_pi)
    }
}
