//! Structured quadrilateral meshes on axis-aligned rectangles.
//!
//! Nodes are numbered x-major (`node = ix * n_nodes_y + iy`), which keeps
//! the stiffness bandwidth proportional to the short edge. Elements use the
//! same tensor ordering as the shape functions in [`super::shape`].

use nalgebra::DVector;
use thiserror::Error;

use super::quadrature::gauss_legendre_1d;
use super::shape::{lagrange_edge, MAX_NODES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("element order must be 1 or 2, got {0}")]
    BadOrder(usize),
    #[error("mesh must have at least one element per direction, got {nx} x {ny}")]
    NoElements { nx: usize, ny: usize },
    #[error("mesh extents must be positive and finite, got {lx} x {ly}")]
    BadExtent { lx: f64, ly: f64 },
}

/// Element node ids in tensor order; `n` of the slots are valid.
#[derive(Debug, Clone, Copy)]
pub struct ElementNodes {
    pub ids: [usize; MAX_NODES],
    pub n: usize,
}

/// Uniform quadrilateral mesh of `nx * ny` tensor Lagrange elements of
/// order 1 (Q1) or 2 (Q2) on `[x0, x0+lx] x [y0, y0+ly]`.
#[derive(Debug, Clone)]
pub struct StructuredMesh {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub order: usize,
    pub origin: [f64; 2],
    pub n_nodes_x: usize,
    pub n_nodes_y: usize,
}

impl StructuredMesh {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64, order: usize) -> Result<Self, MeshError> {
        Self::with_origin(nx, ny, lx, ly, order, [0.0, 0.0])
    }

    pub fn with_origin(
        nx: usize,
        ny: usize,
        lx: f64,
        ly: f64,
        order: usize,
        origin: [f64; 2],
    ) -> Result<Self, MeshError> {
        if order != 1 && order != 2 {
            return Err(MeshError::BadOrder(order));
        }
        if nx == 0 || ny == 0 {
            return Err(MeshError::NoElements { nx, ny });
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(MeshError::BadExtent { lx, ly });
        }
        Ok(Self {
            nx,
            ny,
            lx,
            ly,
            order,
            origin,
            n_nodes_x: order * nx + 1,
            n_nodes_y: order * ny + 1,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes_x * self.n_nodes_y
    }

    pub fn n_dofs(&self) -> usize {
        2 * self.n_nodes()
    }

    pub fn n_elements(&self) -> usize {
        self.nx * self.ny
    }

    pub fn node_index(&self, ix: usize, iy: usize) -> usize {
        debug_assert!(ix < self.n_nodes_x && iy < self.n_nodes_y);
        ix * self.n_nodes_y + iy
    }

    pub fn node_grid_position(&self, node: usize) -> (usize, usize) {
        (node / self.n_nodes_y, node % self.n_nodes_y)
    }

    pub fn node_coords(&self, node: usize) -> [f64; 2] {
        let (ix, iy) = self.node_grid_position(node);
        let hx = self.lx / (self.n_nodes_x - 1) as f64;
        let hy = self.ly / (self.n_nodes_y - 1) as f64;
        [self.origin[0] + ix as f64 * hx, self.origin[1] + iy as f64 * hy]
    }

    /// Node ids of element `(ex, ey)` in tensor order.
    pub fn element_nodes(&self, ex: usize, ey: usize) -> ElementNodes {
        debug_assert!(ex < self.nx && ey < self.ny);
        let p = self.order;
        let n1 = p + 1;
        let mut out = ElementNodes {
            ids: [0; MAX_NODES],
            n: n1 * n1,
        };
        for sx in 0..n1 {
            for sy in 0..n1 {
                out.ids[sx * n1 + sy] = self.node_index(p * ex + sx, p * ey + sy);
            }
        }
        out
    }

    /// All nodes on the clamped edge `x = x0`.
    pub fn left_edge_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes_y).map(|iy| self.node_index(0, iy)).collect()
    }

    /// Per-node mask of the homogeneous Dirichlet boundary (left edge).
    pub fn left_clamp_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n_nodes()];
        for n in self.left_edge_nodes() {
            mask[n] = true;
        }
        mask
    }
}

/// External load description for the benchmark family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LoadCase {
    /// Constant vertical traction `t` per unit reference length on the edge
    /// `x = x0 + lx`.
    RightEdgeTraction { t: f64 },
}

/// Consistent nodal forces over all mesh dofs.
#[derive(Debug, Clone)]
pub struct ExternalLoad {
    pub f: DVector<f64>,
    pub case: LoadCase,
}

/// Assembles consistent nodal forces for a constant vertical traction on the
/// right edge by 1D Gauss quadrature of the edge shape functions.
pub fn right_edge_traction_load(mesh: &StructuredMesh, t: f64) -> ExternalLoad {
    let p = mesh.order;
    let mut f = DVector::zeros(mesh.n_dofs());
    let h_elem = mesh.ly / mesh.ny as f64;
    let jac = 0.5 * h_elem;
    let rule = gauss_legendre_1d(p + 1);
    let ix = mesh.n_nodes_x - 1;
    for ey in 0..mesh.ny {
        for &(x, w) in &rule {
            for sy in 0..=p {
                let (val, _) = lagrange_edge(p, sy, x);
                let node = mesh.node_index(ix, p * ey + sy);
                f[2 * node + 1] += t * val * w * jac;
            }
        }
    }
    ExternalLoad {
        f,
        case: LoadCase::RightEdgeTraction { t },
    }
}
