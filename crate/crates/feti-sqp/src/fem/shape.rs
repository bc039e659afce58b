//! Tensor-product Lagrange shape functions on the reference square.
//!
//! Local node `s = sx * (order + 1) + sy` pairs the 1D node `sx` along xi
//! with `sy` along eta; meshes use the same ordering for element
//! connectivity, so shape index and local node index always agree.

/// Largest node count per element (biquadratic).
pub const MAX_NODES: usize = 9;

/// Value and derivative of the 1D Lagrange basis function `i` of the given
/// order at `x`, with nodes at -1, 1 (order 1) or -1, 0, 1 (order 2).
fn lagrange_1d(order: usize, i: usize, x: f64) -> (f64, f64) {
    match (order, i) {
        (1, 0) => (0.5 * (1.0 - x), -0.5),
        (1, 1) => (0.5 * (1.0 + x), 0.5),
        (2, 0) => (0.5 * x * (x - 1.0), x - 0.5),
        (2, 1) => (1.0 - x * x, -2.0 * x),
        (2, 2) => (0.5 * x * (x + 1.0), x + 0.5),
        _ => panic!("no Lagrange basis for order {order}, index {i}"),
    }
}

/// Shape values and reference-space gradients at one evaluation point.
#[derive(Debug, Clone, Copy)]
pub struct ShapeEval {
    pub n_nodes: usize,
    pub value: [f64; MAX_NODES],
    pub d_xi: [f64; MAX_NODES],
    pub d_eta: [f64; MAX_NODES],
}

/// Evaluates all `(order + 1)^2` shape functions at `(xi, eta)`.
pub fn eval(order: usize, xi: f64, eta: f64) -> ShapeEval {
    assert!(order == 1 || order == 2, "element order must be 1 or 2");
    let n1 = order + 1;
    let mut out = ShapeEval {
        n_nodes: n1 * n1,
        value: [0.0; MAX_NODES],
        d_xi: [0.0; MAX_NODES],
        d_eta: [0.0; MAX_NODES],
    };
    for sx in 0..n1 {
        let (lx, dlx) = lagrange_1d(order, sx, xi);
        for sy in 0..n1 {
            let (ly, dly) = lagrange_1d(order, sy, eta);
            let s = sx * n1 + sy;
            out.value[s] = lx * ly;
            out.d_xi[s] = dlx * ly;
            out.d_eta[s] = lx * dly;
        }
    }
    out
}

/// 1D nodes of the reference element, -1..1.
pub fn reference_nodes_1d(order: usize) -> &'static [f64] {
    match order {
        1 => &[-1.0, 1.0],
        2 => &[-1.0, 0.0, 1.0],
        _ => panic!("element order must be 1 or 2"),
    }
}

/// Value and derivative of one 1D basis function, for edge integration.
pub fn lagrange_edge(order: usize, i: usize, x: f64) -> (f64, f64) {
    lagrange_1d(order, i, x)
}
