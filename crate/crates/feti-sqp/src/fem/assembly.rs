//! Element and mesh assembly of the hyperelastic objective.
//!
//! The objective contribution of a mesh (whole domain or one subdomain) is
//! `J(u) = int psi(I + grad u) dX - f . u`. Gradient and Hessian follow from
//! the first Piola-Kirchhoff stress and the material tangent of the
//! Neo-Hooke density; for `A = d P / d F` the element stiffness entries are
//!
//! ```text
//! K[(a,i),(b,k)] = sum_qp w |J| ( mu d_ik (g_a . g_b)
//!                                + lambda (C g_a)_i (C g_b)_k
//!                                - (lambda ln J - mu) (C g_b)_i (C g_a)_k )
//! ```
//!
//! with `g_a` the physical shape gradient and `C = F^{-T}`.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use sprs::{CsMat, TriMat};

use super::energy::{DeformationState, InadmissibleDeformation};
use super::material::Material;
use super::mesh::StructuredMesh;
use super::quadrature::Quadrature;
use super::shape::{self, ShapeEval, MAX_NODES};

/// Energy, gradient, and Hessian of one element; dofs are interleaved
/// `(node, component)` pairs, `2 * n_nodes` in total.
#[derive(Debug, Clone)]
pub struct ElementMatrices {
    pub energy: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

/// Physical shape gradients and the Jacobian determinant of the reference
/// to physical map at one quadrature point.
fn physical_gradients(
    sh: &ShapeEval,
    coords: &[[f64; 2]],
) -> ([Vector2<f64>; MAX_NODES], f64) {
    let mut jac: Matrix2<f64> = Matrix2::zeros();
    for a in 0..sh.n_nodes {
        jac[(0, 0)] += coords[a][0] * sh.d_xi[a];
        jac[(0, 1)] += coords[a][0] * sh.d_eta[a];
        jac[(1, 0)] += coords[a][1] * sh.d_xi[a];
        jac[(1, 1)] += coords[a][1] * sh.d_eta[a];
    }
    let det = jac.determinant();
    assert!(det > 0.0, "degenerate element geometry, det J = {det}");
    let inv_det = 1.0 / det;
    // J^{-T} applied to the reference gradient of each shape function.
    let mut grads = [Vector2::zeros(); MAX_NODES];
    for a in 0..sh.n_nodes {
        grads[a] = Vector2::new(
            (jac[(1, 1)] * sh.d_xi[a] - jac[(1, 0)] * sh.d_eta[a]) * inv_det,
            (-jac[(0, 1)] * sh.d_xi[a] + jac[(0, 0)] * sh.d_eta[a]) * inv_det,
        );
    }
    (grads, det)
}

fn displacement_gradient(sh: &ShapeEval, grads: &[Vector2<f64>], u: &[f64]) -> Matrix2<f64> {
    let mut gu = Matrix2::zeros();
    for a in 0..sh.n_nodes {
        let ua = Vector2::new(u[2 * a], u[2 * a + 1]);
        gu[(0, 0)] += ua.x * grads[a].x;
        gu[(0, 1)] += ua.x * grads[a].y;
        gu[(1, 0)] += ua.y * grads[a].x;
        gu[(1, 1)] += ua.y * grads[a].y;
    }
    gu
}

/// Strain energy of one element for a nodal displacement `u` (length
/// `2 * coords.len()`).
pub fn element_energy(
    order: usize,
    coords: &[[f64; 2]],
    u: &[f64],
    mat: &Material,
    quad: &Quadrature,
) -> Result<f64, InadmissibleDeformation> {
    debug_assert_eq!(u.len(), 2 * coords.len());
    let mut energy = 0.0;
    for qp in &quad.points {
        let sh = shape::eval(order, qp.xi, qp.eta);
        let (grads, detj) = physical_gradients(&sh, coords);
        let state = DeformationState::from_displacement_gradient(&displacement_gradient(
            &sh, &grads, u,
        ))?;
        energy += qp.weight * detj * state.energy(mat);
    }
    Ok(energy)
}

/// Strain energy, gradient, and tangent stiffness of one element.
pub fn element_energy_grad_hess(
    order: usize,
    coords: &[[f64; 2]],
    u: &[f64],
    mat: &Material,
    quad: &Quadrature,
) -> Result<ElementMatrices, InadmissibleDeformation> {
    debug_assert_eq!(u.len(), 2 * coords.len());
    let n_dofs = u.len();
    let mut energy = 0.0;
    let mut grad = DVector::zeros(n_dofs);
    let mut hess = DMatrix::zeros(n_dofs, n_dofs);
    for qp in &quad.points {
        let sh = shape::eval(order, qp.xi, qp.eta);
        let (grads, detj) = physical_gradients(&sh, coords);
        let state = DeformationState::from_displacement_gradient(&displacement_gradient(
            &sh, &grads, u,
        ))?;
        let wdet = qp.weight * detj;
        energy += wdet * state.energy(mat);

        let piola = state.piola(mat);
        let c = state.inverse_transpose();
        let coef = mat.lambda * state.det().ln() - mat.mu;
        let mut cg = [Vector2::zeros(); MAX_NODES];
        for a in 0..sh.n_nodes {
            let pg = piola * grads[a];
            grad[2 * a] += wdet * pg.x;
            grad[2 * a + 1] += wdet * pg.y;
            cg[a] = c * grads[a];
        }
        for a in 0..sh.n_nodes {
            for b in 0..sh.n_nodes {
                let gg = mat.mu * grads[a].dot(&grads[b]);
                for i in 0..2 {
                    for k in 0..2 {
                        // Grouped so the (b, k, a, i) entry is bitwise equal;
                        // sparse symmetry must hold structurally, not just
                        // up to rounding.
                        let mut v = mat.lambda * (cg[a][i] * cg[b][k])
                            - coef * (cg[b][i] * cg[a][k]);
                        if i == k {
                            v += gg;
                        }
                        hess[(2 * a + i, 2 * b + k)] += wdet * v;
                    }
                }
            }
        }
    }
    Ok(ElementMatrices { energy, grad, hess })
}

/// Assembled objective contribution of one mesh: `J`, its gradient, and its
/// Hessian over the full local dof set, with fixed dofs eliminated (zero
/// gradient entries, identity Hessian rows and columns).
#[derive(Debug, Clone)]
pub struct SubdomainMatrices {
    pub energy: f64,
    pub grad: DVector<f64>,
    pub hess: CsMat<f64>,
}

fn element_coords_and_u(
    mesh: &StructuredMesh,
    nodes: &super::mesh::ElementNodes,
    u: &DVector<f64>,
    coords: &mut [[f64; 2]; MAX_NODES],
    u_elem: &mut [f64; 2 * MAX_NODES],
) {
    for (s, &n) in nodes.ids[..nodes.n].iter().enumerate() {
        coords[s] = mesh.node_coords(n);
        u_elem[2 * s] = u[2 * n];
        u_elem[2 * s + 1] = u[2 * n + 1];
    }
}

/// Objective value `int psi - f . u` for one mesh; the cheap path for line
/// searches.
pub fn assemble_energy(
    mesh: &StructuredMesh,
    load: Option<&DVector<f64>>,
    u: &DVector<f64>,
    mat: &Material,
    quad: &Quadrature,
) -> Result<f64, InadmissibleDeformation> {
    debug_assert_eq!(u.len(), mesh.n_dofs());
    let mut coords = [[0.0; 2]; MAX_NODES];
    let mut u_elem = [0.0; 2 * MAX_NODES];
    let mut energy = 0.0;
    for ex in 0..mesh.nx {
        for ey in 0..mesh.ny {
            let nodes = mesh.element_nodes(ex, ey);
            element_coords_and_u(mesh, &nodes, u, &mut coords, &mut u_elem);
            energy += element_energy(
                mesh.order,
                &coords[..nodes.n],
                &u_elem[..2 * nodes.n],
                mat,
                quad,
            )?;
        }
    }
    if let Some(f) = load {
        energy -= f.dot(u);
    }
    Ok(energy)
}

/// Objective value and gradient for one mesh; gradient entries on fixed
/// nodes are zeroed.
pub fn assemble_gradient(
    mesh: &StructuredMesh,
    fixed_nodes: &[bool],
    load: Option<&DVector<f64>>,
    u: &DVector<f64>,
    mat: &Material,
    quad: &Quadrature,
) -> Result<(f64, DVector<f64>), InadmissibleDeformation> {
    debug_assert_eq!(u.len(), mesh.n_dofs());
    debug_assert_eq!(fixed_nodes.len(), mesh.n_nodes());
    let mut coords = [[0.0; 2]; MAX_NODES];
    let mut u_elem = [0.0; 2 * MAX_NODES];
    let mut energy = 0.0;
    let mut grad = DVector::zeros(mesh.n_dofs());
    for ex in 0..mesh.nx {
        for ey in 0..mesh.ny {
            let nodes = mesh.element_nodes(ex, ey);
            element_coords_and_u(mesh, &nodes, u, &mut coords, &mut u_elem);
            let el = element_energy_grad_hess(
                mesh.order,
                &coords[..nodes.n],
                &u_elem[..2 * nodes.n],
                mat,
                quad,
            )?;
            energy += el.energy;
            for (s, &n) in nodes.ids[..nodes.n].iter().enumerate() {
                grad[2 * n] += el.grad[2 * s];
                grad[2 * n + 1] += el.grad[2 * s + 1];
            }
        }
    }
    if let Some(f) = load {
        energy -= f.dot(u);
        grad -= f;
    }
    for (n, &fixed) in fixed_nodes.iter().enumerate() {
        if fixed {
            grad[2 * n] = 0.0;
            grad[2 * n + 1] = 0.0;
        }
    }
    Ok((energy, grad))
}

/// Full assembly of one mesh. This is the expensive path; solvers call it
/// only when a fresh Hessian factorization is needed.
pub fn assemble_subdomain(
    mesh: &StructuredMesh,
    fixed_nodes: &[bool],
    load: Option<&DVector<f64>>,
    u: &DVector<f64>,
    mat: &Material,
    quad: &Quadrature,
) -> Result<SubdomainMatrices, InadmissibleDeformation> {
    debug_assert_eq!(u.len(), mesh.n_dofs());
    debug_assert_eq!(fixed_nodes.len(), mesh.n_nodes());
    let n = mesh.n_dofs();
    let fixed_dof = |d: usize| fixed_nodes[d / 2];
    let mut coords = [[0.0; 2]; MAX_NODES];
    let mut u_elem = [0.0; 2 * MAX_NODES];
    let mut energy = 0.0;
    let mut grad = DVector::zeros(n);
    let mut tri = TriMat::new((n, n));
    for ex in 0..mesh.nx {
        for ey in 0..mesh.ny {
            let nodes = mesh.element_nodes(ex, ey);
            element_coords_and_u(mesh, &nodes, u, &mut coords, &mut u_elem);
            let el = element_energy_grad_hess(
                mesh.order,
                &coords[..nodes.n],
                &u_elem[..2 * nodes.n],
                mat,
                quad,
            )?;
            energy += el.energy;
            for (s, &ns) in nodes.ids[..nodes.n].iter().enumerate() {
                grad[2 * ns] += el.grad[2 * s];
                grad[2 * ns + 1] += el.grad[2 * s + 1];
            }
            for (s, &ns) in nodes.ids[..nodes.n].iter().enumerate() {
                for (r, &nr) in nodes.ids[..nodes.n].iter().enumerate() {
                    let row = 2 * ns;
                    let col = 2 * nr;
                    if fixed_nodes[ns] || fixed_nodes[nr] {
                        continue;
                    }
                    for i in 0..2 {
                        for k in 0..2 {
                            let v = el.hess[(2 * s + i, 2 * r + k)];
                            if v != 0.0 {
                                tri.add_triplet(row + i, col + k, v);
                            }
                        }
                    }
                }
            }
        }
    }
    if let Some(f) = load {
        energy -= f.dot(u);
        grad -= f;
    }
    for d in 0..n {
        if fixed_dof(d) {
            grad[d] = 0.0;
            tri.add_triplet(d, d, 1.0);
        }
    }
    Ok(SubdomainMatrices {
        energy,
        grad,
        hess: tri.to_csc(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::mesh::right_edge_traction_load;
    use approx::assert_relative_eq;

    fn test_material() -> Material {
        Material::new(5.0, 0.3).unwrap()
    }

    /// A gently distorted single Q1 element.
    fn distorted_q1() -> Vec<[f64; 2]> {
        vec![[0.0, 0.0], [0.1, 1.05], [1.0, -0.05], [1.1, 0.95]]
    }

    fn smooth_u(coords: &[[f64; 2]], scale: f64) -> Vec<f64> {
        let mut u = Vec::with_capacity(2 * coords.len());
        for c in coords {
            u.push(scale * (0.3 * c[0] + 0.1 * c[1] * c[1]));
            u.push(scale * (-0.2 * c[1] + 0.15 * c[0] * c[0]));
        }
        u
    }

    #[test]
    fn element_gradient_matches_finite_differences() {
        let coords = distorted_q1();
        let mat = test_material();
        let quad = Quadrature::gauss(2);
        let u = smooth_u(&coords, 0.1);
        let el = element_energy_grad_hess(1, &coords, &u, &mat, &quad).unwrap();
        let h = 1e-6;
        for d in 0..u.len() {
            let mut up = u.clone();
            let mut um = u.clone();
            up[d] += h;
            um[d] -= h;
            let ep = element_energy(1, &coords, &up, &mat, &quad).unwrap();
            let em = element_energy(1, &coords, &um, &mat, &quad).unwrap();
            let fd = (ep - em) / (2.0 * h);
            assert_relative_eq!(el.grad[d], fd, epsilon = 1e-8, max_relative = 1e-7);
        }
    }

    #[test]
    fn element_hessian_matches_gradient_differences() {
        let coords = distorted_q1();
        let mat = test_material();
        let quad = Quadrature::gauss(2);
        let u = smooth_u(&coords, 0.1);
        let el = element_energy_grad_hess(1, &coords, &u, &mat, &quad).unwrap();
        let h = 1e-6;
        for d in 0..u.len() {
            let mut up = u.clone();
            let mut um = u.clone();
            up[d] += h;
            um[d] -= h;
            let gp = element_energy_grad_hess(1, &coords, &up, &mat, &quad).unwrap().grad;
            let gm = element_energy_grad_hess(1, &coords, &um, &mat, &quad).unwrap().grad;
            for r in 0..u.len() {
                let fd = (gp[r] - gm[r]) / (2.0 * h);
                assert_relative_eq!(el.hess[(r, d)], fd, epsilon = 1e-6, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn element_hessian_is_symmetric() {
        let coords = distorted_q1();
        let mat = test_material();
        let quad = Quadrature::gauss(3);
        let u = smooth_u(&coords, 0.15);
        let el = element_energy_grad_hess(1, &coords, &u, &mat, &quad).unwrap();
        for r in 0..u.len() {
            for c in 0..u.len() {
                assert_relative_eq!(el.hess[(r, c)], el.hess[(c, r)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn translation_costs_no_energy() {
        let mesh = StructuredMesh::new(2, 2, 2.0, 2.0, 2).unwrap();
        let mat = test_material();
        let quad = Quadrature::for_element_order(2);
        let mut u = DVector::zeros(mesh.n_dofs());
        for n in 0..mesh.n_nodes() {
            u[2 * n] = 0.7;
            u[2 * n + 1] = -0.3;
        }
        let e = assemble_energy(&mesh, None, &u, &mat, &quad).unwrap();
        assert_relative_eq!(e, 0.0, epsilon = 1e-13);
        let fixed = vec![false; mesh.n_nodes()];
        let (_, g) = assemble_gradient(&mesh, &fixed, None, &u, &mat, &quad).unwrap();
        assert_relative_eq!(g.norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_displacement_gradient_is_negative_load() {
        let mesh = StructuredMesh::new(3, 2, 3.0, 1.0, 2).unwrap();
        let mat = test_material();
        let quad = Quadrature::for_element_order(2);
        let load = right_edge_traction_load(&mesh, -0.5);
        let u = DVector::zeros(mesh.n_dofs());
        let fixed = mesh.left_clamp_mask();
        let (e, g) = assemble_gradient(&mesh, &fixed, Some(&load.f), &u, &mat, &quad).unwrap();
        assert_eq!(e, 0.0);
        assert_relative_eq!((g + &load.f).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn fixed_rows_become_identity() {
        let mesh = StructuredMesh::new(2, 1, 2.0, 1.0, 1).unwrap();
        let mat = test_material();
        let quad = Quadrature::for_element_order(1);
        let fixed = mesh.left_clamp_mask();
        let u = DVector::zeros(mesh.n_dofs());
        let sub = assemble_subdomain(&mesh, &fixed, None, &u, &mat, &quad).unwrap();
        assert_eq!(sub.energy, 0.0);
        for n in 0..mesh.n_nodes() {
            if !fixed[n] {
                continue;
            }
            for c in 0..2 {
                let d = 2 * n + c;
                for (val, (r, cc)) in sub.hess.iter() {
                    if r == d || cc == d {
                        assert_eq!((r, cc), (d, d), "off-diagonal entry on fixed dof");
                        assert_eq!(*val, 1.0);
                    }
                }
            }
        }
    }

    #[test]
    fn mesh_energy_is_sum_of_element_energies() {
        let mesh = StructuredMesh::new(2, 2, 1.6, 1.2, 2).unwrap();
        let mat = test_material();
        let quad = Quadrature::for_element_order(2);
        let mut u = DVector::zeros(mesh.n_dofs());
        for n in 0..mesh.n_nodes() {
            let c = mesh.node_coords(n);
            u[2 * n] = 0.05 * c[0] * c[1];
            u[2 * n + 1] = -0.04 * c[0] + 0.02 * c[1];
        }
        let total = assemble_energy(&mesh, None, &u, &mat, &quad).unwrap();
        let mut coords = [[0.0; 2]; MAX_NODES];
        let mut u_elem = [0.0; 2 * MAX_NODES];
        let mut by_element = 0.0;
        for ex in 0..mesh.nx {
            for ey in 0..mesh.ny {
                let nodes = mesh.element_nodes(ex, ey);
                element_coords_and_u(&mesh, &nodes, &u, &mut coords, &mut u_elem);
                by_element +=
                    element_energy(2, &coords[..nodes.n], &u_elem[..2 * nodes.n], &mat, &quad)
                        .unwrap();
            }
        }
        assert_relative_eq!(total, by_element, epsilon = 1e-13);
    }

    #[test]
    fn inadmissible_state_reports_error() {
        let coords = vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
        let mat = test_material();
        let quad = Quadrature::gauss(2);
        // Collapse the element onto a line: x-displacement -1 on the right
        // edge makes det F = 0 at every point.
        let u = vec![0.0, 0.0, 0.0, 0.0, -1.0, 0.0, -1.0, 0.0];
        assert!(element_energy(1, &coords, &u, &mat, &quad).is_err());
    }
}
