//! Finite element core: material model, quadrature, shape functions, meshes,
//! and assembly of energy, gradient, and Hessian for a compressible
//! Neo-Hooke solid in plane strain.

pub mod assembly;
pub mod energy;
pub mod material;
pub mod mesh;
pub mod quadrature;
pub mod shape;

pub use assembly::{
    assemble_energy, assemble_gradient, assemble_subdomain, element_energy,
    element_energy_grad_hess, SubdomainMatrices,
};
pub use energy::{energy_density, energy_density_3d, first_piola, DeformationState, InadmissibleDeformation};
pub use material::Material;
pub use mesh::{right_edge_traction_load, ExternalLoad, LoadCase, StructuredMesh};
pub use quadrature::Quadrature;
