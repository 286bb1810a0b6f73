//! Field generators: smooth stationary Gaussian fields on grids, the canonical
//! isotropic process on sphere meshes, and its finite-dimensional projections.

mod dump;
mod field;
pub(crate) mod grid;
mod mesh;

pub use dump::{
    field_header, parse_field_header, read_field, write_field, write_field_with_ell, FieldHeader,
    FIELD_MAGIC,
};
pub use field::{
    canonical_sphere_process, padding_nodes, poincare_process, sample_uniform_rotation,
    sample_uniform_rotation_with, simulate_field, FieldSample, Support,
};
pub use grid::GridSpec;
pub use mesh::SphereMesh;
