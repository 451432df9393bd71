//! Lobatto SBP operators on reference and global tensor-product meshes.

mod global;
mod mesh;
mod reference;

pub use global::{assemble_global_1d, assemble_global_2d, BoundaryPoint, GlobalOperators};
pub use mesh::{BoundaryKind, Mesh};
pub use reference::{build_reference_element, lagrange_derivative_matrix, lobatto_rule, ReferenceElement};
