//! Sparse storage and the dense factorizations used by the reduction pipeline.

mod dense;
mod sparse;

pub use dense::{
    least_squares, left_null_vector_pivoted_qr, nnls, normalize_columns, orthonormal_range,
    spd_condition_number,
};
pub use sparse::CsrMatrix;
