//! Entropy-stable DG full-order models, entropy-projected POD reduced-order
//! models and structure-preserving hyper-reduction.

pub mod error;
pub mod experiments;
pub mod linalg;
pub mod operators;
pub mod fom;
pub mod hyperreduction;
pub mod io;
pub mod physics;
pub mod pod;
pub mod rom;
pub mod tables;
pub mod timestepping;

pub use error::{EsdgError, Result};
