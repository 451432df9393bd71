use serde::{Deserialize, Serialize};

use crate::error::{EsdgError, Result};

/// Boundary treatment along one coordinate direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryKind {
    Periodic,
    Weak,
}

/// Tensor-product mesh of intervals (1D) or affine quadrilaterals (2D).
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    breaks: Vec<Vec<f64>>,
    boundary: Vec<BoundaryKind>,
}

impl Mesh {
    /// Builds a mesh from strictly increasing element breakpoints per direction.
    /// `faces[i]` gives the (lower, upper) face kind of direction `i`.
    pub fn from_breaks(breaks: Vec<Vec<f64>>, faces: Vec<[BoundaryKind; 2]>) -> Result<Self> {
        let dim = breaks.len();
        if !(1..=2).contains(&dim) {
            return Err(EsdgError::InvalidMesh(format!("dimension {dim} not supported")));
        }
        if faces.len() != dim {
            return Err(EsdgError::InvalidMesh(format!(
                "{} boundary specifications for a {dim}D mesh",
                faces.len()
            )));
        }
        let mut boundary = Vec::with_capacity(dim);
        for (d, (b, f)) in breaks.iter().zip(&faces).enumerate() {
            if b.len() < 2 {
                return Err(EsdgError::InvalidMesh(format!("direction {d} has no elements")));
            }
            if b.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(EsdgError::InvalidMesh(format!(
                    "direction {d}: element breakpoints must be strictly increasing"
                )));
            }
            if f[0] != f[1] {
                return Err(EsdgError::InvalidMesh(format!(
                    "direction {d}: periodic coupling requires both opposite faces periodic"
                )));
            }
            if f[0] == BoundaryKind::Periodic && b.len() < 3 {
                return Err(EsdgError::InvalidMesh(format!(
                    "direction {d}: periodic coupling needs at least 2 elements"
                )));
            }
            boundary.push(f[0]);
        }
        Ok(Mesh { breaks, boundary })
    }

    pub fn uniform_1d(elements: usize, bounds: (f64, f64), kind: BoundaryKind) -> Result<Self> {
        Self::from_breaks(vec![uniform_breaks(elements, bounds)], vec![[kind, kind]])
    }

    pub fn uniform_2d(elements: [usize; 2], bounds: [(f64, f64); 2], kinds: [BoundaryKind; 2]) -> Result<Self> {
        Self::from_breaks(
            vec![
                uniform_breaks(elements[0], bounds[0]),
                uniform_breaks(elements[1], bounds[1]),
            ],
            vec![[kinds[0], kinds[0]], [kinds[1], kinds[1]]],
        )
    }

    pub fn dim(&self) -> usize {
        self.breaks.len()
    }

    pub fn elements(&self, dir: usize) -> usize {
        self.breaks[dir].len() - 1
    }

    pub fn num_elements(&self) -> usize {
        (0..self.dim()).map(|d| self.elements(d)).product()
    }

    pub fn breaks(&self, dir: usize) -> &[f64] {
        &self.breaks[dir]
    }

    pub fn boundary(&self, dir: usize) -> BoundaryKind {
        self.boundary[dir]
    }

    pub fn bounds(&self, dir: usize) -> (f64, f64) {
        let b = &self.breaks[dir];
        (b[0], b[b.len() - 1])
    }

    /// Per-element Jacobians `h_k / 2` along `dir`.
    pub fn jacobians(&self, dir: usize) -> Vec<f64> {
        self.breaks[dir].windows(2).map(|w| 0.5 * (w[1] - w[0])).collect()
    }
}

fn uniform_breaks(elements: usize, (a, b): (f64, f64)) -> Vec<f64> {
    (0..=elements)
        .map(|k| a + (b - a) * k as f64 / elements.max(1) as f64)
        .collect()
}
