use nalgebra::DMatrix;

use super::mesh::{BoundaryKind, Mesh};
use super::reference::ReferenceElement;
use crate::error::{EsdgError, Result};
use crate::linalg::CsrMatrix;

/// One surface quadrature point. Corner nodes of a 2D domain appear once per face.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryPoint {
    /// Global volume node the point coincides with.
    pub node: usize,
    /// Outward unit normal (unused components are zero).
    pub normal: [f64; 2],
    pub weight: f64,
}

/// Assembled global SBP operators.
#[derive(Clone, Debug)]
pub struct GlobalOperators {
    pub dim: usize,
    pub degree: usize,
    pub mesh: Mesh,
    /// Node coordinates, one row per node.
    pub coords: DMatrix<f64>,
    /// Global quadrature weights (diagonal of the mass matrix).
    pub weights: Vec<f64>,
    /// Weak differentiation matrices, one per direction.
    pub q: Vec<CsrMatrix>,
    /// Boundary matrices, one per direction.
    pub b: Vec<CsrMatrix>,
    /// Surface quadrature over weak faces, ordered by direction then lower/upper face.
    pub boundary: Vec<BoundaryPoint>,
}

impl GlobalOperators {
    pub fn assemble(mesh: &Mesh, degree: usize) -> Result<Self> {
        let reference = ReferenceElement::new(degree);
        match mesh.dim() {
            1 => assemble_global_1d(mesh, &reference),
            2 => assemble_global_2d(mesh, &reference),
            d => Err(EsdgError::InvalidMesh(format!("dimension {d} not supported"))),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.weights.len()
    }

    pub fn is_periodic(&self) -> bool {
        (0..self.dim).all(|d| self.mesh.boundary(d) == BoundaryKind::Periodic)
    }

    /// Coordinate `dir` of every node.
    pub fn coordinate(&self, dir: usize) -> Vec<f64> {
        self.coords.column(dir).iter().copied().collect()
    }

    pub fn mass(&self) -> CsrMatrix {
        CsrMatrix::from_diagonal(&self.weights)
    }

    /// `Q - Qᵀ` for direction `dir`.
    pub fn skew(&self, dir: usize) -> CsrMatrix {
        self.q[dir].add_scaled(&self.q[dir].transpose(), -1.0)
    }
}

/// Global 1D operators: block-Toeplitz `Q_Ω` with central interface coupling.
pub fn assemble_global_1d(mesh: &Mesh, reference: &ReferenceElement) -> Result<GlobalOperators> {
    if mesh.dim() != 1 {
        return Err(EsdgError::InvalidMesh("1D assembly needs a 1D mesh".into()));
    }
    let line = assemble_line(mesh.breaks(0), mesh.boundary(0), reference);
    let n = line.weights.len();
    let mut boundary = Vec::new();
    if mesh.boundary(0) == BoundaryKind::Weak {
        boundary.push(BoundaryPoint {
            node: 0,
            normal: [-1.0, 0.0],
            weight: 1.0,
        });
        boundary.push(BoundaryPoint {
            node: n - 1,
            normal: [1.0, 0.0],
            weight: 1.0,
        });
    }
    Ok(GlobalOperators {
        dim: 1,
        degree: reference.degree,
        mesh: mesh.clone(),
        coords: DMatrix::from_column_slice(n, 1, &line.coords),
        weights: line.weights,
        q: vec![line.q],
        b: vec![line.b],
        boundary,
    })
}

/// Global 2D operators on a tensor-product mesh. The per-direction operators
/// are Kronecker products of 1D global operators with the transverse mass,
/// permuted to element-major node ordering.
pub fn assemble_global_2d(mesh: &Mesh, reference: &ReferenceElement) -> Result<GlobalOperators> {
    if mesh.dim() != 2 {
        return Err(EsdgError::InvalidMesh("2D assembly needs a 2D mesh".into()));
    }
    let lx = assemble_line(mesh.breaks(0), mesh.boundary(0), reference);
    let ly = assemble_line(mesh.breaks(1), mesh.boundary(1), reference);
    let np = reference.num_nodes();
    let kx = mesh.elements(0);
    let (nx, ny) = (lx.weights.len(), ly.weights.len());
    let n = nx * ny;
    // (X, Y) line indices to element-major global index
    let index = |x: usize, y: usize| {
        let (ex, ix) = (x / np, x % np);
        let (ey, iy) = (y / np, y % np);
        ((ey * kx + ex) * np + iy) * np + ix
    };

    let mut coords = DMatrix::zeros(n, 2);
    let mut weights = vec![0.0; n];
    for y in 0..ny {
        for x in 0..nx {
            let g = index(x, y);
            coords[(g, 0)] = lx.coords[x];
            coords[(g, 1)] = ly.coords[y];
            weights[g] = lx.weights[x] * ly.weights[y];
        }
    }

    let kron_x = |m: &CsrMatrix| {
        let mut t = Vec::with_capacity(m.nnz() * ny);
        for y in 0..ny {
            for (a, c, v) in m.triplets() {
                t.push((index(a, y), index(c, y), ly.weights[y] * v));
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    };
    let kron_y = |m: &CsrMatrix| {
        let mut t = Vec::with_capacity(m.nnz() * nx);
        for x in 0..nx {
            for (a, c, v) in m.triplets() {
                t.push((index(x, a), index(x, c), lx.weights[x] * v));
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    };

    let mut boundary = Vec::new();
    if mesh.boundary(0) == BoundaryKind::Weak {
        for (x, sign) in [(0, -1.0), (nx - 1, 1.0)] {
            for y in 0..ny {
                boundary.push(BoundaryPoint {
                    node: index(x, y),
                    normal: [sign, 0.0],
                    weight: ly.weights[y],
                });
            }
        }
    }
    if mesh.boundary(1) == BoundaryKind::Weak {
        for (y, sign) in [(0, -1.0), (ny - 1, 1.0)] {
            for x in 0..nx {
                boundary.push(BoundaryPoint {
                    node: index(x, y),
                    normal: [0.0, sign],
                    weight: lx.weights[x],
                });
            }
        }
    }

    Ok(GlobalOperators {
        dim: 2,
        degree: reference.degree,
        mesh: mesh.clone(),
        coords,
        weights,
        q: vec![kron_x(&lx.q), kron_y(&ly.q)],
        b: vec![kron_x(&lx.b), kron_y(&ly.b)],
        boundary,
    })
}

struct LineOperators {
    coords: Vec<f64>,
    weights: Vec<f64>,
    q: CsrMatrix,
    b: CsrMatrix,
}

fn assemble_line(breaks: &[f64], kind: BoundaryKind, reference: &ReferenceElement) -> LineOperators {
    let np = reference.num_nodes();
    let k = breaks.len() - 1;
    let n = k * np;
    let mut coords = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut triplets = Vec::new();

    for e in 0..k {
        let jac = 0.5 * (breaks[e + 1] - breaks[e]);
        for i in 0..np {
            coords.push(breaks[e] + (reference.nodes[i] + 1.0) * jac);
            weights.push(jac * reference.weights[i]);
        }
        let base = e * np;
        for i in 0..np {
            for j in 0..np {
                let s = 0.5 * (reference.q[(i, j)] - reference.q[(j, i)]);
                if s != 0.0 {
                    triplets.push((base + i, base + j, s));
                }
            }
        }
        let periodic = kind == BoundaryKind::Periodic;
        if e + 1 < k || periodic {
            let right = ((e + 1) % k) * np;
            triplets.push((base + np - 1, right, 0.5));
            triplets.push((right, base + np - 1, -0.5));
        }
    }

    let b = match kind {
        BoundaryKind::Periodic => CsrMatrix::zeros(n, n),
        BoundaryKind::Weak => {
            triplets.push((0, 0, -0.5));
            triplets.push((n - 1, n - 1, 0.5));
            CsrMatrix::from_triplets(n, n, &[(0, 0, -1.0), (n - 1, n - 1, 1.0)])
        }
    };

    LineOperators {
        coords,
        weights,
        q: CsrMatrix::from_triplets(n, n, &triplets),
        b,
    }
}
