//! Structure-preserving hyper-reduction: empirical cubature on the product
//! space of the reduced basis, test-basis compression of the SBP operators,
//! hybridized boundary coupling and Carathéodory pruning of the trace rule.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{EsdgError, Result};
use crate::linalg::{left_null_vector_pivoted_qr, nnls, normalize_columns, orthonormal_range, CsrMatrix};
use crate::operators::GlobalOperators;
use crate::pod::ReducedBasis;

/// Relative singular-value cutoff when deduplicating the product space.
/// Relative singular-value cutoff when deduplicating a test basis.
const TEST_RANK_TOL: f64 = 1e-12;

/// Orthonormal basis of `span{1, V_N(:,i) ∘ V_N(:,j)}` with its exact moments.
#[derive(Clone, Debug)]
pub struct TargetSpace {
    pub basis: DMatrix<f64>,
    /// `basisᵀ w_Ω`.
    pub moments: DVector<f64>,
}

/// Positive quadrature on a subset of the full-order nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperReducedQuadrature {
    /// Sorted node indices.
    pub nodes: Vec<usize>,
    pub weights: Vec<f64>,
    /// Relative moment residual `‖V(I,:)ᵀw - m‖ / ‖m‖`.
    pub residual: f64,
}

impl HyperReducedQuadrature {
    /// All nodes with the full-order weights.
    pub fn ideal(weights: &[f64]) -> Self {
        HyperReducedQuadrature {
            nodes: (0..weights.len()).collect(),
            weights: weights.to_vec(),
            residual: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn sort(&mut self) {
        let mut order: Vec<usize> = (0..self.nodes.len()).collect();
        order.sort_by_key(|&k| self.nodes[k]);
        self.nodes = order.iter().map(|&k| self.nodes[k]).collect();
        self.weights = order.iter().map(|&k| self.weights[k]).collect();
    }
}

/// Which derivative image enriches the test basis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestBasisKind {
    /// `[1, V_N, M⁻¹QᵀV_N]`, accurate for high-order operators.
    #[default]
    Dg,
    /// `[1, V_N, Q V_N]`, adequate only when `M` is a multiple of the identity.
    Fvm,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperReductionOptions {
    /// Relative moment tolerance of the empirical cubature.
    pub tolerance: f64,
    /// Relative singular-value cutoff used to compress the product target space.
    pub target_tolerance: f64,
    /// Largest admissible condition number of a sampled test mass matrix.
    pub max_condition: f64,
    pub test_basis: TestBasisKind,
}

impl Default for HyperReductionOptions {
    fn default() -> Self {
        HyperReductionOptions {
            tolerance: 1e-7,
            target_tolerance: 1e-7,
            max_condition: 1e8,
            test_basis: TestBasisKind::Dg,
        }
    }
}

/// Orthonormal basis of `span{1, V_N(:,i)∘V_N(:,j)}` with directions whose
/// relative singular value falls below `rel_tol` discarded.
pub fn build_target_space(modes: &DMatrix<f64>, weights: &[f64], rel_tol: f64) -> TargetSpace {
    let (nn, n) = modes.shape();
    let mut products = DMatrix::zeros(nn, 1 + n * (n + 1) / 2);
    products.column_mut(0).fill(1.0);
    let mut col = 1;
    for i in 0..n {
        for j in i..n {
            let prod = modes.column(i).component_mul(&modes.column(j));
            products.set_column(col, &prod);
            col += 1;
        }
    }
    normalize_columns(&mut products);
    let (basis, _) = orthonormal_range(&products, rel_tol);
    let moments = basis.tr_mul(&DVector::from_column_slice(weights));
    TargetSpace { basis, moments }
}

/// Incremental QR of the moment matrix columns `V(i,:)ᵀ` for the selected nodes.
struct IncrementalQr {
    q: Vec<DVector<f64>>,
    r: Vec<Vec<f64>>,
    qtb: Vec<f64>,
}

impl IncrementalQr {
    fn new() -> Self {
        IncrementalQr {
            q: Vec::new(),
            r: Vec::new(),
            qtb: Vec::new(),
        }
    }

    /// Appends a column; returns false (leaving the factorization untouched)
    /// when it is numerically dependent on the current ones.
    fn push(&mut self, a: &DVector<f64>, b: &DVector<f64>) -> bool {
        let mut v = a.clone();
        let mut coeffs = vec![0.0; self.q.len()];
        for _ in 0..2 {
            for (k, qk) in self.q.iter().enumerate() {
                let c = qk.dot(&v);
                v.axpy(-c, qk, 1.0);
                coeffs[k] += c;
            }
        }
        let rho = v.norm();
        if rho <= 1e-12 * a.norm() {
            return false;
        }
        v /= rho;
        coeffs.push(rho);
        self.qtb.push(v.dot(b));
        self.q.push(v);
        self.r.push(coeffs);
        true
    }

    fn solve(&self) -> Vec<f64> {
        let k = self.q.len();
        let mut x = self.qtb.clone();
        for i in (0..k).rev() {
            let mut s = x[i];
            for j in i + 1..k {
                s -= self.r[j][i] * x[j];
            }
            x[i] = s / self.r[i][i];
        }
        x
    }
}

fn moment_residual(vt: &DMatrix<f64>, nodes: &[usize], weights: &[f64], b: &DVector<f64>) -> DVector<f64> {
    let mut r = b.clone();
    for (&i, &w) in nodes.iter().zip(weights) {
        r.axpy(-w, &vt.column(i), 1.0);
    }
    r
}

/// Greedy empirical cubature with nonnegative least-squares weight solves.
pub fn empirical_cubature(target: &TargetSpace, weights: &[f64], tol: f64) -> Result<HyperReducedQuadrature> {
    if !(tol > 0.0) {
        return Err(EsdgError::config("hyperreduction.tolerance", "must be positive"));
    }
    let nn = target.basis.nrows();
    if weights.len() != nn {
        return Err(EsdgError::ShapeMismatch(format!("{} weights for {nn} nodes", weights.len())));
    }
    let vt = target.basis.transpose();
    let b = &target.moments;
    let bnorm = b.norm();
    let row_norms: Vec<f64> = (0..nn).map(|i| vt.column(i).norm()).collect();

    let mut nodes: Vec<usize> = Vec::new();
    let mut w: Vec<f64> = Vec::new();
    let mut in_set = vec![false; nn];
    let mut dependent = vec![false; nn];
    let mut qr = IncrementalQr::new();
    let mut r = b.clone();
    let mut residual = if bnorm > 0.0 { 1.0 } else { 0.0 };

    for _ in 0..4 * nn + 10 {
        if residual <= tol {
            break;
        }
        let scores = vt.tr_mul(&r);
        let mut best: Option<(usize, f64)> = None;
        for i in 0..nn {
            if in_set[i] || dependent[i] || row_norms[i] == 0.0 {
                continue;
            }
            let s = scores[i] / row_norms[i];
            if s > 0.0 && best.is_none_or(|(_, bs)| s > bs) {
                best = Some((i, s));
            }
        }
        let Some((cand, _)) = best else { break };
        let col = vt.column(cand).into_owned();
        if !qr.push(&col, b) {
            dependent[cand] = true;
            continue;
        }
        nodes.push(cand);
        in_set[cand] = true;
        let sol = qr.solve();
        if sol.iter().all(|&x| x > 0.0) {
            w = sol;
        } else {
            let a = vt.select_columns(nodes.iter());
            let passive: Vec<usize> = (0..nodes.len() - 1).filter(|&k| w.get(k).is_some_and(|&x| x > 0.0)).collect();
            let x = nnls(&a, b, &passive)?;
            let keep: Vec<usize> = (0..nodes.len()).filter(|&k| x[k] > 0.0).collect();
            for (k, &i) in nodes.iter().enumerate() {
                if x[k] <= 0.0 {
                    in_set[i] = false;
                }
            }
            nodes = keep.iter().map(|&k| nodes[k]).collect();
            w = keep.iter().map(|&k| x[k]).collect();
            qr = IncrementalQr::new();
            for &i in &nodes {
                qr.push(&vt.column(i).into_owned(), b);
            }
        }
        r = moment_residual(&vt, &nodes, &w, b);
        residual = r.norm() / bnorm;
    }
    if residual > tol {
        return Err(EsdgError::CubatureNotConverged { tol, residual });
    }
    let mut quad = HyperReducedQuadrature {
        nodes,
        weights: w,
        residual,
    };
    quad.sort();
    Ok(quad)
}

/// Test basis for direction `dir`: an orthonormal basis of the range of
/// `[1, V_N, M⁻¹Q_iᵀV_N]` (or `[1, V_N, Q_iV_N]` for the finite-volume variant).
pub fn build_test_basis(modes: &DMatrix<f64>, weights: &[f64], q: &CsrMatrix, kind: TestBasisKind) -> DMatrix<f64> {
    let (nn, n) = modes.shape();
    let op = match kind {
        TestBasisKind::Dg => {
            let inv_w: Vec<f64> = weights.iter().map(|w| 1.0 / w).collect();
            q.transpose().scale_rows(&inv_w)
        }
        TestBasisKind::Fvm => q.clone(),
    };
    let mut image = op.mul_dense(modes);
    // images at rounding level (derivatives of constants) carry no direction
    let op_norm = op.norm_inf();
    for (mut col, mode) in image.column_iter_mut().zip(modes.column_iter()) {
        if col.norm() <= 1e-12 * op_norm * mode.norm() {
            col.fill(0.0);
        }
    }
    let mut all = DMatrix::zeros(nn, 1 + 2 * n);
    all.column_mut(0).fill(1.0);
    all.view_mut((0, 1), (nn, n)).copy_from(modes);
    all.view_mut((0, 1 + n), (nn, n)).copy_from(&image);
    normalize_columns(&mut all);
    orthonormal_range(&all, TEST_RANK_TOL).0
}

/// `V̄_tᵀ W V̄_t` on the quadrature nodes.
pub fn test_mass(vt: &DMatrix<f64>, quad: &HyperReducedQuadrature) -> DMatrix<f64> {
    let sampled = vt.select_rows(quad.nodes.iter());
    let mut weighted = sampled.clone();
    for (k, mut row) in weighted.row_iter_mut().enumerate() {
        row *= quad.weights[k];
    }
    sampled.tr_mul(&weighted)
}

fn condition(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if min <= 0.0 { f64::INFINITY } else { max / min }
}

/// Smallest eigenvalue of `diag(lambda) + z zᵀ` for ascending `lambda`.
fn rank_one_min_eigenvalue(lambda: &[f64], z: &[f64]) -> f64 {
    let znorm2: f64 = z.iter().map(|v| v * v).sum();
    let scale = lambda.last().copied().unwrap_or(0.0).abs().max(znorm2).max(f64::MIN_POSITIVE);
    let active: Vec<usize> = (0..lambda.len()).filter(|&k| z[k] * z[k] > 1e-28 * scale).collect();
    let deflated_min = (0..lambda.len())
        .filter(|k| !active.contains(k))
        .map(|k| lambda[k])
        .fold(f64::INFINITY, f64::min);
    let Some(&first) = active.first() else { return deflated_min };
    let lo0 = lambda[first];
    let hi0 = active.get(1).map_or(lo0 + znorm2, |&k| lambda[k].min(lo0 + znorm2));
    let secular = |mu: f64| 1.0 + active.iter().map(|&k| z[k] * z[k] / (lambda[k] - mu)).sum::<f64>();
    let (mut lo, mut hi) = (lo0, hi0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        // secular is increasing on (λ_first, λ_next): negative to the left of the root
        if secular(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).min(deflated_min)
}

/// Adds nodes until every sampled test mass matrix has condition number at
/// most `max_condition`.
pub fn stabilize_quadrature(
    mut quad: HyperReducedQuadrature,
    test_bases: &[DMatrix<f64>],
    target: &TargetSpace,
    weights: &[f64],
    max_condition: f64,
) -> Result<HyperReducedQuadrature> {
    let nn = weights.len();
    let vt_target = target.basis.transpose();
    while quad.len() < nn {
        let conds: Vec<f64> = test_bases.iter().map(|vt| condition(&test_mass(vt, &quad))).collect();
        let Some((worst, &c)) = conds.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)) else {
            break;
        };
        if c <= max_condition {
            break;
        }
        let vt = &test_bases[worst];
        let sampled = vt.select_rows(quad.nodes.iter());
        let eig = sampled.tr_mul(&sampled).symmetric_eigen();
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let lambda: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
        let lmax = lambda.last().copied().unwrap_or(0.0);
        let null_dims = lambda.iter().filter(|&&l| l <= 1e-12 * lmax).count();

        let in_set: std::collections::HashSet<usize> = quad.nodes.iter().copied().collect();
        let mut best: Option<(usize, f64)> = None;
        for j in 0..nn {
            if in_set.contains(&j) {
                continue;
            }
            let row = vt.row(j);
            let z: Vec<f64> = order.iter().map(|&k| row.dot(&eig.eigenvectors.column(k).transpose())).collect();
            let score = if null_dims > 1 {
                z[..null_dims].iter().map(|v| v * v).sum()
            } else {
                rank_one_min_eigenvalue(&lambda, &z)
            };
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((j, score));
            }
        }
        let Some((add, _)) = best else { break };

        let mut nodes = quad.nodes.clone();
        nodes.push(add);
        let a = vt_target.select_columns(nodes.iter());
        let passive: Vec<usize> = (0..quad.len()).collect();
        let x = nnls(&a, &target.moments, &passive)?;
        let mut new_weights: Vec<f64> = if x.iter().all(|&v| v > 0.0) {
            x.iter().copied().collect()
        } else {
            let mut w = quad.weights.clone();
            w.push(weights[add]);
            w
        };
        let residual = moment_residual(&vt_target, &nodes, &new_weights, &target.moments).norm()
            / target.moments.norm().max(f64::MIN_POSITIVE);
        quad = HyperReducedQuadrature {
            nodes: std::mem::take(&mut nodes),
            weights: std::mem::take(&mut new_weights),
            residual,
        };
        quad.sort();
    }
    Ok(quad)
}

/// Compressed operator `Q̄ = P_tᵀ (V_tᵀ Q V_t) P_t` and the test projection
/// `P_t = M_t⁻¹ V̄_tᵀ W`.
pub fn hyperreduced_q(q: &CsrMatrix, vt: &DMatrix<f64>, quad: &HyperReducedQuadrature) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    // P_t = R⁻¹ Q_aᵀ W^½ from the thin QR of W^½ V̄_t, which avoids squaring
    // the condition number of the sampled basis
    let r_dim = vt.ncols();
    if quad.len() < r_dim {
        return Err(EsdgError::Singular(format!(
            "{} quadrature nodes cannot resolve a rank-{r_dim} test basis",
            quad.len()
        )));
    }
    let sqrt_w: Vec<f64> = quad.weights.iter().map(|w| w.sqrt()).collect();
    let mut a = vt.select_rows(quad.nodes.iter());
    for (k, mut row) in a.row_iter_mut().enumerate() {
        row *= sqrt_w[k];
    }
    let qr = a.qr();
    let r = qr.r();
    let rmax = r.diagonal().amax();
    if r.diagonal().iter().any(|d| d.abs() <= 1e-14 * rmax) {
        return Err(EsdgError::Singular("sampled test mass matrix is singular".into()));
    }
    let mut qa_t = qr.q().transpose();
    for (k, mut col) in qa_t.column_iter_mut().enumerate() {
        col *= sqrt_w[k];
    }
    let pt = r
        .solve_upper_triangular(&qa_t)
        .ok_or_else(|| EsdgError::Singular("sampled test mass matrix is singular".into()))?;
    let q_hat = vt.tr_mul(&q.mul_dense(vt));
    let q_bar = pt.tr_mul(&(q_hat * &pt));
    Ok((q_bar, pt))
}

/// `½ [[Q̄ - Q̄ᵀ, ĒᵀB̄], [-B̄Ē, B̄]]` with `B̄ = diag(b)`.
pub fn hybridized_sbp(q_bar: &DMatrix<f64>, e: &DMatrix<f64>, b: &[f64]) -> DMatrix<f64> {
    let nv = q_bar.nrows();
    let nb = b.len();
    let mut qh = DMatrix::zeros(nv + nb, nv + nb);
    let skew = q_bar - q_bar.transpose();
    qh.view_mut((0, 0), (nv, nv)).copy_from(&(skew * 0.5));
    for k in 0..nb {
        for j in 0..nv {
            let v = 0.5 * e[(k, j)] * b[k];
            qh[(j, nv + k)] = v;
            qh[(nv + k, j)] = -v;
        }
        qh[(nv + k, nv + k)] = 0.5 * b[k];
    }
    qh
}

/// Carathéodory pruning of a positive rule. `vt` is `M × N` (one row of
/// moment-function values per node); the result keeps `min(M, N)` nodes with
/// nonnegative weights reproducing the moments `vtᵀ w`.
pub fn caratheodory_prune(vt: &DMatrix<f64>, w: &[f64]) -> Result<(Vec<f64>, Vec<usize>)> {
    let (m, n) = vt.shape();
    if w.len() != m {
        return Err(EsdgError::ShapeMismatch(format!("{} weights for {m} nodes", w.len())));
    }
    if let Some((index, &weight)) = w.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(EsdgError::NegativeWeight { index, weight });
    }
    let mut idx: Vec<usize> = (0..m).collect();
    let mut w = w.to_vec();
    if m <= n {
        return Ok((w, idx));
    }
    let mut rows = vt.clone();
    for _ in 0..m - n {
        let block = rows.rows(0, n + 1).into_owned();
        let mut c = left_null_vector_pivoted_qr(&block, 1e-12);
        if !c.iter().any(|&v| v > 0.0) {
            c.neg_mut();
        }
        let mut pick: Option<(usize, f64)> = None;
        for k in 0..=n {
            if c[k] > 0.0 {
                let ratio = w[k] / c[k];
                if pick.is_none_or(|(_, r)| ratio < r) {
                    pick = Some((k, ratio));
                }
            }
        }
        let Some((k, alpha)) = pick else {
            return Err(EsdgError::PruningStall(format!("null vector has no positive entry with {} nodes left", w.len())));
        };
        for j in 0..=n {
            w[j] = (w[j] - alpha * c[j]).max(0.0);
        }
        w.remove(k);
        idx.remove(k);
        rows = rows.remove_row(k);
    }
    Ok((w, idx))
}

/// Boundary moment matrix `[diag(n^1)V_bt^1, ..., diag(n^d)V_bt^d]`, one row per
/// boundary point.
pub fn boundary_moment_matrix(ops: &GlobalOperators, test_bases: &[DMatrix<f64>]) -> DMatrix<f64> {
    let cols: usize = test_bases.iter().map(|v| v.ncols()).sum();
    let mut m = DMatrix::zeros(ops.boundary.len(), cols);
    for (k, bp) in ops.boundary.iter().enumerate() {
        let mut off = 0;
        for (d, vt) in test_bases.iter().enumerate() {
            for j in 0..vt.ncols() {
                m[(k, off + j)] = bp.normal[d] * vt[(bp.node, j)];
            }
            off += vt.ncols();
        }
    }
    m
}

/// Prunes the trace quadrature so that `1ᵀB̄^i V̄_bt^i = 1ᵀQ^i V_t^i` keeps holding
/// with nonnegative weights. Returns boundary-point indices and weights.
pub fn boundary_caratheodory(ops: &GlobalOperators, test_bases: &[DMatrix<f64>]) -> Result<(Vec<usize>, Vec<f64>)> {
    let v = boundary_moment_matrix(ops, test_bases);
    let w: Vec<f64> = ops.boundary.iter().map(|bp| bp.weight).collect();
    let (wb, ib) = caratheodory_prune(&v, &w)?;
    Ok((ib, wb))
}

/// Everything the hyper-reduced model needs, sampled on the selected nodes.
#[derive(Clone, Debug)]
pub struct HyperReducedOperators {
    pub quadrature: HyperReducedQuadrature,
    /// `V_t^i` on all nodes.
    pub test_bases: Vec<DMatrix<f64>>,
    /// `P_t^i`.
    pub projections: Vec<DMatrix<f64>>,
    /// `Q̄^i`.
    pub q_bar: Vec<DMatrix<f64>>,
    /// `Ē^i`, pruned boundary points × volume nodes.
    pub extrapolation: Vec<DMatrix<f64>>,
    /// `Q̄_h^i` (equal to `Q̄^i` when there is no boundary).
    pub q_h: Vec<DMatrix<f64>>,
    /// Indices into the full-order boundary point list.
    pub boundary_points: Vec<usize>,
    pub boundary_weights: Vec<f64>,
    pub boundary_normals: Vec<[f64; 2]>,
    /// Full-order node of each pruned boundary point.
    pub boundary_nodes: Vec<usize>,
    /// `V̄_N = V_N(I,:)`.
    pub v_n: DMatrix<f64>,
    /// `V̄_b`, the basis at the pruned boundary points.
    pub v_b: DMatrix<f64>,
}

impl HyperReducedOperators {
    pub fn dim(&self) -> usize {
        self.q_bar.len()
    }

    /// Diagonal of `B̄_b^i`.
    pub fn boundary_scaling(&self, dir: usize) -> Vec<f64> {
        self.boundary_normals
            .iter()
            .zip(&self.boundary_weights)
            .map(|(n, w)| n[dir] * w)
            .collect()
    }

    /// `V̄_h = [V̄_N; V̄_b]`.
    pub fn v_h(&self) -> DMatrix<f64> {
        let (nv, nb, n) = (self.v_n.nrows(), self.v_b.nrows(), self.v_n.ncols());
        let mut out = DMatrix::zeros(nv + nb, n);
        out.view_mut((0, 0), (nv, n)).copy_from(&self.v_n);
        out.view_mut((nv, 0), (nb, n)).copy_from(&self.v_b);
        out
    }
}

/// Builds the hyper-reduced operators from a given volume quadrature.
pub fn assemble_hyperreduced(
    ops: &GlobalOperators,
    basis: &ReducedBasis,
    quadrature: HyperReducedQuadrature,
    test_bases: Vec<DMatrix<f64>>,
) -> Result<HyperReducedOperators> {
    let mut projections = Vec::with_capacity(ops.dim);
    let mut q_bar = Vec::with_capacity(ops.dim);
    for (d, vt) in test_bases.iter().enumerate() {
        let (qb, pt) = hyperreduced_q(&ops.q[d], vt, &quadrature)?;
        q_bar.push(qb);
        projections.push(pt);
    }
    let (boundary_points, boundary_weights) = if ops.boundary.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        boundary_caratheodory(ops, &test_bases)?
    };
    let boundary_normals: Vec<[f64; 2]> = boundary_points.iter().map(|&k| ops.boundary[k].normal).collect();
    let boundary_nodes: Vec<usize> = boundary_points.iter().map(|&k| ops.boundary[k].node).collect();
    let mut extrapolation = Vec::with_capacity(ops.dim);
    let mut q_h = Vec::with_capacity(ops.dim);
    for d in 0..ops.dim {
        let e = test_bases[d].select_rows(boundary_nodes.iter()) * &projections[d];
        let b: Vec<f64> = boundary_normals
            .iter()
            .zip(&boundary_weights)
            .map(|(n, w)| n[d] * w)
            .collect();
        q_h.push(hybridized_sbp(&q_bar[d], &e, &b));
        extrapolation.push(e);
    }
    Ok(HyperReducedOperators {
        v_n: basis.modes.select_rows(quadrature.nodes.iter()),
        v_b: basis.modes.select_rows(boundary_nodes.iter()),
        quadrature,
        test_bases,
        projections,
        q_bar,
        extrapolation,
        q_h,
        boundary_points,
        boundary_weights,
        boundary_normals,
        boundary_nodes,
    })
}

/// Full offline hyper-reduction: cubature, test bases, stabilization, operators.
pub fn hyperreduce(ops: &GlobalOperators, basis: &ReducedBasis, opts: &HyperReductionOptions) -> Result<HyperReducedOperators> {
    let target = build_target_space(&basis.modes, &ops.weights, opts.target_tolerance);
    let quad = empirical_cubature(&target, &ops.weights, opts.tolerance)?;
    let test_bases: Vec<DMatrix<f64>> = ops
        .q
        .iter()
        .map(|q| build_test_basis(&basis.modes, &ops.weights, q, opts.test_basis))
        .collect();
    let quad = stabilize_quadrature(quad, &test_bases, &target, &ops.weights, opts.max_condition)?;
    assemble_hyperreduced(ops, basis, quad, test_bases)
}

/// `max_i ‖V_Nᵀ(Q_i - Q̄_i)‖_F` under ideal hyper-reduction (all nodes, full weights).
pub fn ideal_orthogonality_error(ops: &GlobalOperators, modes: &DMatrix<f64>, kind: TestBasisKind) -> Result<f64> {
    let quad = HyperReducedQuadrature::ideal(&ops.weights);
    let mut worst = 0.0f64;
    for q in &ops.q {
        let vt = build_test_basis(modes, &ops.weights, q, kind);
        let (q_bar, _) = hyperreduced_q(q, &vt, &quad)?;
        let diff = q.to_dense() - q_bar;
        worst = worst.max(modes.tr_mul(&diff).norm());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{BoundaryKind, Mesh};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn smooth_basis(ops: &GlobalOperators, n: usize) -> ReducedBasis {
        let x = ops.coordinate(0);
        let nn = x.len();
        let raw = DMatrix::from_fn(nn, n, |i, j| {
            let y = if ops.dim > 1 { ops.coords[(i, 1)] } else { 0.0 };
            if j == 0 { 1.0 } else { ((j as f64) * 1.3 * x[i] + 0.4 * j as f64 * y).sin() + 0.1 * (j as f64 * x[i]).cos() }
        });
        mass_orthonormal(&raw, &ops.weights)
    }

    fn mass_orthonormal(raw: &DMatrix<f64>, w: &[f64]) -> ReducedBasis {
        let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
        let mut a = raw.clone();
        for (i, mut row) in a.row_iter_mut().enumerate() {
            row *= sw[i];
        }
        let q = a.qr().q();
        let mut modes = q.clone();
        for (i, mut row) in modes.row_iter_mut().enumerate() {
            row /= sw[i];
        }
        ReducedBasis {
            modes,
            singular_values: vec![1.0; raw.ncols()],
            weights: w.to_vec(),
        }
    }

    #[test]
    fn constant_mode_targets_the_constant() {
        let w = vec![0.25; 8];
        let modes = DMatrix::from_element(8, 1, 1.0 / 2f64.sqrt());
        let target = build_target_space(&modes, &w, 1e-10);
        assert_eq!(target.basis.ncols(), 1);
        let quad = empirical_cubature(&target, &w, 1e-7).unwrap();
        assert_eq!(quad.len(), 1);
        assert!((quad.weights[0] - 2.0).abs() < 1e-13);
    }

    #[test]
    fn target_moments_integrate_polynomial_products() {
        // modes 1, x, x² on [-1, 1], p = 3: the products have degree at most 4 and
        // are integrated exactly by the Lobatto rule
        let mesh = Mesh::uniform_1d(6, (-1.0, 1.0), BoundaryKind::Periodic).unwrap();
        let ops = GlobalOperators::assemble(&mesh, 3).unwrap();
        let x = ops.coordinate(0);
        let modes = DMatrix::from_fn(x.len(), 3, |i, j| x[i].powi(j as i32));
        let target = build_target_space(&modes, &ops.weights, 1e-10);
        assert_eq!(target.basis.ncols(), 5);
        for k in 0..5 {
            let f: Vec<f64> = x.iter().map(|v| v.powi(k)).collect();
            let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            // project x^k onto the target basis, integrate with the moments
            let coeffs = target.basis.tr_mul(&DVector::from_vec(f));
            assert!((coeffs.dot(&target.moments) - exact).abs() < 1e-12, "degree {k}");
        }
    }

    #[test]
    fn cubature_matches_moments_with_positive_weights() {
        let mesh = Mesh::uniform_1d(32, (-1.0, 1.0), BoundaryKind::Periodic).unwrap();
        let ops = GlobalOperators::assemble(&mesh, 3).unwrap();
        let basis = smooth_basis(&ops, 6);
        let target = build_target_space(&basis.modes, &ops.weights, 1e-10);
        let quad = empirical_cubature(&target, &ops.weights, 1e-9).unwrap();
        assert!(quad.weights.iter().all(|&w| w > 0.0));
        assert!(quad.len() <= target.basis.ncols());
        assert!(quad.nodes.windows(2).all(|p| p[0] < p[1]));
        let r = moment_residual(&target.basis.transpose(), &quad.nodes, &quad.weights, &target.moments);
        assert!(r.norm() / target.moments.norm() <= 1e-9);
    }

    #[test]
    fn nnls_recovers_full_weights_on_a_complete_target() {
        let mesh = Mesh::uniform_1d(3, (0.0, 1.0), BoundaryKind::Periodic).unwrap();
        let ops = GlobalOperators::assemble(&mesh, 2).unwrap();
        let nn = ops.num_nodes();
        let x = ops.coordinate(0);
        let raw = DMatrix::from_fn(nn, nn, |i, j| if i == j { 1.0 } else { 0.1 * (x[i] * (j + 1) as f64).sin() });
        let basis = mass_orthonormal(&raw, &ops.weights);
        let target = build_target_space(&basis.modes, &ops.weights, 1e-10);
        assert_eq!(target.basis.ncols(), nn);
        let x = nnls(&target.basis.transpose(), &target.moments, &[]).unwrap();
        for (a, b) in x.iter().zip(&ops.weights) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn test_basis_rank_and_constant_case() {
        let mesh = Mesh::uniform_1d(16, (-1.0, 1.0), BoundaryKind::Periodic).unwrap();
        let ops = GlobalOperators::assemble(&mesh, 3).unwrap();
        let constant = DMatrix::from_element(ops.num_nodes(), 1, 1.0 / 2f64.sqrt());
        assert_eq!(build_test_basis(&constant, &ops.weights, &ops.q[0], TestBasisKind::Dg).ncols(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let random = DMatrix::from_fn(ops.num_nodes(), 5, |_, _| rng.random_range(-1.0..1.0));
        let vt = build_test_basis(&random, &ops.weights, &ops.q[0], TestBasisKind::Dg);
        assert!(vt.ncols() <= 11);
        assert!((vt.tr_mul(&vt) - DMatrix::identity(vt.ncols(), vt.ncols())).norm() < 1e-12);
    }

    #[test]
    fn fvm_and_dg_test_bases_coincide_for_scalar_mass() {
        let mesh = Mesh::uniform_1d(40, (-1.0, 1.0), BoundaryKind::Periodic).unwrap();
        let ops = GlobalOperators::assemble(&mesh, 0).unwrap();
        let basis = smooth_basis(&ops, 4);
        let a = build_test_basis(&basis.modes, &ops.weights, &ops.q[0], TestBasisKind::Dg);
        let b = build_test_basis(&basis.modes, &ops.weights, &ops.q[0], TestBasisKind::Fvm);
        assert_eq!(a.ncols(), b.ncols());
        // same range: projecting one onto the other loses nothing
        let resid = &b - &a * a.tr_mul(&b);
        assert!(resid.norm() < 1e-10);
    }

    #[test]
    fn ideal_hyperreduction_is_orthogonal_to_the_basis() {
        let mesh = Mesh::uniform_1d(16, (-1.0, 1.0), BoundaryKind::Periodic).unwrap();
        let ops = GlobalOperators::assemble(&mesh, 3).unwrap();
        let basis = smooth_basis(&ops, 6);
        assert!(ideal_orthogonality_error(&ops, &basis.modes, TestBasisKind::Dg).unwrap() <= 1e-10);
        assert!(ideal_orthogonality_error(&ops, &basis.modes, TestBasisKind::Fvm).unwrap() > 1e-4);
    }

    #[test]
    fn full_test_basis_reproduces_q() {
        let mesh = Mesh::uniform_1d(4, (0.0, 1.0), BoundaryKind::Weak).unwrap();
        let ops = GlobalOperators::assemble(&mesh, 2).unwrap();
        let nn = ops.num_nodes();
        let quad = HyperReducedQuadrature::ideal(&ops.weights);
        let (q_bar, _) = hyperreduced_q(&ops.q[0], &DMatrix::identity(nn, nn), &quad).unwrap();
        assert!((q_bar - ops.q[0].to_dense()).norm() < 1e-13);
    }

    fn check_structure(ops: &GlobalOperators, hr: &HyperReducedOperators) {
        let nv = hr.quadrature.len();
        for d in 0..ops.dim {
            let qb = &hr.q_bar[d];
            let scale = hr.q_h[d].amax().max(1.0);
            let b = hr.boundary_scaling(d);
            let e = &hr.extrapolation[d];
            let gen = qb + qb.transpose() - e.transpose() * DMatrix::from_diagonal(&DVector::from_vec(b.clone())) * e;
            if ops.boundary.is_empty() {
                assert!((qb + qb.transpose()).amax() < 1e-11 * scale);
            } else if ops.dim == 1 {
                assert!(gen.amax() < 1e-11 * scale, "generalized SBP {}", gen.amax());
            }
            let qh = &hr.q_h[d];
            let mut bh = DMatrix::zeros(qh.nrows(), qh.ncols());
            for (k, &bk) in b.iter().enumerate() {
                bh[(nv + k, nv + k)] = bk;
            }
            assert!((qh + qh.transpose() - bh).amax() < 1e-11 * scale);
            let rows = qh * DVector::from_element(qh.ncols(), 1.0);
            assert!(rows.amax() < 1e-10 * scale, "row sums {}", rows.amax());
            // boundary condition 1ᵀB̄V̄_bt = 1ᵀQV_t
            let vt = &hr.test_bases[d];
            let lhs = vt.select_rows(hr.boundary_nodes.iter()).tr_mul(&DVector::from_vec(b)).transpose();
            let rhs = DVector::from_element(ops.num_nodes(), 1.0).transpose() * ops.q[d].to_dense() * vt;
            assert!((lhs - rhs).amax() < 1e-10);
        }
    }

    #[test]
    fn periodic_operators_are_skew_with_zero_row_sums() {
        let mesh = Mesh::uniform_1d(24, (-1.0, 1.0), BoundaryKind::Periodic).unwrap();
        let ops = GlobalOperators::assemble(&mesh, 3).unwrap();
        let basis = smooth_basis(&ops, 5);
        let hr = hyperreduce(&ops, &basis, &HyperReductionOptions::default()).unwrap();
        assert!(hr.boundary_points.is_empty());
        check_structure(&ops, &hr);
    }

    #[test]
    fn weak_boundary_operators_1d_and_2d() {
        let mesh = Mesh::uniform_1d(24, (0.0, 1.0), BoundaryKind::Weak).unwrap();
        let ops = GlobalOperators::assemble(&mesh, 3).unwrap();
        let hr = hyperreduce(&ops, &smooth_basis(&ops, 5), &HyperReductionOptions::default()).unwrap();
        assert_eq!(hr.boundary_points, vec![0, 1]);
        let qh = &hr.q_h[0];
        let nv = hr.quadrature.len();
        assert!((qh[(nv, nv)] + 0.5).abs() < 1e-15 && (qh[(nv + 1, nv + 1)] - 0.5).abs() < 1e-15);
        check_structure(&ops, &hr);

        let mesh = Mesh::uniform_2d([4, 4], [(-1.0, 1.0); 2], [BoundaryKind::Weak; 2]).unwrap();
        let ops = GlobalOperators::assemble(&mesh, 3).unwrap();
        let hr = hyperreduce(&ops, &smooth_basis(&ops, 4), &HyperReductionOptions::default()).unwrap();
        let moments: usize = hr.test_bases.iter().map(|v| v.ncols()).sum();
        assert!(hr.boundary_points.len() <= moments);
        assert!(hr.boundary_weights.iter().all(|&w| w >= 0.0));
        check_structure(&ops, &hr);
    }

    #[test]
    fn stabilization_restores_rank() {
        let mesh = Mesh::uniform_1d(16, (-1.0, 1.0), BoundaryKind::Periodic).unwrap();
        let ops = GlobalOperators::assemble(&mesh, 3).unwrap();
        let basis = smooth_basis(&ops, 4);
        let target = build_target_space(&basis.modes, &ops.weights, 1e-10);
        let vt = build_test_basis(&basis.modes, &ops.weights, &ops.q[0], TestBasisKind::Dg);
        let start = HyperReducedQuadrature {
            nodes: vec![3],
            weights: vec![2.0],
            residual: 1.0,
        };
        let quad = stabilize_quadrature(start, std::slice::from_ref(&vt), &target, &ops.weights, 1e8).unwrap();
        assert!(quad.len() >= vt.ncols());
        assert!(condition(&test_mass(&vt, &quad)) <= 1e8);
        assert!(quad.weights.iter().all(|&w| w > 0.0));

        let good = empirical_cubature(&target, &ops.weights, 1e-7).unwrap();
        let good = stabilize_quadrature(good, std::slice::from_ref(&vt), &target, &ops.weights, 1e8).unwrap();
        let again = stabilize_quadrature(good.clone(), std::slice::from_ref(&vt), &target, &ops.weights, 1e8).unwrap();
        assert_eq!(good, again);
    }

    #[test]
    fn rank_one_update_matches_dense_eigenvalues() {
        let lambda = [0.1, 0.5, 2.0];
        let z = [0.3, -0.2, 0.7];
        let m = DMatrix::from_diagonal(&DVector::from_row_slice(&lambda)) + DVector::from_row_slice(&z) * DVector::from_row_slice(&z).transpose();
        let exact = m.symmetric_eigen().eigenvalues.min();
        assert!((rank_one_min_eigenvalue(&lambda, &z) - exact).abs() < 1e-12);
        // a zero component leaves that eigenvalue in place
        assert!((rank_one_min_eigenvalue(&lambda, &[0.0, 1.0, 1.0]) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn caratheodory_small_cases() {
        let v = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let (w, idx) = caratheodory_prune(&v, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((w, idx), (vec![1.0, 2.0, 3.0], vec![0, 1, 2]));

        let ones = DMatrix::from_element(5, 1, 1.0);
        let (w, idx) = caratheodory_prune(&ones, &[0.2; 5]).unwrap();
        assert_eq!(idx.len(), 1);
        assert!((w[0] - 1.0).abs() < 1e-15);

        // a duplicated node collapses onto one copy
        let dup = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 1.0, 0.5, 1.0, -0.5]);
        let (w, idx) = caratheodory_prune(&dup, &[0.3, 0.2, 0.5]).unwrap();
        assert_eq!(idx.len(), 2);
        assert!(idx.contains(&2));
        let merged: f64 = w.iter().zip(&idx).filter(|(_, &i)| i < 2).map(|(w, _)| w).sum();
        assert!((merged - 0.5).abs() < 1e-15);

        assert!(matches!(
            caratheodory_prune(&ones, &[0.2, -0.1, 0.2, 0.2, 0.2]),
            Err(EsdgError::NegativeWeight { index: 1, .. })
        ));
    }

    #[test]
    fn caratheodory_random_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v = DMatrix::from_fn(40, 7, |_, _| rng.random_range(-1.0..1.0));
        let w: Vec<f64> = (0..40).map(|_| rng.random_range(0.1..1.0)).collect();
        let (wp, idx) = caratheodory_prune(&v, &w).unwrap();
        assert_eq!(idx.len(), 7);
        let before = v.tr_mul(&DVector::from_vec(w));
        let after = v.select_rows(idx.iter()).tr_mul(&DVector::from_vec(wp.clone()));
        assert!((before.clone() - after).norm() <= 1e-12 * before.norm());
        assert!(wp.iter().all(|&x| x >= 0.0));
    }
}
