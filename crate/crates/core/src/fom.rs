//! Entropy-conservative full-order model: flux differencing over the sparsity
//! pattern of the global SBP operators, weakly imposed boundary states and
//! BR-1 artificial viscosity.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{EsdgError, Result};
use crate::linalg::CsrMatrix;
use crate::operators::GlobalOperators;
use crate::physics::{ConservationLaw, CACHE_LEN, MAX_COMPONENTS};
use crate::timestepping::{frame_times, integrate, IntegratorOptions, StepStats};

/// Pair count above which two-point fluxes are evaluated on the rayon pool.
const PARALLEL_PAIRS: usize = 16_384;

/// Exterior state used at weakly imposed boundaries.
#[derive(Clone, Debug, PartialEq)]
pub enum BoundaryCondition {
    /// Reflecting wall: velocity negated, density and pressure copied.
    Mirror,
    /// Fixed exterior states, node-major, one per boundary point.
    Prescribed(Vec<f64>),
}

impl BoundaryCondition {
    /// Exterior state for boundary point `point` with interior state `u`.
    pub fn exterior_state(&self, law: &ConservationLaw, point: usize, u: &[f64], out: &mut [f64]) -> Result<()> {
        let n = law.num_components();
        match self {
            BoundaryCondition::Mirror => law.mirror_state(u, out),
            BoundaryCondition::Prescribed(states) => {
                out[..n].copy_from_slice(&states[point * n..(point + 1) * n]);
                Ok(())
            }
        }
    }
}

/// One off-diagonal entry `a = (Q - Qᵀ)_ij` with `i < j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FluxPair {
    pub i: usize,
    pub j: usize,
    pub a: f64,
}

/// Strictly upper entries of a skew-symmetric matrix.
pub fn skew_pairs(skew: &CsrMatrix) -> Vec<FluxPair> {
    skew.triplets()
        .filter(|&(i, j, _)| i < j)
        .map(|(i, j, a)| FluxPair { i, j, a })
        .collect()
}

#[derive(Clone, Debug)]
pub struct FomProblem {
    pub law: ConservationLaw,
    pub ops: GlobalOperators,
    pub viscosity: f64,
    pub boundary: Option<BoundaryCondition>,
    pairs: Vec<Vec<FluxPair>>,
    q_transpose: Vec<CsrMatrix>,
}

impl FomProblem {
    pub fn new(law: ConservationLaw, ops: GlobalOperators, viscosity: f64, boundary: Option<BoundaryCondition>) -> Result<Self> {
        if law.dim() != ops.dim {
            return Err(EsdgError::ShapeMismatch(format!(
                "{} is {}D but the mesh is {}D",
                law.name(),
                law.dim(),
                ops.dim
            )));
        }
        if !(viscosity >= 0.0) {
            return Err(EsdgError::config("viscosity", format!("must be nonnegative, got {viscosity}")));
        }
        if !ops.boundary.is_empty() {
            match &boundary {
                None => {
                    return Err(EsdgError::config("boundary", "weak boundary faces need an exterior-state rule"));
                }
                Some(BoundaryCondition::Prescribed(s)) if s.len() != ops.boundary.len() * law.num_components() => {
                    return Err(EsdgError::ShapeMismatch(format!(
                        "{} prescribed values for {} boundary points",
                        s.len(),
                        ops.boundary.len()
                    )));
                }
                Some(BoundaryCondition::Mirror) if law.is_symmetric() => {
                    return Err(EsdgError::config("boundary", "mirror walls apply to the Euler equations only"));
                }
                _ => {}
            }
        }
        let pairs = (0..ops.dim).map(|d| skew_pairs(&ops.skew(d))).collect();
        let q_transpose = ops.q.iter().map(|q| q.transpose()).collect();
        Ok(FomProblem {
            law,
            ops,
            viscosity,
            boundary,
            pairs,
            q_transpose,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.ops.num_nodes()
    }

    pub fn state_len(&self) -> usize {
        self.num_nodes() * self.law.num_components()
    }

    pub fn pairs(&self, dir: usize) -> &[FluxPair] {
        &self.pairs[dir]
    }

    /// Evaluates a function of position at every node, component-major.
    pub fn project_initial<F>(&self, init: F) -> Vec<f64>
    where
        F: Fn(&[f64]) -> Vec<f64>,
    {
        let nn = self.num_nodes();
        let n = self.law.num_components();
        let mut u = vec![0.0; nn * n];
        let mut x = [0.0; 2];
        for i in 0..nn {
            for d in 0..self.ops.dim {
                x[d] = self.ops.coords[(i, d)];
            }
            let s = init(&x[..self.ops.dim]);
            for c in 0..n {
                u[c * nn + i] = s[c];
            }
        }
        u
    }

    /// Weak-form convective residual `-Σ_i [((Q_i - Q_iᵀ) ∘ F_i) 1 + B_i f*_i]`.
    pub fn convective_residual(&self, u: &[f64]) -> Result<Vec<f64>> {
        let nodal = to_node_major(&self.law, u, self.num_nodes())?;
        let mut r = vec![0.0; u.len()];
        flux_differencing(&self.law, &nodal, &self.pairs, &mut r);
        if let Some(bc) = &self.boundary {
            boundary_flux(&self.law, &self.ops, bc, &nodal, &mut r)?;
        }
        Ok(r)
    }

    /// Weak-form BR-1 viscous residual `-ε Σ_i Q_iᵀ M⁻¹ Q_i u`.
    pub fn viscous_residual(&self, u: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; u.len()];
        if self.viscosity == 0.0 {
            return r;
        }
        let nn = self.num_nodes();
        let mut tmp = vec![0.0; nn];
        let mut acc = vec![0.0; nn];
        for c in 0..self.law.num_components() {
            let uc = &u[c * nn..(c + 1) * nn];
            for d in 0..self.ops.dim {
                self.ops.q[d].mul_vec(uc, &mut tmp);
                tmp.iter_mut().zip(&self.ops.weights).for_each(|(t, w)| *t /= w);
                self.q_transpose[d].mul_vec(&tmp, &mut acc);
                for (ri, a) in r[c * nn..(c + 1) * nn].iter_mut().zip(&acc) {
                    *ri -= self.viscosity * a;
                }
            }
        }
        r
    }

    pub fn residual(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut r = self.convective_residual(u)?;
        if self.viscosity > 0.0 {
            for (a, b) in r.iter_mut().zip(self.viscous_residual(u)) {
                *a += b;
            }
        }
        Ok(r)
    }

    /// `du/dt = M⁻¹ r(u)`.
    pub fn rhs(&self, u: &[f64], du: &mut [f64]) -> Result<()> {
        let r = self.residual(u)?;
        let nn = self.num_nodes();
        for (k, (d, v)) in du.iter_mut().zip(r).enumerate() {
            *d = v / self.ops.weights[k % nn];
        }
        Ok(())
    }

    /// Strong-form convective residual `-Σ_i [2 (Q_i ∘ F_i) 1 + B_i (f*_i - f_i(u))]`,
    /// evaluated with dense row loops over the stored entries of `Q_i`.
    pub fn convective_residual_strong(&self, u: &[f64]) -> Result<Vec<f64>> {
        let nn = self.num_nodes();
        let n = self.law.num_components();
        let nodal = to_node_major(&self.law, u, nn)?;
        let mut r = vec![0.0; u.len()];
        let mut f = [0.0; MAX_COMPONENTS];
        for d in 0..self.ops.dim {
            for (i, j, q) in self.ops.q[d].triplets() {
                self.law
                    .ec_flux(&nodal[i * n..(i + 1) * n], &nodal[j * n..(j + 1) * n], d, &mut f);
                for c in 0..n {
                    r[c * nn + i] -= 2.0 * q * f[c];
                }
            }
        }
        if let Some(bc) = &self.boundary {
            let mut ext = [0.0; MAX_COMPONENTS];
            let mut fu = [0.0; MAX_COMPONENTS];
            for (k, bp) in self.ops.boundary.iter().enumerate() {
                let ui = &nodal[bp.node * n..(bp.node + 1) * n];
                bc.exterior_state(&self.law, k, ui, &mut ext)?;
                for d in 0..self.ops.dim {
                    let scale = bp.normal[d] * bp.weight;
                    if scale == 0.0 {
                        continue;
                    }
                    self.law.ec_flux(ui, &ext[..n], d, &mut f);
                    self.law.flux(ui, d, &mut fu);
                    for c in 0..n {
                        r[c * nn + bp.node] -= scale * (f[c] - fu[c]);
                    }
                }
            }
        }
        Ok(r)
    }
}

/// Transposes a component-major state to node-major, checking admissibility.
pub(crate) fn to_node_major(law: &ConservationLaw, u: &[f64], nn: usize) -> Result<Vec<f64>> {
    let n = law.num_components();
    if u.len() != n * nn {
        return Err(EsdgError::ShapeMismatch(format!(
            "state has {} entries, expected {}",
            u.len(),
            n * nn
        )));
    }
    let mut out = vec![0.0; u.len()];
    for i in 0..nn {
        for c in 0..n {
            out[i * n + c] = u[c * nn + i];
        }
        law.check_admissible(&out[i * n..(i + 1) * n], i)?;
    }
    Ok(out)
}

/// Accumulates `-((Q - Qᵀ) ∘ F) 1` into the component-major `r`, evaluating each
/// pair's flux once. Fluxes may be computed in parallel; accumulation is serial
/// and in a fixed order, so the result does not depend on the thread count.
pub(crate) fn flux_differencing(law: &ConservationLaw, nodal: &[f64], pairs: &[Vec<FluxPair>], r: &mut [f64]) {
    let n = law.num_components();
    let nn = nodal.len() / n;
    let mut cache = vec![0.0; nn * CACHE_LEN];
    for (u, c) in nodal.chunks_exact(n).zip(cache.chunks_exact_mut(CACHE_LEN)) {
        law.flux_cache(u, c);
    }
    let cache = &cache;
    // Node-major accumulation keeps each pair's updates within two cache lines.
    let mut acc = vec![0.0; nn * n];
    for (d, list) in pairs.iter().enumerate() {
        let eval = |p: &FluxPair| {
            let mut f = [0.0; MAX_COMPONENTS];
            law.ec_flux_cached(
                &cache[p.i * CACHE_LEN..(p.i + 1) * CACHE_LEN],
                &cache[p.j * CACHE_LEN..(p.j + 1) * CACHE_LEN],
                d,
                &mut f,
            );
            f
        };
        let mut scatter = |p: &FluxPair, f: &[f64; MAX_COMPONENTS]| {
            for c in 0..n {
                let v = p.a * f[c];
                acc[p.i * n + c] -= v;
                acc[p.j * n + c] += v;
            }
        };
        if list.len() >= PARALLEL_PAIRS && rayon::current_num_threads() > 1 {
            let fluxes: Vec<[f64; MAX_COMPONENTS]> = list.par_iter().map(eval).collect();
            for (p, f) in list.iter().zip(&fluxes) {
                scatter(p, f);
            }
        } else {
            for p in list {
                scatter(p, &eval(p));
            }
        }
    }
    for i in 0..nn {
        for c in 0..n {
            r[c * nn + i] += acc[i * n + c];
        }
    }
}

fn boundary_flux(law: &ConservationLaw, ops: &GlobalOperators, bc: &BoundaryCondition, nodal: &[f64], r: &mut [f64]) -> Result<()> {
    let n = law.num_components();
    let nn = nodal.len() / n;
    let mut ext = [0.0; MAX_COMPONENTS];
    let mut f = [0.0; MAX_COMPONENTS];
    for (k, bp) in ops.boundary.iter().enumerate() {
        let ui = &nodal[bp.node * n..(bp.node + 1) * n];
        bc.exterior_state(law, k, ui, &mut ext)?;
        law.check_admissible(&ext[..n], bp.node)?;
        for d in 0..ops.dim {
            let scale = bp.normal[d] * bp.weight;
            if scale == 0.0 {
                continue;
            }
            law.ec_flux(ui, &ext[..n], d, &mut f);
            for c in 0..n {
                r[c * nn + bp.node] -= scale * f[c];
            }
        }
    }
    Ok(())
}

/// Saved solution frames with integration statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// One state per frame (component-major nodal values for the full-order
    /// model, reduced coefficients for reduced models).
    pub states: Vec<Vec<f64>>,
    pub stats: StepStats,
    pub wall_seconds: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().map(|s| s.as_slice()).unwrap_or(&[])
    }
}

/// Integrates the full-order model from `u0` and records `frames` equally spaced frames.
pub fn integrate_fom(problem: &FomProblem, u0: &[f64], t_final: f64, frames: usize, opts: &IntegratorOptions) -> Result<Trajectory> {
    if !(t_final > 0.0) {
        return Err(EsdgError::config("t_final", "must be positive"));
    }
    let times = frame_times(t_final, frames);
    let start = Instant::now();
    let (states, stats) = integrate(|_, u, du| problem.rhs(u, du), u0, &times, opts)?;
    Ok(Trajectory {
        times,
        states,
        stats,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Entropy bookkeeping at one state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EntropyDiagnostics {
    /// `1ᵀ M S(u)`.
    pub total_entropy: f64,
    /// `vᵀ(convective residual)` corrected by the boundary entropy flux; zero
    /// for an entropy-conservative scheme.
    pub convective: f64,
    /// `vᵀ(-viscous residual)`, the entropy dissipated by viscosity.
    pub viscous_dissipation: f64,
}

pub fn entropy_diagnostics(problem: &FomProblem, u: &[f64]) -> Result<EntropyDiagnostics> {
    let law = &problem.law;
    let n = law.num_components();
    let nn = problem.num_nodes();
    let nodal = to_node_major(law, u, nn)?;
    let mut v = vec![0.0; u.len()];
    let mut vi = [0.0; MAX_COMPONENTS];
    let mut total_entropy = 0.0;
    for i in 0..nn {
        let ui = &nodal[i * n..(i + 1) * n];
        total_entropy += problem.ops.weights[i] * law.entropy(ui);
        law.entropy_variables(ui, &mut vi);
        for c in 0..n {
            v[c * nn + i] = vi[c];
        }
    }
    let conv = problem.convective_residual(u)?;
    let mut convective: f64 = v.iter().zip(&conv).map(|(a, b)| a * b).sum();
    if let Some(bc) = &problem.boundary {
        convective += boundary_entropy_flux(law, &problem.ops, bc, &nodal)?;
    }
    let visc = problem.viscous_residual(u);
    let viscous_dissipation = -v.iter().zip(&visc).map(|(a, b)| a * b).sum::<f64>();
    Ok(EntropyDiagnostics {
        total_entropy,
        convective,
        viscous_dissipation,
    })
}

/// `Σ_b w_b n_b^i (v(u_b)ᵀ f*_i - ψ^i(u_b))`, the entropy flux leaving through
/// the boundary; `vᵀ(convective residual)` equals minus this value.
pub(crate) fn boundary_entropy_flux(law: &ConservationLaw, ops: &GlobalOperators, bc: &BoundaryCondition, nodal: &[f64]) -> Result<f64> {
    let n = law.num_components();
    let mut ext = [0.0; MAX_COMPONENTS];
    let mut f = [0.0; MAX_COMPONENTS];
    let mut vb = [0.0; MAX_COMPONENTS];
    let mut total = 0.0;
    for (k, bp) in ops.boundary.iter().enumerate() {
        let ub = &nodal[bp.node * n..(bp.node + 1) * n];
        bc.exterior_state(law, k, ub, &mut ext)?;
        law.entropy_variables(ub, &mut vb);
        for d in 0..ops.dim {
            let scale = bp.normal[d] * bp.weight;
            if scale == 0.0 {
                continue;
            }
            law.ec_flux(ub, &ext[..n], d, &mut f);
            let vf: f64 = (0..n).map(|c| vb[c] * f[c]).sum();
            total += scale * (vf - law.potential(ub, d));
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{BoundaryKind, Mesh};
    use crate::physics::{entropy_pair_burgers, entropy_pair_euler, euler_conservative};

    fn periodic_burgers(k: usize, p: usize, eps: f64) -> FomProblem {
        let mesh = Mesh::uniform_1d(k, (-1.0, 1.0), BoundaryKind::Periodic).unwrap();
        let ops = GlobalOperators::assemble(&mesh, p).unwrap();
        FomProblem::new(entropy_pair_burgers(), ops, eps, None).unwrap()
    }

    #[test]
    fn constant_state_is_steady() {
        let prob = periodic_burgers(6, 3, 0.0);
        let u = vec![0.7; prob.state_len()];
        let mut du = vec![1.0; u.len()];
        prob.rhs(&u, &mut du).unwrap();
        assert!(du.iter().all(|d| d.abs() < 1e-13));
    }

    #[test]
    fn periodic_burgers_conserves_entropy_per_evaluation() {
        let prob = periodic_burgers(8, 3, 0.0);
        let u = prob.project_initial(|x| vec![0.5 - (std::f64::consts::PI * x[0]).sin()]);
        let r = prob.convective_residual(&u).unwrap();
        let contraction: f64 = u.iter().zip(&r).map(|(a, b)| a * b).sum();
        assert!(contraction.abs() < 1e-12);
    }

    #[test]
    fn strong_and_skew_forms_agree() {
        let mesh = Mesh::uniform_1d(5, (0.0, 1.0), BoundaryKind::Weak).unwrap();
        let ops = GlobalOperators::assemble(&mesh, 3).unwrap();
        let law = entropy_pair_euler(1, 1.4).unwrap();
        let prob = FomProblem::new(law, ops, 0.0, Some(BoundaryCondition::Mirror)).unwrap();
        let u = prob.project_initial(|x| euler_conservative(1.0 + 0.3 * x[0], &[0.2 - x[0] * 0.3], 1.0 + x[0] * x[0], 1.4));
        let a = prob.convective_residual(&u).unwrap();
        let b = prob.convective_residual_strong(&u).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn viscosity_quadratic_form_is_a_norm() {
        let prob = periodic_burgers(6, 2, 0.1);
        let u = prob.project_initial(|x| vec![(3.0 * x[0]).cos() + x[0]]);
        let visc = prob.viscous_residual(&u);
        let lhs = -u.iter().zip(&visc).map(|(a, b)| a * b).sum::<f64>() / 0.1;
        let mut qu = vec![0.0; u.len()];
        prob.ops.q[0].mul_vec(&u, &mut qu);
        let rhs: f64 = qu.iter().zip(&prob.ops.weights).map(|(q, w)| q * q / w).sum();
        assert!((lhs - rhs).abs() < 1e-12 * rhs.max(1.0));
        assert!(lhs >= 0.0);
        let constant = vec![2.0; u.len()];
        assert!(prob.viscous_residual(&constant).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn viscosity_approximates_the_laplacian() {
        let pi = std::f64::consts::PI;
        let max_error = |k: usize| {
            let prob = periodic_burgers(k, 3, 1.0);
            let u = prob.project_initial(|x| vec![(pi * x[0]).sin()]);
            let visc = prob.viscous_residual(&u);
            let x = prob.ops.coordinate(0);
            visc.iter()
                .zip(&x)
                .zip(&prob.ops.weights)
                .map(|((v, x), w)| (v / w + pi * pi * (pi * x).sin()).abs())
                .fold(0.0, f64::max)
        };
        let coarse = max_error(32);
        let fine = max_error(64);
        assert!(coarse < 5e-3, "{coarse}");
        assert!(fine < coarse / 3.0, "{coarse} -> {fine}");
    }

    #[test]
    fn mirror_wall_has_zero_entropy_functional() {
        let mesh = Mesh::uniform_1d(16, (0.0, 1.0), BoundaryKind::Weak).unwrap();
        let ops = GlobalOperators::assemble(&mesh, 3).unwrap();
        let law = entropy_pair_euler(1, 1.4).unwrap();
        let prob = FomProblem::new(law, ops, 0.0, Some(BoundaryCondition::Mirror)).unwrap();
        let u = prob.project_initial(|x| {
            let g = (-100.0 * (x[0] - 0.5).powi(2)).exp();
            let rho = 2.0 + 0.5 * g;
            euler_conservative(rho, &[0.1 * g + 0.05], rho.powf(1.4), 1.4)
        });
        let diag = entropy_diagnostics(&prob, &u).unwrap();
        assert!(diag.convective.abs() < 1e-11);
    }

    #[test]
    fn prescribed_states_balance_the_boundary_entropy_flux() {
        // Unlike a mirror state, these exterior states carry entropy across
        // the boundary, so the balance is checked against a nonzero flux.
        let mesh = Mesh::uniform_1d(12, (-0.5, 0.5), BoundaryKind::Weak).unwrap();
        let ops = GlobalOperators::assemble(&mesh, 3).unwrap();
        let law = entropy_pair_euler(1, 1.4).unwrap();
        let mut ext = euler_conservative(1.3, &[0.4], 0.9, 1.4);
        ext.extend(euler_conservative(0.2, &[-0.3], 0.15, 1.4));
        let prob = FomProblem::new(law, ops, 0.0, Some(BoundaryCondition::Prescribed(ext))).unwrap();
        let u = prob.project_initial(|x| euler_conservative(0.6 - 0.5 * x[0], &[0.1 + x[0]], 0.5 - 0.4 * x[0], 1.4));
        let nodal = to_node_major(&prob.law, &u, prob.num_nodes()).unwrap();
        let outflow = boundary_entropy_flux(&prob.law, &prob.ops, prob.boundary.as_ref().unwrap(), &nodal).unwrap();
        assert!(outflow.abs() > 1e-3, "{outflow}");
        let diag = entropy_diagnostics(&prob, &u).unwrap();
        assert!(diag.convective.abs() < 1e-12 * outflow.abs().max(1.0), "{}", diag.convective);
    }

    #[test]
    fn inadmissible_state_reports_node() {
        let mesh = Mesh::uniform_1d(4, (0.0, 1.0), BoundaryKind::Periodic).unwrap();
        let ops = GlobalOperators::assemble(&mesh, 1).unwrap();
        let law = entropy_pair_euler(1, 1.4).unwrap();
        let prob = FomProblem::new(law, ops, 0.0, None).unwrap();
        let mut u = prob.project_initial(|_| euler_conservative(1.0, &[0.0], 1.0, 1.4));
        u[5] = -1.0;
        let mut du = vec![0.0; u.len()];
        assert!(matches!(prob.rhs(&u, &mut du), Err(EsdgError::Inadmissible { node: 5, .. })));
    }
}
