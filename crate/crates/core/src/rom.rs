//! Entropy-stable reduced-order models: Galerkin projection with entropy
//! projection on the full-order quadrature, and the hyper-reduced model built
//! on hybridized SBP operators.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{EsdgError, Result};
use crate::fom::{to_node_major, EntropyDiagnostics, FomProblem, Trajectory};
use crate::hyperreduction::HyperReducedOperators;
use crate::physics::{ConservationLaw, CACHE_LEN, MAX_COMPONENTS};
use crate::pod::ReducedBasis;
use crate::timestepping::{frame_times, integrate, IntegratorOptions};

/// Discretization of the artificial viscosity in the reduced model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViscosityForm {
    /// `-ε K_N u_N` with the precomputed BR-1 stiffness.
    #[default]
    Br1,
    /// `-ε Σ_i V_NᵀQ_iᵀM⁻¹H Q_iV_N v_N`, dissipative by construction.
    EntropyStable,
}

/// Entropy-projected states of one reduced solution.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedState {
    /// Projected entropy variables `v_N`, component-major.
    pub v_n: Vec<f64>,
    /// `ũ` at the evaluation points, node-major: every full-order node for the
    /// Galerkin model, hyper-reduced volume nodes then pruned boundary points
    /// for the hyper-reduced one.
    pub u_tilde: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct RomProblem {
    pub fom: FomProblem,
    pub basis: ReducedBasis,
    pub hr: Option<HyperReducedOperators>,
    pub viscosity_form: ViscosityForm,
    /// `M̄_N` (identity up to rounding without hyper-reduction).
    mass: DMatrix<f64>,
    mass_chol: Cholesky<f64, Dyn>,
    /// `P_N`, reduced coefficients from sampled nodal values.
    projector: DMatrix<f64>,
    /// `Σ_i (Q_iV_N)ᵀ M⁻¹ (Q_iV_N)`.
    stiffness: DMatrix<f64>,
    /// `Q_i V_N`.
    derivative_images: Vec<DMatrix<f64>>,
    /// `V̄_h`, or `V_N` without hyper-reduction.
    eval_basis: DMatrix<f64>,
    /// Row-major `Q̄_h^i - Q̄_h^iᵀ`, read above the diagonal only.
    hr_skew: Vec<Vec<f64>>,
}

fn lift(mat: &DMatrix<f64>, coeffs: &[f64], n: usize) -> Vec<f64> {
    let (rows, cols) = mat.shape();
    let mut out = vec![0.0; rows * n];
    for c in 0..n {
        let a = DVector::from_column_slice(&coeffs[c * cols..(c + 1) * cols]);
        out[c * rows..(c + 1) * rows].copy_from_slice((mat * a).as_slice());
    }
    out
}

fn restrict(mat: &DMatrix<f64>, values: &[f64], n: usize) -> Vec<f64> {
    let (rows, cols) = mat.shape();
    let mut out = vec![0.0; cols * n];
    for c in 0..n {
        let a = DVector::from_column_slice(&values[c * rows..(c + 1) * rows]);
        out[c * cols..(c + 1) * cols].copy_from_slice(mat.tr_mul(&a).as_slice());
    }
    out
}

fn dense_skew(q_h: &DMatrix<f64>) -> Vec<f64> {
    let n = q_h.nrows();
    let mut s = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            s[i * n + j] = q_h[(i, j)] - q_h[(j, i)];
        }
    }
    s
}

/// `r -= Σ_i ((S_i ∘ F_i) 1)` for dense skew matrices `S_i`, with `ũ`
/// node-major and `r` component-major.
fn dense_flux_differencing(law: &ConservationLaw, nodal: &[f64], skew: &[Vec<f64>], r: &mut [f64]) {
    let n = law.num_components();
    let nh = nodal.len() / n;
    let mut cache = vec![0.0; nh * CACHE_LEN];
    for (u, c) in nodal.chunks_exact(n).zip(cache.chunks_exact_mut(CACHE_LEN)) {
        law.flux_cache(u, c);
    }
    let mut acc = vec![0.0; nh * n];
    let mut f = [0.0; MAX_COMPONENTS];
    for (d, s) in skew.iter().enumerate() {
        for i in 0..nh {
            let ci = &cache[i * CACHE_LEN..(i + 1) * CACHE_LEN];
            let mut row = [0.0; MAX_COMPONENTS];
            for j in i + 1..nh {
                let a = s[i * nh + j];
                if a == 0.0 {
                    continue;
                }
                law.ec_flux_cached(ci, &cache[j * CACHE_LEN..(j + 1) * CACHE_LEN], d, &mut f);
                for c in 0..n {
                    row[c] += a * f[c];
                    acc[j * n + c] += a * f[c];
                }
            }
            for c in 0..n {
                acc[i * n + c] -= row[c];
            }
        }
    }
    for i in 0..nh {
        for c in 0..n {
            r[c * nh + i] += acc[i * n + c];
        }
    }
}

impl RomProblem {
    pub fn new(fom: FomProblem, basis: ReducedBasis, hr: Option<HyperReducedOperators>, viscosity_form: ViscosityForm) -> Result<Self> {
        let nn = fom.num_nodes();
        if basis.num_nodes() != nn {
            return Err(EsdgError::ShapeMismatch(format!(
                "basis has {} rows for {nn} nodes",
                basis.num_nodes()
            )));
        }
        let modes = &basis.modes;
        let (mass, projector, eval_basis, hr_skew) = match &hr {
            None => {
                let mut weighted = modes.clone();
                for (i, mut row) in weighted.row_iter_mut().enumerate() {
                    row *= fom.ops.weights[i];
                }
                (modes.tr_mul(&weighted), weighted.transpose(), modes.clone(), Vec::new())
            }
            Some(h) => {
                if h.dim() != fom.ops.dim || h.v_n.ncols() != basis.num_modes() {
                    return Err(EsdgError::ShapeMismatch("hyper-reduced operators do not match the basis".into()));
                }
                let mut weighted = h.v_n.clone();
                for (k, mut row) in weighted.row_iter_mut().enumerate() {
                    row *= h.quadrature.weights[k];
                }
                let mass = h.v_n.tr_mul(&weighted);
                let chol = mass
                    .clone()
                    .cholesky()
                    .ok_or_else(|| EsdgError::Singular("hyper-reduced mass matrix is not positive definite".into()))?;
                let projector = chol.solve(&weighted.transpose());
                let skew = h.q_h.iter().map(dense_skew).collect();
                (mass, projector, h.v_h(), skew)
            }
        };
        let mass_chol = mass
            .clone()
            .cholesky()
            .ok_or_else(|| EsdgError::Singular("reduced mass matrix is not positive definite".into()))?;
        let derivative_images: Vec<DMatrix<f64>> = fom.ops.q.iter().map(|q| q.mul_dense(modes)).collect();
        let n = basis.num_modes();
        let mut stiffness = DMatrix::zeros(n, n);
        for g in &derivative_images {
            let mut scaled = g.clone();
            for (i, mut row) in scaled.row_iter_mut().enumerate() {
                row /= fom.ops.weights[i];
            }
            stiffness += g.tr_mul(&scaled);
        }
        stiffness = (&stiffness + stiffness.transpose()) * 0.5;
        Ok(RomProblem {
            fom,
            basis,
            hr,
            viscosity_form,
            mass,
            mass_chol,
            projector,
            stiffness,
            derivative_images,
            eval_basis,
            hr_skew,
        })
    }

    pub fn law(&self) -> &ConservationLaw {
        &self.fom.law
    }

    pub fn num_modes(&self) -> usize {
        self.basis.num_modes()
    }

    pub fn state_len(&self) -> usize {
        self.num_modes() * self.law().num_components()
    }

    pub fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }

    /// `K_N`.
    pub fn stiffness(&self) -> &DMatrix<f64> {
        &self.stiffness
    }

    /// `V_NᵀM u`, the initial reduced state of a nodal field.
    pub fn reduce(&self, u: &[f64]) -> Vec<f64> {
        self.basis.project(u, self.law().num_components())
    }

    /// Nodal values `V_N u_N` on the full-order mesh.
    pub fn reconstruct(&self, u_n: &[f64]) -> Vec<f64> {
        self.basis.lift(u_n, self.law().num_components())
    }

    /// Rows of `V_N` sampled where the entropy variables are evaluated.
    fn sampled_basis(&self) -> &DMatrix<f64> {
        match &self.hr {
            Some(h) => &h.v_n,
            None => &self.basis.modes,
        }
    }

    /// `v_N = P_N v(V̄_N u_N)` and `ũ = u(V̄_h v_N)`.
    pub fn entropy_projection(&self, u_n: &[f64]) -> Result<ProjectedState> {
        let law = self.law();
        let n = law.num_components();
        if u_n.len() != self.state_len() {
            return Err(EsdgError::ShapeMismatch(format!(
                "reduced state has {} entries, expected {}",
                u_n.len(),
                self.state_len()
            )));
        }
        let sampled = self.sampled_basis();
        let ns = sampled.nrows();
        let nodal = to_node_major(law, &lift(sampled, u_n, n), ns)?;
        let mut v = vec![0.0; ns * n];
        let mut vi = [0.0; MAX_COMPONENTS];
        for i in 0..ns {
            law.entropy_variables(&nodal[i * n..(i + 1) * n], &mut vi);
            for c in 0..n {
                v[c * ns + i] = vi[c];
            }
        }
        let v_n = restrict(&self.projector.transpose(), &v, n);
        let ne = self.eval_basis.nrows();
        let v_tilde = lift(&self.eval_basis, &v_n, n);
        let mut u_tilde = vec![0.0; ne * n];
        for i in 0..ne {
            for c in 0..n {
                vi[c] = v_tilde[c * ne + i];
            }
            law.check_admissible_entropy(&vi[..n], i)?;
            law.conservative_variables(&vi[..n], &mut u_tilde[i * n..(i + 1) * n]);
            law.check_admissible(&u_tilde[i * n..(i + 1) * n], i)?;
        }
        Ok(ProjectedState { v_n, u_tilde })
    }

    /// Skew-form convective residual in reduced coordinates (before the mass solve).
    pub fn convective_residual(&self, proj: &ProjectedState) -> Result<Vec<f64>> {
        let law = self.law();
        let n = law.num_components();
        let Some(h) = &self.hr else {
            let nn = self.fom.num_nodes();
            let mut comp = vec![0.0; nn * n];
            for i in 0..nn {
                for c in 0..n {
                    comp[c * nn + i] = proj.u_tilde[i * n + c];
                }
            }
            let r = self.fom.convective_residual(&comp)?;
            return Ok(restrict(&self.basis.modes, &r, n));
        };
        let nh = self.eval_basis.nrows();
        let nv = h.quadrature.len();
        let mut r = vec![0.0; nh * n];
        dense_flux_differencing(law, &proj.u_tilde, &self.hr_skew, &mut r);
        if let Some(bc) = &self.fom.boundary {
            let mut ext = [0.0; MAX_COMPONENTS];
            let mut f = [0.0; MAX_COMPONENTS];
            for (k, &point) in h.boundary_points.iter().enumerate() {
                let row = nv + k;
                let ub = &proj.u_tilde[row * n..(row + 1) * n];
                bc.exterior_state(law, point, ub, &mut ext)?;
                law.check_admissible(&ext[..n], h.boundary_nodes[k])?;
                for d in 0..h.dim() {
                    let scale = h.boundary_normals[k][d] * h.boundary_weights[k];
                    if scale == 0.0 {
                        continue;
                    }
                    law.ec_flux(ub, &ext[..n], d, &mut f);
                    for c in 0..n {
                        r[c * nh + row] -= scale * f[c];
                    }
                }
            }
        }
        Ok(restrict(&self.eval_basis, &r, n))
    }

    /// Strong-form hyper-reduced residual
    /// `-Σ_i [2 V̄_hᵀ(Q̄_h^i ∘ F^i) 1 + V̄_bᵀB̄_b^i(f*_i - f_i(ũ_b))]`.
    pub fn convective_residual_strong(&self, proj: &ProjectedState) -> Result<Vec<f64>> {
        let Some(h) = &self.hr else {
            return Err(EsdgError::config("hyperreduction", "the strong form needs hyper-reduced operators"));
        };
        let law = self.law();
        let n = law.num_components();
        let nh = self.eval_basis.nrows();
        let nv = h.quadrature.len();
        let mut r = vec![0.0; nh * n];
        let mut f = [0.0; MAX_COMPONENTS];
        for (d, qh) in h.q_h.iter().enumerate() {
            for i in 0..nh {
                for j in 0..nh {
                    let q = qh[(i, j)];
                    if q == 0.0 {
                        continue;
                    }
                    law.ec_flux(&proj.u_tilde[i * n..(i + 1) * n], &proj.u_tilde[j * n..(j + 1) * n], d, &mut f);
                    for c in 0..n {
                        r[c * nh + i] -= 2.0 * q * f[c];
                    }
                }
            }
        }
        if let Some(bc) = &self.fom.boundary {
            let mut ext = [0.0; MAX_COMPONENTS];
            let mut fu = [0.0; MAX_COMPONENTS];
            for (k, &point) in h.boundary_points.iter().enumerate() {
                let row = nv + k;
                let ub = &proj.u_tilde[row * n..(row + 1) * n];
                bc.exterior_state(law, point, ub, &mut ext)?;
                for d in 0..h.dim() {
                    let scale = h.boundary_normals[k][d] * h.boundary_weights[k];
                    law.ec_flux(ub, &ext[..n], d, &mut f);
                    law.flux(ub, d, &mut fu);
                    for c in 0..n {
                        r[c * nh + row] -= scale * (f[c] - fu[c]);
                    }
                }
            }
        }
        Ok(restrict(&self.eval_basis, &r, n))
    }

    /// Viscous residual in reduced coordinates; also returns the dissipated
    /// entropy `-v_Nᵀ(residual)`.
    pub fn viscous_residual(&self, u_n: &[f64], proj: &ProjectedState) -> Result<(Vec<f64>, f64)> {
        let eps = self.fom.viscosity;
        let n = self.law().num_components();
        let nm = self.num_modes();
        let mut r = vec![0.0; nm * n];
        if eps == 0.0 {
            return Ok((r, 0.0));
        }
        match self.viscosity_form {
            ViscosityForm::Br1 => {
                for c in 0..n {
                    let a = DVector::from_column_slice(&u_n[c * nm..(c + 1) * nm]);
                    let k = &self.stiffness * a;
                    for m in 0..nm {
                        r[c * nm + m] = -eps * k[m];
                    }
                }
            }
            ViscosityForm::EntropyStable => {
                let law = self.law();
                let nn = self.fom.num_nodes();
                let w = &self.fom.ops.weights;
                let v_full = lift(&self.basis.modes, &proj.v_n, n);
                let mut u_full = vec![0.0; nn * n];
                let mut vi = [0.0; MAX_COMPONENTS];
                for i in 0..nn {
                    for c in 0..n {
                        vi[c] = v_full[c * nn + i];
                    }
                    law.check_admissible_entropy(&vi[..n], i)?;
                    law.conservative_variables(&vi[..n], &mut u_full[i * n..(i + 1) * n]);
                }
                let mut h = [0.0; MAX_COMPONENTS * MAX_COMPONENTS];
                for g in &self.derivative_images {
                    let grad = lift(g, &proj.v_n, n);
                    let mut y = vec![0.0; nn * n];
                    for i in 0..nn {
                        law.entropy_jacobian(&u_full[i * n..(i + 1) * n], &mut h);
                        for a in 0..n {
                            let s: f64 = (0..n).map(|b| h[a * n + b] * grad[b * nn + i]).sum();
                            y[a * nn + i] = s / w[i];
                        }
                    }
                    for (ri, yi) in r.iter_mut().zip(restrict(g, &y, n)) {
                        *ri -= eps * yi;
                    }
                }
            }
        }
        let dissipation = -proj.v_n.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>();
        Ok((r, dissipation))
    }

    /// `du_N/dt = M̄_N⁻¹ (convective + viscous residual)`.
    pub fn rhs(&self, u_n: &[f64], du: &mut [f64]) -> Result<()> {
        let proj = self.entropy_projection(u_n)?;
        let mut r = self.convective_residual(&proj)?;
        if self.fom.viscosity > 0.0 {
            let (visc, _) = self.viscous_residual(u_n, &proj)?;
            r.iter_mut().zip(visc).for_each(|(a, b)| *a += b);
        }
        let nm = self.num_modes();
        for c in 0..self.law().num_components() {
            let b = DVector::from_column_slice(&r[c * nm..(c + 1) * nm]);
            du[c * nm..(c + 1) * nm].copy_from_slice(self.mass_chol.solve(&b).as_slice());
        }
        Ok(())
    }

    /// `Σ_b w_b n_b^i (ṽ_bᵀ f*_i - ψ^i(ũ_b))` over the boundary points in use.
    fn boundary_entropy_flux(&self, proj: &ProjectedState) -> Result<f64> {
        let law = self.law();
        let n = law.num_components();
        let Some(bc) = &self.fom.boundary else { return Ok(0.0) };
        let points: Vec<(usize, usize, [f64; 2], f64)> = match &self.hr {
            Some(h) => {
                let nv = h.quadrature.len();
                (0..h.boundary_points.len())
                    .map(|k| (h.boundary_points[k], nv + k, h.boundary_normals[k], h.boundary_weights[k]))
                    .collect()
            }
            None => self
                .fom
                .ops
                .boundary
                .iter()
                .enumerate()
                .map(|(k, bp)| (k, bp.node, bp.normal, bp.weight))
                .collect(),
        };
        let mut ext = [0.0; MAX_COMPONENTS];
        let mut f = [0.0; MAX_COMPONENTS];
        let mut vb = [0.0; MAX_COMPONENTS];
        let mut total = 0.0;
        for (point, row, normal, weight) in points {
            let ub = &proj.u_tilde[row * n..(row + 1) * n];
            bc.exterior_state(law, point, ub, &mut ext)?;
            law.entropy_variables(ub, &mut vb);
            for d in 0..self.fom.ops.dim {
                let scale = normal[d] * weight;
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

    /// Entropy bookkeeping for one reduced state. `convective` is
    /// `v_Nᵀ(convective residual)` plus the boundary entropy flux, and vanishes
    /// for an entropy-conservative discretization.
    pub fn diagnostics(&self, u_n: &[f64]) -> Result<EntropyDiagnostics> {
        let law = self.law();
        let n = law.num_components();
        let proj = self.entropy_projection(u_n)?;
        let conv = self.convective_residual(&proj)?;
        let convective = proj.v_n.iter().zip(&conv).map(|(a, b)| a * b).sum::<f64>() + self.boundary_entropy_flux(&proj)?;
        let viscous_dissipation = self.viscous_residual(u_n, &proj)?.1;
        let (sampled, weights): (&DMatrix<f64>, &[f64]) = match &self.hr {
            Some(h) => (&h.v_n, &h.quadrature.weights),
            None => (&self.basis.modes, &self.fom.ops.weights),
        };
        let ns = sampled.nrows();
        let nodal = to_node_major(law, &lift(sampled, u_n, n), ns)?;
        let total_entropy = (0..ns).map(|i| weights[i] * law.entropy(&nodal[i * n..(i + 1) * n])).sum();
        Ok(EntropyDiagnostics {
            total_entropy,
            convective,
            viscous_dissipation,
        })
    }
}

/// Integrates the reduced model from the reduced state `u_n0`.
pub fn integrate_rom(problem: &RomProblem, u_n0: &[f64], t_final: f64, frames: usize, opts: &IntegratorOptions) -> Result<Trajectory> {
    if !(t_final > 0.0) {
        return Err(EsdgError::config("t_final", "must be positive"));
    }
    let times = frame_times(t_final, frames);
    let start = Instant::now();
    let (states, stats) = integrate(|_, u, du| problem.rhs(u, du), u_n0, &times, opts)?;
    Ok(Trajectory {
        times,
        states,
        stats,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Relative mass-weighted L² error `‖u_ref - u‖ / ‖u_ref‖`, summed over components.
pub fn relative_l2_error(reference: &[f64], approx: &[f64], weights: &[f64]) -> Result<f64> {
    if reference.len() != approx.len() || weights.is_empty() || reference.len() % weights.len() != 0 {
        return Err(EsdgError::ShapeMismatch(format!(
            "states of length {} and {} with {} weights",
            reference.len(),
            approx.len(),
            weights.len()
        )));
    }
    let nn = weights.len();
    let mut num = 0.0;
    let mut den = 0.0;
    for (k, (a, b)) in reference.iter().zip(approx).enumerate() {
        let w = weights[k % nn];
        num += w * (a - b) * (a - b);
        den += w * a * a;
    }
    Ok(if den > 0.0 { (num / den).sqrt() } else { num.sqrt() })
}

/// Final-time error of a reduced trajectory against the full-order one.
pub fn rom_error(fom: &Trajectory, rom: &Trajectory, problem: &RomProblem) -> Result<f64> {
    if fom.times.len() != rom.times.len() || fom.times.iter().zip(&rom.times).any(|(a, b)| (a - b).abs() > 1e-12 * a.abs().max(1.0)) {
        return Err(EsdgError::ShapeMismatch("full-order and reduced frames differ".into()));
    }
    let lifted = problem.reconstruct(rom.final_state());
    relative_l2_error(fom.final_state(), &lifted, &problem.fom.ops.weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fom::{integrate_fom, BoundaryCondition};
    use crate::hyperreduction::{hyperreduce, HyperReductionOptions};
    use crate::operators::{BoundaryKind, GlobalOperators, Mesh};
    use crate::physics::{entropy_pair_burgers, entropy_pair_euler, euler_conservative};
    use crate::pod::{build_snapshots, weighted_pod};

    fn identity_basis(weights: &[f64]) -> ReducedBasis {
        let nn = weights.len();
        ReducedBasis {
            modes: DMatrix::from_fn(nn, nn, |i, j| if i == j { 1.0 / weights[i].sqrt() } else { 0.0 }),
            singular_values: vec![1.0; nn],
            weights: weights.to_vec(),
        }
    }

    fn euler_wall(k: usize) -> (FomProblem, Vec<f64>) {
        let g = 1.4;
        let mesh = Mesh::uniform_1d(k, (0.0, 1.0), BoundaryKind::Weak).unwrap();
        let ops = GlobalOperators::assemble(&mesh, 3).unwrap();
        let fom = FomProblem::new(entropy_pair_euler(1, g).unwrap(), ops, 2e-3, Some(BoundaryCondition::Mirror)).unwrap();
        let u0 = fom.project_initial(|x| {
            let e = (-100.0 * (x[0] - 0.5).powi(2)).exp();
            let rho = 2.0 + 0.5 * e;
            euler_conservative(rho, &[0.1 * e], rho.powf(g), g)
        });
        (fom, u0)
    }

    #[test]
    fn full_rank_galerkin_matches_fom_rhs() {
        let mesh = Mesh::uniform_1d(4, (-1.0, 1.0), BoundaryKind::Periodic).unwrap();
        let ops = GlobalOperators::assemble(&mesh, 2).unwrap();
        let basis = identity_basis(&ops.weights);
        let fom = FomProblem::new(entropy_pair_burgers(), ops, 1e-2, None).unwrap();
        let u = fom.project_initial(|x| vec![0.5 - (std::f64::consts::PI * x[0]).sin()]);
        let mut du_fom = vec![0.0; u.len()];
        fom.rhs(&u, &mut du_fom).unwrap();
        let rom = RomProblem::new(fom.clone(), basis, None, ViscosityForm::Br1).unwrap();
        let u_n = rom.reduce(&u);
        let mut du_n = vec![0.0; u_n.len()];
        rom.rhs(&u_n, &mut du_n).unwrap();
        let du = rom.reconstruct(&du_n);
        for (a, b) in du.iter().zip(&du_fom) {
            assert!((a - b).abs() < 1e-11 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn constant_state_is_a_projection_fixed_point() {
        let (fom, _) = euler_wall(16);
        let state = euler_conservative(1.3, &[0.2], 0.9, 1.4);
        let nn = fom.num_nodes();
        let u: Vec<f64> = (0..3).flat_map(|c| std::iter::repeat_n(state[c], nn)).collect();
        let w = &fom.ops.weights;
        // M-orthonormal monomials 1, x, x², x³
        let mut modes = DMatrix::from_fn(nn, 4, |i, j| fom.ops.coords[(i, 0)].powi(j as i32));
        for j in 0..4 {
            for k in 0..j {
                let dot: f64 = (0..nn).map(|i| w[i] * modes[(i, j)] * modes[(i, k)]).sum();
                let col = modes.column(k).into_owned();
                modes.column_mut(j).axpy(-dot, &col, 1.0);
            }
            let norm = (0..nn).map(|i| w[i] * modes[(i, j)].powi(2)).sum::<f64>().sqrt();
            modes.column_mut(j).scale_mut(1.0 / norm);
        }
        let basis = ReducedBasis {
            modes,
            singular_values: vec![1.0; 4],
            weights: w.clone(),
        };
        let rom = RomProblem::new(fom.clone(), basis, None, ViscosityForm::Br1).unwrap();
        let proj = rom.entropy_projection(&rom.reduce(&u)).unwrap();
        for i in 0..nn {
            for c in 0..3 {
                assert!((proj.u_tilde[i * 3 + c] - state[c]).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn burgers_projection_is_linear() {
        let mesh = Mesh::uniform_1d(8, (-1.0, 1.0), BoundaryKind::Periodic).unwrap();
        let ops = GlobalOperators::assemble(&mesh, 3).unwrap();
        let fom = FomProblem::new(entropy_pair_burgers(), ops, 0.0, None).unwrap();
        let u0 = fom.project_initial(|x| vec![0.5 - (std::f64::consts::PI * x[0]).sin()]);
        let traj = integrate_fom(&fom, &u0, 0.2, 21, &IntegratorOptions::default()).unwrap();
        let basis = weighted_pod(&build_snapshots(&traj, &fom.law, false).unwrap(), &fom.ops.weights, 4).unwrap();
        let rom = RomProblem::new(fom, basis, None, ViscosityForm::Br1).unwrap();
        let u_n = vec![0.3, -0.1, 0.05, 0.02];
        let proj = rom.entropy_projection(&u_n).unwrap();
        let lifted = rom.reconstruct(&u_n);
        for (a, b) in proj.u_tilde.iter().zip(&lifted) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn hyperreduced_wall_model_conserves_entropy_and_forms_agree() {
        let (fom, u0) = euler_wall(32);
        let traj = integrate_fom(&fom, &u0, 0.1, 41, &IntegratorOptions::default()).unwrap();
        let basis = weighted_pod(&build_snapshots(&traj, &fom.law, true).unwrap(), &fom.ops.weights, 8).unwrap();
        let hr = hyperreduce(&fom.ops, &basis, &HyperReductionOptions::default()).unwrap();
        let rom = RomProblem::new(fom, basis, Some(hr), ViscosityForm::Br1).unwrap();
        for frame in [0, 20, 40] {
            let u_n = rom.reduce(&traj.states[frame]);
            let diag = rom.diagnostics(&u_n).unwrap();
            assert!(diag.convective.abs() < 1e-10, "frame {frame}: {}", diag.convective);
            assert!(diag.viscous_dissipation >= 0.0);
            let proj = rom.entropy_projection(&u_n).unwrap();
            let skew = rom.convective_residual(&proj).unwrap();
            let strong = rom.convective_residual_strong(&proj).unwrap();
            for (a, b) in skew.iter().zip(&strong) {
                assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn entropy_stable_viscosity_dissipates() {
        let (fom, u0) = euler_wall(16);
        let traj = integrate_fom(&fom, &u0, 0.1, 21, &IntegratorOptions::default()).unwrap();
        let basis = weighted_pod(&build_snapshots(&traj, &fom.law, true).unwrap(), &fom.ops.weights, 6).unwrap();
        let rom = RomProblem::new(fom, basis, None, ViscosityForm::EntropyStable).unwrap();
        let u_n = rom.reduce(&traj.states[20]);
        let proj = rom.entropy_projection(&u_n).unwrap();
        let (_, dissipation) = rom.viscous_residual(&u_n, &proj).unwrap();
        assert!(dissipation > 0.0);
    }

    #[test]
    fn stiffness_is_symmetric_semidefinite() {
        let (fom, u0) = euler_wall(16);
        let traj = integrate_fom(&fom, &u0, 0.05, 11, &IntegratorOptions::default()).unwrap();
        let basis = weighted_pod(&build_snapshots(&traj, &fom.law, false).unwrap(), &fom.ops.weights, 6).unwrap();
        let rom = RomProblem::new(fom, basis, None, ViscosityForm::Br1).unwrap();
        let k = rom.stiffness();
        assert!((k - k.transpose()).amax() == 0.0);
        let eig = k.clone().symmetric_eigen().eigenvalues;
        assert!(eig.min() >= -1e-11 * eig.max());
    }

    #[test]
    fn relative_error_basics() {
        let w = [0.5, 0.5];
        assert_eq!(relative_l2_error(&[1.0, 2.0], &[1.0, 2.0], &w).unwrap(), 0.0);
        assert!((relative_l2_error(&[1.0, 0.0], &[0.0, 0.0], &w).unwrap() - 1.0).abs() < 1e-15);
        assert!(relative_l2_error(&[1.0], &[1.0, 2.0], &w).is_err());
    }
}
