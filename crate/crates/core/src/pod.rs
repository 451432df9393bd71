//! Mass-weighted proper orthogonal decomposition of solution snapshots.

use nalgebra::DMatrix;

use crate::error::{EsdgError, Result};
use crate::fom::Trajectory;
use crate::physics::{ConservationLaw, MAX_COMPONENTS};

/// Snapshot columns: all components at `t_1`, then at `t_2`, ..., followed by
/// the entropy-variable columns in the same order when enriched.
#[derive(Clone, Debug)]
pub struct SnapshotMatrix {
    pub data: DMatrix<f64>,
    pub times: Vec<f64>,
    pub components: usize,
    pub enriched: bool,
}

pub fn build_snapshots(traj: &Trajectory, law: &ConservationLaw, enrich: bool) -> Result<SnapshotMatrix> {
    if traj.states.is_empty() {
        return Err(EsdgError::ShapeMismatch("trajectory has no frames".into()));
    }
    let n = law.num_components();
    let nn = traj.states[0].len() / n;
    let q = traj.states.len();
    let cols = q * n * if enrich { 2 } else { 1 };
    let mut data = DMatrix::zeros(nn, cols);
    let mut ui = [0.0; MAX_COMPONENTS];
    let mut vi = [0.0; MAX_COMPONENTS];
    for (t, state) in traj.states.iter().enumerate() {
        if state.len() != nn * n {
            return Err(EsdgError::ShapeMismatch(format!("frame {t} has {} entries", state.len())));
        }
        for c in 0..n {
            data.column_mut(t * n + c).copy_from_slice(&state[c * nn..(c + 1) * nn]);
        }
        if enrich {
            for i in 0..nn {
                for c in 0..n {
                    ui[c] = state[c * nn + i];
                }
                law.check_admissible(&ui[..n], i)?;
                law.entropy_variables(&ui[..n], &mut vi);
                for c in 0..n {
                    data[(i, q * n + t * n + c)] = vi[c];
                }
            }
        }
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(EsdgError::Format("snapshot matrix has non-finite entries".into()));
    }
    Ok(SnapshotMatrix {
        data,
        times: traj.times.clone(),
        components: n,
        enriched: enrich,
    })
}

/// POD basis orthonormal in the mass-weighted inner product.
#[derive(Clone, Debug)]
pub struct ReducedBasis {
    /// `V_N`, one mode per column.
    pub modes: DMatrix<f64>,
    /// All singular values of the weighted snapshot matrix, nonincreasing.
    pub singular_values: Vec<f64>,
    /// Diagonal of the mass matrix the basis is orthonormal under.
    pub weights: Vec<f64>,
}

impl ReducedBasis {
    pub fn num_modes(&self) -> usize {
        self.modes.ncols()
    }

    pub fn num_nodes(&self) -> usize {
        self.modes.nrows()
    }

    /// Keeps the leading `n` modes.
    pub fn truncated(&self, n: usize) -> Result<ReducedBasis> {
        if n > self.num_modes() {
            return Err(EsdgError::Rank {
                requested: n,
                rank: self.num_modes(),
            });
        }
        Ok(ReducedBasis {
            modes: self.modes.columns(0, n).into_owned(),
            singular_values: self.singular_values.clone(),
            weights: self.weights.clone(),
        })
    }

    /// Mass-orthogonal projection coefficients `V_Nᵀ M u` of each component.
    pub fn project(&self, u: &[f64], components: usize) -> Vec<f64> {
        let nn = self.num_nodes();
        let nm = self.num_modes();
        let mut out = vec![0.0; nm * components];
        for c in 0..components {
            let uc = &u[c * nn..(c + 1) * nn];
            for m in 0..nm {
                let col = self.modes.column(m);
                out[c * nm + m] = (0..nn).map(|i| col[i] * self.weights[i] * uc[i]).sum();
            }
        }
        out
    }

    /// Nodal values `V_N u_N` of each component.
    pub fn lift(&self, coeffs: &[f64], components: usize) -> Vec<f64> {
        let nn = self.num_nodes();
        let nm = self.num_modes();
        let mut out = vec![0.0; nn * components];
        for c in 0..components {
            let a = nalgebra::DVectorView::from_slice(&coeffs[c * nm..(c + 1) * nm], nm);
            let v = &self.modes * a;
            out[c * nn..(c + 1) * nn].copy_from_slice(v.as_slice());
        }
        out
    }
}

/// Left singular vectors of `√M V_snap`, scaled back by `√M⁻¹`.
pub fn weighted_pod(snap: &SnapshotMatrix, weights: &[f64], modes: usize) -> Result<ReducedBasis> {
    let nn = snap.data.nrows();
    if weights.len() != nn {
        return Err(EsdgError::ShapeMismatch(format!(
            "{} weights for {} snapshot rows",
            weights.len(),
            nn
        )));
    }
    let sqrt_w: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let mut a = snap.data.clone();
    for (i, mut row) in a.row_iter_mut().enumerate() {
        row *= sqrt_w[i];
    }
    let svd = a.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]).then(i.cmp(&j)));
    let singular_values: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();

    let rank = numerical_rank(&singular_values);
    if modes == 0 || modes > rank {
        return Err(EsdgError::Rank { requested: modes, rank });
    }
    let mut basis = DMatrix::zeros(nn, modes);
    for (c, &k) in order.iter().take(modes).enumerate() {
        let mut col = basis.column_mut(c);
        for i in 0..nn {
            col[i] = u[(i, k)] / sqrt_w[i];
        }
        let pivot = col.iter().copied().fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
        if pivot < 0.0 {
            col.neg_mut();
        }
    }
    Ok(ReducedBasis {
        modes: basis,
        singular_values,
        weights: weights.to_vec(),
    })
}

/// Number of singular values with `μ_k / μ_1 >= 1e-14`.
pub fn numerical_rank(singular_values: &[f64]) -> usize {
    let Some(&first) = singular_values.first() else { return 0 };
    if first <= 0.0 {
        return 0;
    }
    singular_values.iter().take_while(|&&s| s / first >= 1e-14).count()
}

/// `E_i = sqrt(Σ_{j>i} μ_j² / Σ_j μ_j²)`.
pub fn energy_residual(singular_values: &[f64], i: usize) -> f64 {
    let total: f64 = singular_values.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return 0.0;
    }
    let tail: f64 = singular_values.iter().skip(i).map(|s| s * s).sum();
    (tail / total).sqrt()
}

/// Relative mass-weighted error between each frame and its entropy projection
/// `u(V_N P v(V_N V_Nᵀ M u))`.
pub fn entropy_projection_error(traj: &Trajectory, basis: &ReducedBasis, law: &ConservationLaw) -> Result<Vec<f64>> {
    let n = law.num_components();
    let nn = basis.num_nodes();
    let w = &basis.weights;
    let mut out = Vec::with_capacity(traj.states.len());
    let mut ui = [0.0; MAX_COMPONENTS];
    let mut vi = [0.0; MAX_COMPONENTS];
    for u in &traj.states {
        let lifted = basis.lift(&basis.project(u, n), n);
        let mut v = vec![0.0; nn * n];
        for i in 0..nn {
            for c in 0..n {
                ui[c] = lifted[c * nn + i];
            }
            law.check_admissible(&ui[..n], i)?;
            law.entropy_variables(&ui[..n], &mut vi);
            for c in 0..n {
                v[c * nn + i] = vi[c];
            }
        }
        let v_proj = basis.lift(&basis.project(&v, n), n);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..nn {
            for c in 0..n {
                vi[c] = v_proj[c * nn + i];
            }
            law.check_admissible_entropy(&vi[..n], i)?;
            law.conservative_variables(&vi[..n], &mut ui);
            for c in 0..n {
                let exact = u[c * nn + i];
                num += w[i] * (exact - ui[c]).powi(2);
                den += w[i] * exact * exact;
            }
        }
        out.push(if den > 0.0 { (num / den).sqrt() } else { num.sqrt() });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timestepping::StepStats;

    fn trajectory(states: Vec<Vec<f64>>) -> Trajectory {
        Trajectory {
            times: (0..states.len()).map(|k| k as f64).collect(),
            states,
            stats: StepStats::default(),
            wall_seconds: 0.0,
        }
    }

    #[test]
    fn constant_snapshot_gives_normalized_constant_mode() {
        let w = vec![0.1, 0.3, 0.2, 0.4];
        let traj = trajectory(vec![vec![2.0; 4]]);
        let snap = build_snapshots(&traj, &ConservationLaw::Burgers, false).unwrap();
        let basis = weighted_pod(&snap, &w, 1).unwrap();
        let expected = 1.0 / w.iter().sum::<f64>().sqrt();
        for v in basis.modes.iter() {
            assert!((v - expected).abs() < 1e-14);
        }
        assert!(matches!(weighted_pod(&snap, &w, 2), Err(EsdgError::Rank { requested: 2, rank: 1 })));
    }

    #[test]
    fn burgers_enrichment_duplicates_columns() {
        let traj = trajectory(vec![vec![1.0, 2.0, 3.0], vec![0.5, -1.0, 2.0]]);
        let snap = build_snapshots(&traj, &ConservationLaw::Burgers, true).unwrap();
        assert_eq!(snap.data.ncols(), 4);
        assert_eq!(snap.data.columns(0, 2), snap.data.columns(2, 2));
    }

    #[test]
    fn uniform_weights_reduce_to_plain_svd() {
        let h = 0.25;
        let data = DMatrix::from_fn(6, 3, |i, j| ((i + 1) as f64).powi(j as i32 + 1).sin());
        let snap = SnapshotMatrix {
            data: data.clone(),
            times: vec![0.0],
            components: 3,
            enriched: false,
        };
        let basis = weighted_pod(&snap, &[h; 6], 3).unwrap();
        let svd = data.svd(true, false);
        let u = svd.u.unwrap();
        for m in 0..3 {
            let col = basis.modes.column(m) * h.sqrt();
            let best = (0..3).map(|j| col.dot(&u.column(j)).abs()).fold(0.0, f64::max);
            assert!((best - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn energy_residual_endpoints() {
        let s = [3.0, 2.0, 1.0];
        assert_eq!(energy_residual(&s, 0), 1.0);
        assert_eq!(energy_residual(&s, 3), 0.0);
        assert!((energy_residual(&s, 1) - (5.0f64 / 14.0).sqrt()).abs() < 1e-15);
    }
}
