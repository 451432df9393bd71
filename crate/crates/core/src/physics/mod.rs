//! Entropy pairs, physical and entropy-conservative fluxes, and wall states.
//!
//! All pointwise functions act on one node's state: a slice holding the `n`
//! conserved components of that node.

pub mod euler;

use serde::{Deserialize, Serialize};

use crate::error::{EsdgError, Result};

/// Largest component count of any supported system (2D Euler).
pub const MAX_COMPONENTS: usize = 4;

/// Length of the per-node flux cache, see [`ConservationLaw::flux_cache`].
pub const CACHE_LEN: usize = euler::CACHE_LEN;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase")]
pub enum ConservationLaw {
    /// `u_t + u_x = 0` with the square entropy.
    Advection,
    /// `u_t + (u²/2)_x = 0` with the square entropy.
    Burgers,
    /// Compressible Euler in `dim` dimensions.
    Euler { dim: usize, gamma: f64 },
}

pub fn entropy_pair_advection() -> ConservationLaw {
    ConservationLaw::Advection
}

pub fn entropy_pair_burgers() -> ConservationLaw {
    ConservationLaw::Burgers
}

pub fn entropy_pair_euler(dim: usize, gamma: f64) -> Result<ConservationLaw> {
    if !(1..=2).contains(&dim) {
        return Err(EsdgError::config("law", format!("Euler supports 1 or 2 dimensions, got {dim}")));
    }
    if !(gamma > 1.0) {
        return Err(EsdgError::config("gamma", format!("γ must exceed 1, got {gamma}")));
    }
    Ok(ConservationLaw::Euler { dim, gamma })
}

impl ConservationLaw {
    /// Parses `advection1d`, `burgers1d`, `euler1d` or `euler2d` (γ = 1.4).
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "advection1d" => Ok(ConservationLaw::Advection),
            "burgers1d" => Ok(ConservationLaw::Burgers),
            "euler1d" => entropy_pair_euler(1, 1.4),
            "euler2d" => entropy_pair_euler(2, 1.4),
            other => Err(EsdgError::config(
                "law",
                format!("unknown law `{other}` (expected advection1d, burgers1d, euler1d or euler2d)"),
            )),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ConservationLaw::Advection => "advection1d",
            ConservationLaw::Burgers => "burgers1d",
            ConservationLaw::Euler { dim: 1, .. } => "euler1d",
            ConservationLaw::Euler { .. } => "euler2d",
        }
    }

    pub fn num_components(&self) -> usize {
        match self {
            ConservationLaw::Advection | ConservationLaw::Burgers => 1,
            ConservationLaw::Euler { dim, .. } => dim + 2,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ConservationLaw::Advection | ConservationLaw::Burgers => 1,
            ConservationLaw::Euler { dim, .. } => *dim,
        }
    }

    /// True when `v(u) = u`, so entropy projection is a linear projection.
    pub fn is_symmetric(&self) -> bool {
        !matches!(self, ConservationLaw::Euler { .. })
    }

    /// Checks that a conservative state lies in the domain of the entropy.
    pub fn check_admissible(&self, u: &[f64], node: usize) -> Result<()> {
        if u.iter().any(|x| !x.is_finite()) {
            return Err(EsdgError::Inadmissible {
                node,
                detail: "non-finite value".into(),
            });
        }
        if let ConservationLaw::Euler { dim, .. } = *self {
            if !(u[0] > 0.0) {
                return Err(EsdgError::Inadmissible {
                    node,
                    detail: format!("density {}", u[0]),
                });
            }
            let rho_e = euler::internal_energy(u, dim);
            if !(rho_e > 0.0) {
                return Err(EsdgError::Inadmissible {
                    node,
                    detail: format!("internal energy {rho_e}"),
                });
            }
        }
        Ok(())
    }

    /// Checks that entropy variables map back to an admissible state.
    pub fn check_admissible_entropy(&self, v: &[f64], node: usize) -> Result<()> {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(EsdgError::Inadmissible {
                node,
                detail: "non-finite entropy variable".into(),
            });
        }
        if let ConservationLaw::Euler { dim, .. } = *self {
            if !(v[dim + 1] < 0.0) {
                return Err(EsdgError::Inadmissible {
                    node,
                    detail: format!("last entropy variable {} is not negative", v[dim + 1]),
                });
            }
        }
        Ok(())
    }

    pub fn entropy(&self, u: &[f64]) -> f64 {
        match *self {
            ConservationLaw::Advection | ConservationLaw::Burgers => 0.5 * u[0] * u[0],
            ConservationLaw::Euler { dim, gamma } => euler::entropy(u, dim, gamma),
        }
    }

    pub fn entropy_variables(&self, u: &[f64], v: &mut [f64]) {
        match *self {
            ConservationLaw::Advection | ConservationLaw::Burgers => v[0] = u[0],
            ConservationLaw::Euler { dim, gamma } => euler::entropy_variables(u, dim, gamma, v),
        }
    }

    pub fn conservative_variables(&self, v: &[f64], u: &mut [f64]) {
        match *self {
            ConservationLaw::Advection | ConservationLaw::Burgers => u[0] = v[0],
            ConservationLaw::Euler { dim, gamma } => euler::conservative_variables(v, dim, gamma, u),
        }
    }

    /// Flux potential `ψ^dir` with `vᵀf^dir - ψ^dir` the entropy flux.
    pub fn potential(&self, u: &[f64], dir: usize) -> f64 {
        match *self {
            ConservationLaw::Advection => 0.5 * u[0] * u[0],
            ConservationLaw::Burgers => u[0] * u[0] * u[0] / 6.0,
            ConservationLaw::Euler { gamma, .. } => (gamma - 1.0) * u[1 + dir],
        }
    }

    pub fn flux(&self, u: &[f64], dir: usize, f: &mut [f64]) {
        match *self {
            ConservationLaw::Advection => f[0] = u[0],
            ConservationLaw::Burgers => f[0] = 0.5 * u[0] * u[0],
            ConservationLaw::Euler { dim, gamma } => euler::flux(u, dim, gamma, dir, f),
        }
    }

    /// Symmetric, consistent, entropy-conservative two-point flux in direction `dir`.
    #[inline]
    pub fn ec_flux(&self, ul: &[f64], ur: &[f64], dir: usize, f: &mut [f64]) {
        match *self {
            ConservationLaw::Advection => f[0] = 0.5 * (ul[0] + ur[0]),
            ConservationLaw::Burgers => f[0] = (ul[0] * ul[0] + ul[0] * ur[0] + ur[0] * ur[0]) / 6.0,
            ConservationLaw::Euler { dim, gamma } => euler::ec_flux(ul, ur, dim, gamma, dir, f),
        }
    }

    /// Per-node data consumed by [`ConservationLaw::ec_flux_cached`]; computing
    /// it once per node avoids repeating divisions and logarithms per pair.
    #[inline]
    pub fn flux_cache(&self, u: &[f64], cache: &mut [f64]) {
        match *self {
            ConservationLaw::Advection | ConservationLaw::Burgers => cache[0] = u[0],
            ConservationLaw::Euler { dim, gamma } => euler::flux_cache(u, dim, gamma, cache),
        }
    }

    /// [`ConservationLaw::ec_flux`] evaluated from two flux caches.
    #[inline]
    pub fn ec_flux_cached(&self, cl: &[f64], cr: &[f64], dir: usize, f: &mut [f64]) {
        match *self {
            ConservationLaw::Advection => f[0] = 0.5 * (cl[0] + cr[0]),
            ConservationLaw::Burgers => f[0] = (cl[0] * cl[0] + cl[0] * cr[0] + cr[0] * cr[0]) / 6.0,
            ConservationLaw::Euler { dim, gamma } => euler::ec_flux_cached(cl, cr, dim, gamma, dir, f),
        }
    }

    /// `∂u/∂v` at `u`, written row-major into `out` (`n × n`).
    pub fn entropy_jacobian(&self, u: &[f64], out: &mut [f64]) {
        match *self {
            ConservationLaw::Advection | ConservationLaw::Burgers => out[0] = 1.0,
            ConservationLaw::Euler { dim, gamma } => euler::entropy_jacobian(u, dim, gamma, out),
        }
    }

    /// Reflecting-wall exterior state: density and pressure copied, velocity negated.
    pub fn mirror_state(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_admissible(u, 0)?;
        let n = self.num_components();
        out[..n].copy_from_slice(&u[..n]);
        if let ConservationLaw::Euler { dim, .. } = *self {
            for i in 0..dim {
                out[1 + i] = -u[1 + i];
            }
        }
        Ok(())
    }
}

/// Euler conservative state from primitive variables `(ρ, velocity, p)`.
pub fn euler_conservative(rho: f64, vel: &[f64], p: f64, gamma: f64) -> Vec<f64> {
    let mut u = Vec::with_capacity(vel.len() + 2);
    u.push(rho);
    u.extend(vel.iter().map(|v| rho * v));
    let kinetic: f64 = 0.5 * rho * vel.iter().map(|v| v * v).sum::<f64>();
    u.push(p / (gamma - 1.0) + kinetic);
    u
}
