//! Compressible Euler entropy pair and the Ranocha entropy-conservative flux.
//!
//! Entropy `S = -ρ s` with `s = ln(p / ρ^γ)`; the entropy variables are the
//! gradient of this `S` (so they are `γ - 1` times the variables associated
//! with `-ρ s / (γ - 1)`), and the flux potential is `(γ - 1) ρ u_i`.

/// Logarithmic mean `(a - b) / (ln a - ln b)` with a series expansion near `a = b`.
#[inline]
pub fn log_mean(a: f64, b: f64) -> f64 {
    let num = a * (a - 2.0 * b) + b * b;
    let den = a * (a + 2.0 * b) + b * b;
    if num < 1e-4 * den {
        let f2 = num / den;
        (a + b) * 52.5 / (105.0 + f2 * (35.0 + f2 * (21.0 + f2 * 15.0)))
    } else {
        (b - a) / (b / a).ln()
    }
}

#[inline]
pub(crate) fn velocity(u: &[f64], d: usize) -> [f64; 2] {
    let mut vel = [0.0; 2];
    for i in 0..d {
        vel[i] = u[1 + i] / u[0];
    }
    vel
}

#[inline]
pub(crate) fn internal_energy(u: &[f64], d: usize) -> f64 {
    let kinetic: f64 = (0..d).map(|i| u[1 + i] * u[1 + i]).sum::<f64>() / u[0];
    u[d + 1] - 0.5 * kinetic
}

#[inline]
pub(crate) fn pressure(u: &[f64], d: usize, gamma: f64) -> f64 {
    (gamma - 1.0) * internal_energy(u, d)
}

pub(crate) fn entropy(u: &[f64], d: usize, gamma: f64) -> f64 {
    let rho = u[0];
    let p = pressure(u, d, gamma);
    -rho * (p.ln() - gamma * rho.ln())
}

pub(crate) fn entropy_variables(u: &[f64], d: usize, gamma: f64, v: &mut [f64]) {
    let rho = u[0];
    let rho_e = internal_energy(u, d);
    let p = (gamma - 1.0) * rho_e;
    let s = p.ln() - gamma * rho.ln();
    let kinetic: f64 = (0..d).map(|i| u[1 + i] * u[1 + i]).sum::<f64>() / rho;
    v[0] = gamma - s - 0.5 * kinetic / rho_e;
    for i in 0..d {
        v[1 + i] = u[1 + i] / rho_e;
    }
    v[d + 1] = -rho / rho_e;
}

pub(crate) fn conservative_variables(v: &[f64], d: usize, gamma: f64, u: &mut [f64]) {
    let vlast = v[d + 1];
    let vm2: f64 = (0..d).map(|i| v[1 + i] * v[1 + i]).sum();
    let s = gamma - v[0] + 0.5 * vm2 / vlast;
    let rho_e = ((gamma - 1.0) / (-vlast).powf(gamma)).powf(1.0 / (gamma - 1.0)) * (-s / (gamma - 1.0)).exp();
    u[0] = -rho_e * vlast;
    for i in 0..d {
        u[1 + i] = rho_e * v[1 + i];
    }
    u[d + 1] = rho_e * (1.0 - 0.5 * vm2 / vlast);
}

pub(crate) fn flux(u: &[f64], d: usize, gamma: f64, dir: usize, f: &mut [f64]) {
    let vel = velocity(u, d);
    let p = pressure(u, d, gamma);
    let un = vel[dir];
    f[0] = u[1 + dir];
    for i in 0..d {
        f[1 + i] = u[1 + i] * un;
    }
    f[1 + dir] += p;
    f[d + 1] = (u[d + 1] + p) * un;
}

/// Per-node quantities shared by every two-point flux a node takes part in:
/// `[ρ, v_1, v_2, p, ln ρ, β, ln β]` with `β = ρ / p`.
pub const CACHE_LEN: usize = 7;

#[inline]
pub(crate) fn flux_cache(u: &[f64], d: usize, gamma: f64, c: &mut [f64]) {
    let rho = u[0];
    let vel = velocity(u, d);
    let p = pressure(u, d, gamma);
    let beta = rho / p;
    c[0] = rho;
    c[1] = vel[0];
    c[2] = vel[1];
    c[3] = p;
    c[4] = rho.ln();
    c[5] = beta;
    c[6] = beta.ln();
}

/// [`log_mean`] with the logarithms of both arguments supplied.
#[inline]
fn log_mean_with_logs(a: f64, b: f64, la: f64, lb: f64) -> f64 {
    let num = a * (a - 2.0 * b) + b * b;
    let den = a * (a + 2.0 * b) + b * b;
    if num < 1e-4 * den {
        let f2 = num / den;
        (a + b) * 52.5 / (105.0 + f2 * (35.0 + f2 * (21.0 + f2 * 15.0)))
    } else {
        (b - a) / (lb - la)
    }
}

/// Ranocha's entropy-conservative, kinetic-energy-preserving flux from cached node data.
#[inline]
pub(crate) fn ec_flux_cached(cl: &[f64], cr: &[f64], d: usize, gamma: f64, dir: usize, f: &mut [f64]) {
    let (pl, pr) = (cl[3], cr[3]);
    let (vl, vr) = (&cl[1..3], &cr[1..3]);
    let rho_mean = log_mean_with_logs(cl[0], cr[0], cl[4], cr[4]);
    // pl pr / LM(ρl pr, ρr pl) = 1 / LM(βl, βr) by homogeneity of the log mean.
    let inv_rho_p_mean = 1.0 / log_mean_with_logs(cl[5], cr[5], cl[6], cr[6]);
    let un_avg = 0.5 * (vl[dir] + vr[dir]);
    let p_avg = 0.5 * (pl + pr);
    let vel_product: f64 = 0.5 * (0..d).map(|i| vl[i] * vr[i]).sum::<f64>();

    let f1 = rho_mean * un_avg;
    f[0] = f1;
    for i in 0..d {
        f[1 + i] = f1 * 0.5 * (vl[i] + vr[i]);
    }
    f[1 + dir] += p_avg;
    f[d + 1] = f1 * (vel_product + inv_rho_p_mean / (gamma - 1.0)) + 0.5 * (pl * vr[dir] + pr * vl[dir]);
}

pub(crate) fn ec_flux(ul: &[f64], ur: &[f64], d: usize, gamma: f64, dir: usize, f: &mut [f64]) {
    let (mut cl, mut cr) = ([0.0; CACHE_LEN], [0.0; CACHE_LEN]);
    flux_cache(ul, d, gamma, &mut cl);
    flux_cache(ur, d, gamma, &mut cr);
    ec_flux_cached(&cl, &cr, d, gamma, dir, f);
}

/// `∂u/∂v`, row-major `(d + 2) × (d + 2)`.
pub(crate) fn entropy_jacobian(u: &[f64], d: usize, gamma: f64, out: &mut [f64]) {
    let n = d + 2;
    let rho = u[0];
    let energy = u[d + 1];
    let vel = velocity(u, d);
    let p = pressure(u, d, gamma);
    let h = (energy + p) / rho;
    let a2 = gamma * p / rho;
    let scale = 1.0 / (gamma - 1.0);
    let mut set = |i: usize, j: usize, v: f64| {
        out[i * n + j] = scale * v;
        out[j * n + i] = scale * v;
    };
    set(0, 0, rho);
    for i in 0..d {
        set(0, 1 + i, rho * vel[i]);
        for j in i..d {
            let delta = if i == j { p } else { 0.0 };
            set(1 + i, 1 + j, rho * vel[i] * vel[j] + delta);
        }
        set(1 + i, d + 1, rho * h * vel[i]);
    }
    set(0, d + 1, energy);
    set(d + 1, d + 1, rho * h * h - a2 * p / (gamma - 1.0));
}
