//! Adaptive Dormand–Prince 5(4) integration with dense output.
//!
//! The right-hand side is fallible: a stage that produces an inadmissible
//! state rejects the step and retries with a smaller one, and the error is
//! surfaced only if the step size collapses.

use serde::{Deserialize, Serialize};

use crate::error::{EsdgError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    /// First trial step; chosen automatically when `None`.
    pub initial_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            rtol: 1e-7,
            atol: 1e-9,
            initial_step: None,
            max_steps: 50_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evaluations: usize,
}

/// `q` equally spaced output times on `[0, t_final]`, endpoints included.
pub fn frame_times(t_final: f64, q: usize) -> Vec<f64> {
    match q {
        0 => Vec::new(),
        1 => vec![t_final],
        _ => (0..q).map(|k| t_final * k as f64 / (q - 1) as f64).collect(),
    }
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const DENSE: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

/// Integrates `dy/dt = rhs(t, y)` from `y(0) = y0`, returning the solution at
/// each of the nondecreasing `times` (which must start at or after zero).
pub fn integrate<F>(mut rhs: F, y0: &[f64], times: &[f64], opts: &IntegratorOptions) -> Result<(Vec<Vec<f64>>, StepStats)>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y0.len();
    let mut stats = StepStats::default();
    let mut out = Vec::with_capacity(times.len());
    let t_end = times.last().copied().unwrap_or(0.0);
    let mut next = 0;
    while next < times.len() && times[next] <= 0.0 {
        out.push(y0.to_vec());
        next += 1;
    }
    if next == times.len() {
        return Ok((out, stats));
    }
    let h_min = 1e-13 * t_end;

    let mut t = 0.0;
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    rhs(t, &y, &mut k[0])?;
    stats.rhs_evaluations += 1;

    let mut h = match opts.initial_step {
        Some(h) => h,
        None => initial_step(&mut rhs, t, &y, &k[0], opts, &mut stats)?,
    }
    .min(t_end);
    let mut y_new = vec![0.0; n];
    let mut y_stage = vec![0.0; n];
    let mut fac_old: f64 = 1e-4;
    let mut last_error: Option<EsdgError> = None;
    let mut reject_streak = false;

    while t < t_end {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(EsdgError::StepSizeUnderflow { t, h });
        }
        if h < h_min {
            return Err(last_error.unwrap_or(EsdgError::StepSizeUnderflow { t, h }));
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }

        let mut stage_failed = None;
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += A[s][j] * kj[i];
                }
                y_stage[i] = y[i] + h * acc;
            }
            stats.rhs_evaluations += 1;
            if let Err(e) = rhs(t + C[s] * h, &y_stage, &mut k[s]) {
                stage_failed = Some(e);
                break;
            }
            if s == 6 {
                y_new.copy_from_slice(&y_stage);
            }
        }
        if let Some(e) = stage_failed {
            if !matches!(e, EsdgError::Inadmissible { .. }) {
                return Err(e);
            }
            last_error = Some(e);
            stats.rejected += 1;
            h *= 0.25;
            reject_streak = true;
            continue;
        }

        let mut err = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                e += E[j] * kj[i];
            }
            let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            let r = h * e / sc;
            err += r * r;
        }
        let err = (err / n.max(1) as f64).sqrt();

        let beta = 0.04;
        let expo1 = 0.2 - 0.75 * beta;
        let fac11 = err.powf(expo1);
        if err <= 1.0 {
            let fac = (fac11 / fac_old.powf(beta) / 0.9).clamp(0.2, 10.0);
            fac_old = err.max(1e-4);
            stats.accepted += 1;

            let t_new = if last { t_end } else { t + h };
            while next < times.len() && times[next] <= t_new {
                let theta = ((times[next] - t) / h).clamp(0.0, 1.0);
                out.push(dense_output(&y, &y_new, &k, h, theta));
                next += 1;
            }
            std::mem::swap(&mut y, &mut y_new);
            k.swap(0, 6);
            t = t_new;
            let mut h_new = h / fac;
            if reject_streak {
                h_new = h_new.min(h);
            }
            reject_streak = false;
            last_error = None;
            h = h_new;
        } else {
            stats.rejected += 1;
            h /= (fac11 / 0.9).min(5.0);
            reject_streak = true;
        }
    }
    while out.len() < times.len() {
        out.push(y.clone());
    }
    Ok((out, stats))
}

fn dense_output(y0: &[f64], y1: &[f64], k: &[Vec<f64>], h: f64, theta: f64) -> Vec<f64> {
    if theta == 1.0 {
        return y1.to_vec();
    }
    let t1 = 1.0 - theta;
    (0..y0.len())
        .map(|i| {
            let ydiff = y1[i] - y0[i];
            let bspl = h * k[0][i] - ydiff;
            let r4 = ydiff - h * k[6][i] - bspl;
            let mut r5 = 0.0;
            for (j, kj) in k.iter().enumerate() {
                r5 += DENSE[j] * kj[i];
            }
            r5 *= h;
            y0[i] + theta * (ydiff + t1 * (bspl + theta * (r4 + t1 * r5)))
        })
        .collect()
}

fn initial_step<F>(rhs: &mut F, t: f64, y: &[f64], f0: &[f64], opts: &IntegratorOptions, stats: &mut StepStats) -> Result<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y.len().max(1) as f64;
    let sc: Vec<f64> = y.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect();
    let norm = |x: &[f64]| (x.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / n).sqrt();
    let d0 = norm(y);
    let d1 = norm(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; y.len()];
    stats.rhs_evaluations += 1;
    if rhs(t + h0, &y1, &mut f1).is_err() {
        return Ok(h0 * 0.1);
    }
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| (a - b) / h0).collect();
    let d2 = norm(&diff);
    let dmax = d1.max(d2);
    let h1 = if dmax <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / dmax).powf(0.2)
    };
    Ok((100.0 * h0).min(h1))
}
