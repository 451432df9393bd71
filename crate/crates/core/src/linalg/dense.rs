use nalgebra::{DMatrix, DVector};

use crate::error::{EsdgError, Result};

/// Orthonormal basis (Euclidean) for the range of `a`, keeping left singular
/// vectors whose singular value exceeds `rel_tol * sigma_max`.
pub fn orthonormal_range(a: &DMatrix<f64>, rel_tol: f64) -> (DMatrix<f64>, Vec<f64>) {
    if a.ncols() == 0 || a.nrows() == 0 {
        return (DMatrix::zeros(a.nrows(), 0), Vec::new());
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .partial_cmp(&svd.singular_values[i])
            .unwrap()
            .then(i.cmp(&j))
    });
    let sigma_max = svd.singular_values[order[0]];
    let keep: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&k| sigma_max > 0.0 && svd.singular_values[k] > rel_tol * sigma_max)
        .collect();
    let mut basis = DMatrix::zeros(a.nrows(), keep.len());
    for (c, &k) in keep.iter().enumerate() {
        basis.set_column(c, &u.column(k));
    }
    let sv = keep.iter().map(|&k| svd.singular_values[k]).collect();
    (basis, sv)
}

/// Scales each nonzero column to unit Euclidean norm.
pub fn normalize_columns(a: &mut DMatrix<f64>) {
    for mut col in a.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
}

/// Unit vector `c` with `cᵀ a = 0` for a matrix with more rows than its rank,
/// taken as the last column of the orthogonal factor of a column-pivoted
/// Householder QR of `a`.
pub fn left_null_vector_pivoted_qr(a: &DMatrix<f64>, pivot_tol: f64) -> DVector<f64> {
    let (m, n) = a.shape();
    assert!(m >= 1);
    let mut work = a.clone();
    let mut reflectors: Vec<(usize, DVector<f64>)> = Vec::new();
    let mut col_norms: Vec<f64> = (0..n).map(|j| work.column(j).norm_squared()).collect();
    let scale = col_norms.iter().fold(0.0f64, |acc, v| acc.max(v.sqrt()));
    let steps = n.min(m.saturating_sub(1));

    for j in 0..steps {
        let (p, &best) = col_norms[j..]
            .iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |acc, (k, v)| if *v > *acc.1 { (k, v) } else { acc });
        let p = p + j;
        if best.sqrt() <= pivot_tol * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        if p != j {
            work.swap_columns(p, j);
            col_norms.swap(p, j);
        }
        let x = work.view((j, j), (m - j, 1)).column(0).into_owned();
        let alpha = x.norm();
        if alpha == 0.0 {
            continue;
        }
        let mut v = x.clone();
        v[0] += if x[0] >= 0.0 { alpha } else { -alpha };
        let vnorm = v.norm();
        v /= vnorm;
        for k in j..n {
            let mut col = work.view_mut((j, k), (m - j, 1));
            let dot = v.dot(&col.column(0));
            col.column_mut(0).axpy(-2.0 * dot, &v, 1.0);
        }
        for (k, norm) in col_norms.iter_mut().enumerate().skip(j + 1) {
            *norm = work.view((j + 1, k), (m - j - 1, 1)).norm_squared();
        }
        reflectors.push((j, v));
    }

    let mut c = DVector::zeros(m);
    c[m - 1] = 1.0;
    for (j, v) in reflectors.iter().rev() {
        let mut tail = c.rows_mut(*j, m - j);
        let dot = v.dot(&tail);
        tail.axpy(-2.0 * dot, v, 1.0);
    }
    let norm = c.norm();
    c / norm
}

/// Least-squares solution of `a x = b` through a thin QR factorization.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.ncols() == 0 {
        return Ok(DVector::zeros(0));
    }
    if a.nrows() >= a.ncols() {
        let qr = a.clone().qr();
        let qtb = qr.q().transpose() * b;
        let r = qr.r();
        r.solve_upper_triangular(&qtb)
            .ok_or_else(|| EsdgError::Singular("rank-deficient least-squares system".into()))
    } else {
        let svd = a.clone().svd(true, true);
        svd.solve(b, 1e-14 * svd.singular_values.max())
            .map_err(|e| EsdgError::Singular(e.to_string()))
    }
}

/// Nonnegative least squares, `min ||a x - b||` subject to `x >= 0`
/// (Lawson–Hanson active set). `initial_passive` seeds the passive set.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>, initial_passive: &[usize]) -> Result<DVector<f64>> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let anorm = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 10.0 * f64::EPSILON * anorm * (a.nrows().max(n) as f64) * b.norm().max(1.0);

    let solve_passive = |passive: &[bool]| -> Result<DVector<f64>> {
        let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let sub = a.select_columns(idx.iter());
        let s = least_squares(&sub, b)?;
        let mut full = DVector::zeros(n);
        for (k, &j) in idx.iter().enumerate() {
            full[j] = s[k];
        }
        Ok(full)
    };

    if !initial_passive.is_empty() {
        for &j in initial_passive {
            passive[j] = true;
        }
        let s = solve_passive(&passive)?;
        if (0..n).all(|j| !passive[j] || s[j] > 0.0) {
            x = s;
        } else {
            passive.iter_mut().for_each(|p| *p = false);
        }
    }

    let max_outer = 3 * n + 10;
    for _ in 0..max_outer {
        let residual = b - a * &x;
        let grad = a.transpose() * residual;
        let mut best: Option<usize> = None;
        for j in 0..n {
            if !passive[j] && grad[j] > tol && best.is_none_or(|k| grad[j] > grad[k]) {
                best = Some(j);
            }
        }
        let Some(j) = best else { break };
        passive[j] = true;

        loop {
            let s = solve_passive(&passive)?;
            let infeasible: Vec<usize> = (0..n).filter(|&k| passive[k] && s[k] <= 0.0).collect();
            if infeasible.is_empty() {
                x = s;
                break;
            }
            let mut alpha = f64::INFINITY;
            for &k in &infeasible {
                let denom = x[k] - s[k];
                if denom > 0.0 {
                    alpha = alpha.min(x[k] / denom);
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            x += (s - &x) * alpha;
            for k in 0..n {
                if passive[k] && x[k] <= tol.max(f64::MIN_POSITIVE) {
                    passive[k] = false;
                    x[k] = 0.0;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    Ok(x)
}

/// Condition number of a symmetric positive semidefinite matrix (ratio of extreme eigenvalues).
pub fn spd_condition_number(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 1.0;
    }
    let eig = a.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
