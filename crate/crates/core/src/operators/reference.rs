use nalgebra::DMatrix;

/// Gauss–Lobatto nodes and weights on `[-1, 1]` for polynomial degree `p`.
///
/// Nodes are the endpoints plus the roots of `P'_p`, found by Newton iteration
/// from Chebyshev–Lobatto initial guesses. `p = 0` gives the midpoint rule.
pub fn lobatto_rule(p: usize) -> (Vec<f64>, Vec<f64>) {
    if p == 0 {
        return (vec![0.0], vec![2.0]);
    }
    let n1 = p + 1;
    let mut x: Vec<f64> = (0..n1)
        .map(|i| (std::f64::consts::PI * i as f64 / p as f64).cos())
        .collect();
    let mut legendre = vec![vec![0.0; n1]; n1];

    for _ in 0..100 {
        let mut max_change: f64 = 0.0;
        for (i, xi) in x.iter_mut().enumerate() {
            let col = &mut legendre[i];
            col[0] = 1.0;
            col[1] = *xi;
            for k in 2..=p {
                col[k] = ((2 * k - 1) as f64 * *xi * col[k - 1] - (k - 1) as f64 * col[k - 2]) / k as f64;
            }
            let update = (*xi * col[p] - col[p - 1]) / (n1 as f64 * col[p]);
            *xi -= update;
            max_change = max_change.max(update.abs());
        }
        if max_change <= 1e-15 {
            break;
        }
    }

    for (i, xi) in x.iter().enumerate() {
        let col = &mut legendre[i];
        col[0] = 1.0;
        col[1] = *xi;
        for k in 2..=p {
            col[k] = ((2 * k - 1) as f64 * xi * col[k - 1] - (k - 1) as f64 * col[k - 2]) / k as f64;
        }
    }
    let mut w: Vec<f64> = (0..n1)
        .map(|i| 2.0 / (p as f64 * n1 as f64 * legendre[i][p] * legendre[i][p]))
        .collect();

    x.reverse();
    w.reverse();
    // exact symmetry about the origin
    for i in 0..n1 / 2 {
        let j = n1 - 1 - i;
        let xs = 0.5 * (x[j] - x[i]);
        let ws = 0.5 * (w[i] + w[j]);
        x[i] = -xs;
        x[j] = xs;
        w[i] = ws;
        w[j] = ws;
    }
    if n1 % 2 == 1 {
        x[n1 / 2] = 0.0;
    }
    x[0] = -1.0;
    x[n1 - 1] = 1.0;
    (x, w)
}

/// Lagrange differentiation matrix at `nodes` via barycentric weights.
pub fn lagrange_derivative_matrix(nodes: &[f64]) -> DMatrix<f64> {
    let n = nodes.len();
    let bary: Vec<f64> = (0..n)
        .map(|j| {
            1.0 / (0..n)
                .filter(|&k| k != j)
                .map(|k| nodes[j] - nodes[k])
                .product::<f64>()
        })
        .collect();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if i != j {
                let v = (bary[j] / bary[i]) / (nodes[i] - nodes[j]);
                d[(i, j)] = v;
                diag -= v;
            }
        }
        d[(i, i)] = diag;
    }
    d
}

/// Collocated Lobatto SBP operators on the reference interval.
#[derive(Clone, Debug)]
pub struct ReferenceElement {
    pub degree: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Diagonal mass matrix `diag(weights)`.
    pub mass: DMatrix<f64>,
    /// Weak differentiation matrix `Q = M D`.
    pub q: DMatrix<f64>,
    /// Boundary matrix `diag(-1, 0, ..., 0, 1)` (zero for `p = 0`).
    pub b: DMatrix<f64>,
    /// Nodal differentiation matrix `D`.
    pub diff: DMatrix<f64>,
}

impl ReferenceElement {
    pub fn new(p: usize) -> Self {
        let (nodes, weights) = lobatto_rule(p);
        let np = p + 1;
        let mass = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&weights));
        let diff = lagrange_derivative_matrix(&nodes);
        let q = &mass * &diff;
        let mut b = DMatrix::zeros(np, np);
        if p > 0 {
            b[(0, 0)] = -1.0;
            b[(np - 1, np - 1)] = 1.0;
        }
        ReferenceElement {
            degree: p,
            nodes,
            weights,
            mass,
            q,
            b,
            diff,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.degree + 1
    }
}

pub fn build_reference_element(p: usize) -> ReferenceElement {
    ReferenceElement::new(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force oracle: the unique weights on `nodes` integrating monomials
    /// `x^k`, `k < nodes.len()`, exactly on `[-1, 1]`.
    fn moment_weights(nodes: &[f64]) -> Vec<f64> {
        let n = nodes.len();
        let v = DMatrix::from_fn(n, n, |k, j| nodes[j].powi(k as i32));
        let m = nalgebra::DVector::from_fn(n, |k, _| {
            if k % 2 == 1 {
                0.0
            } else {
                2.0 / (k as f64 + 1.0)
            }
        });
        v.lu().solve(&m).unwrap().iter().copied().collect()
    }

    #[test]
    fn trapezoid_for_p1() {
        let (x, w) = lobatto_rule(1);
        assert_eq!(x, vec![-1.0, 1.0]);
        assert_eq!(w, vec![1.0, 1.0]);
    }

    #[test]
    fn p2_and_p3_match_moment_oracle() {
        let (x2, w2) = lobatto_rule(2);
        assert_eq!(x2, vec![-1.0, 0.0, 1.0]);
        let oracle = moment_weights(&x2);
        for (a, b) in w2.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!((w2[1] - 4.0 / 3.0).abs() < 1e-15);

        let (x3, w3) = lobatto_rule(3);
        let s = 1.0 / 5f64.sqrt();
        for (a, b) in x3.iter().zip(&[-1.0, -s, s, 1.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        for (a, b) in w3.iter().zip(&[1.0 / 6.0, 5.0 / 6.0, 5.0 / 6.0, 1.0 / 6.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        // exactness up to degree 2p - 1 = 5
        for k in 0..=5 {
            let quad: f64 = x3.iter().zip(&w3).map(|(x, w)| w * x.powi(k)).sum();
            let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            assert!((quad - exact).abs() < 1e-14);
        }
    }

    #[test]
    fn midpoint_for_p0() {
        let r = ReferenceElement::new(0);
        assert_eq!(r.nodes, vec![0.0]);
        assert_eq!(r.weights, vec![2.0]);
        assert_eq!(r.q[(0, 0)], 0.0);
        assert_eq!(r.b[(0, 0)], 0.0);
    }

    #[test]
    fn p1_weak_derivative_matrix() {
        let r = ReferenceElement::new(1);
        let expected = DMatrix::from_row_slice(2, 2, &[-0.5, 0.5, -0.5, 0.5]);
        assert!((r.q - expected).abs().max() < 1e-15);
    }

    #[test]
    fn sbp_identities_for_all_degrees() {
        for p in 0..=7 {
            let r = ReferenceElement::new(p);
            let sbp = &r.q + r.q.transpose() - &r.b;
            assert!(sbp.abs().max() < 1e-13, "p = {p}");
            let row_sums = &r.q * nalgebra::DVector::repeat(p + 1, 1.0);
            assert!(row_sums.abs().max() < 1e-13, "p = {p}");
            assert!(r.weights.iter().all(|&w| w > 0.0));
            assert!((r.weights.iter().sum::<f64>() - 2.0).abs() < 1e-14);
            assert!(r.nodes.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn exactness_degree_2p_minus_1() {
        for p in 1..=10 {
            let (x, w) = lobatto_rule(p);
            for k in 0..=(2 * p - 1) {
                let quad: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k as i32)).sum();
                let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
                assert!((quad - exact).abs() < 1e-13, "p = {p}, k = {k}");
            }
        }
    }
}
