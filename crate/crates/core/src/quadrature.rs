//! Legendre polynomials and Gauss-type quadrature rules on [-1, 1].

use std::f64::consts::PI;

/// Returns `(P_n(x), P_n'(x))` by the three-term recurrence.
pub fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p_prev, mut p) = (1.0, x);
    let (mut d_prev, mut d) = (0.0, 1.0);
    for k in 1..n {
        let kf = k as f64;
        let p_next = ((2.0 * kf + 1.0) * x * p - kf * p_prev) / (kf + 1.0);
        // P'_{k+1} = P'_{k-1} + (2k+1) P_k
        let d_next = d_prev + (2.0 * kf + 1.0) * p;
        p_prev = p;
        p = p_next;
        d_prev = d;
        d = d_next;
    }
    (p, d)
}

/// Gauss-Legendre nodes (ascending) and weights with `n` points.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Gauss-Lobatto-Legendre nodes (ascending, including +-1) and weights with `n >= 2` points.
pub fn gauss_lobatto(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2, "Lobatto rule needs at least two points");
    let p = n - 1;
    let mut nodes = vec![0.0; n];
    nodes[0] = -1.0;
    nodes[p] = 1.0;
    // interior nodes are the roots of P'_p
    for i in 1..p {
        let mut x = -(PI * i as f64 / p as f64).cos();
        for _ in 0..100 {
            let (lp, dlp) = legendre(p, x);
            // (1 - x^2) P_p'' = 2x P_p' - p(p+1) P_p
            let d2 = (2.0 * x * dlp - (p * (p + 1)) as f64 * lp) / (1.0 - x * x);
            let dx = dlp / d2;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
    }
    let pf = (p * (p + 1)) as f64;
    let weights = nodes
        .iter()
        .map(|&x| {
            let (lp, _) = legendre(p, x);
            2.0 / (pf * lp * lp)
        })
        .collect();
    (nodes, weights)
}
