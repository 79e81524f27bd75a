//! Finite-difference and interpolation weights.

/// Fornberg's recursion: weights for the `deriv`-th derivative at `x0` from
/// samples at `nodes`.
pub fn fornberg(x0: f64, nodes: &[f64], deriv: usize) -> Vec<f64> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; deriv + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(deriv);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[deriv]).collect()
}

/// Centered stencil on the integer lattice: returns `(half_width, weights)` for
/// the `deriv`-th derivative with formal accuracy `accuracy` (even), to be
/// scaled by `h^-deriv`.
pub fn central(deriv: usize, accuracy: usize) -> (usize, Vec<f64>) {
    assert!(accuracy % 2 == 0 && accuracy >= 2, "accuracy must be even");
    let half = (deriv + 1) / 2 - 1 + accuracy / 2;
    let nodes: Vec<f64> = (-(half as i64)..=half as i64).map(|k| k as f64).collect();
    (half, fornberg(0.0, &nodes, deriv))
}

/// Lagrange interpolation weights for the fractional position `t` within a
/// window of `points` consecutive unit-spaced nodes starting at offset
/// `first` (relative to the base node).
pub fn lagrange(t: f64, first: i64, points: usize) -> Vec<f64> {
    let nodes: Vec<f64> = (0..points).map(|k| (first + k as i64) as f64).collect();
    let mut w = vec![1.0; points];
    for (i, wi) in w.iter_mut().enumerate() {
        for (j, &xj) in nodes.iter().enumerate() {
            if i != j {
                *wi *= (t - xj) / (nodes[i] - xj);
            }
        }
    }
    w
}
