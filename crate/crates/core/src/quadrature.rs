//! Gaussian quadrature rules.

use nalgebra::SymmetricEigen;

use crate::linalg::Mat;

fn golub_welsch(diag: &[f64], off: &[f64], mu0: f64) -> (Vec<f64>, Vec<f64>) {
    let n = diag.len();
    let mut jac = Mat::zeros(n, n);
    for i in 0..n {
        jac[(i, i)] = diag[i];
        if i + 1 < n {
            jac[(i, i + 1)] = off[i];
            jac[(i + 1, i)] = off[i];
        }
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

/// Probabilists' Gauss–Hermite rule: `∫ f(x) e^{-x²/2} dx ≈ Σ w_k f(x_k)`.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n).map(|k| (k as f64).sqrt()).collect();
    let (x, mut w) = golub_welsch(&diag, &off, (2.0 * std::f64::consts::PI).sqrt());
    // symmetrize against eigen-solver noise
    for k in 0..n / 2 {
        let avg = 0.5 * (w[k] + w[n - 1 - k]);
        w[k] = avg;
        w[n - 1 - k] = avg;
    }
    (x, w)
}

/// Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n)
        .map(|k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        })
        .collect();
    golub_welsch(&diag, &off, 2.0)
}

/// Tensor-product rule for `∫_{R^d} f(v) e^{-½ vᵀ Λ⁻¹ v} dv` in coordinates
/// whitened by the Cholesky factor of `Λ`.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn whitened_hermite(lambda: &Mat, per_axis: usize) -> Self {
        let d = lambda.nrows();
        let chol = nalgebra::Cholesky::new(lambda.clone())
            .expect("shape matrix must be positive definite")
            .l();
        let det_l: f64 = chol.diagonal().iter().product();
        let (x, w) = gauss_hermite(per_axis);
        let total = per_axis.pow(d as u32);
        let mut nodes = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; d];
        for _ in 0..total {
            let wv: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
            let v: Vec<f64> = (0..d)
                .map(|r| (0..d).map(|c| chol[(r, c)] * wv[c]).sum())
                .collect();
            nodes.push(v);
            weights.push(idx.iter().map(|&i| w[i]).product::<f64>() * det_l);
            for a in (0..d).rev() {
                idx[a] += 1;
                if idx[a] < per_axis {
                    break;
                }
                idx[a] = 0;
            }
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}
