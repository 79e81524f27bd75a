//! Small dense linear-algebra helpers shared across the crate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, WeylError};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// `J ⊗ I_{k/2}` with `J = [[0, 1], [-1, 0]]`.
pub fn symplectic_unit(k: usize) -> Mat {
    let h = k / 2;
    let mut m = Mat::zeros(k, k);
    for i in 0..h {
        m[(i, h + i)] = 1.0;
        m[(h + i, i)] = -1.0;
    }
    m
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

pub fn antisymmetry_residual(m: &Mat) -> f64 {
    max_abs(&(m + m.transpose()))
}

pub fn symmetry_residual(m: &Mat) -> f64 {
    max_abs(&(m - m.transpose()))
}

pub fn expm(a: &Mat) -> Mat {
    a.clone().exp()
}

/// Largest real part over the spectrum of `a`.
pub fn spectral_abscissa(a: &Mat) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .fold(f64::NEG_INFINITY, |acc, z| acc.max(z.re))
}

pub fn min_eigenvalue_sym(m: &Mat) -> f64 {
    symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |acc, &v| acc.min(v))
}

pub fn max_eigenvalue_sym(m: &Mat) -> f64 {
    symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .fold(f64::NEG_INFINITY, |acc, &v| acc.max(v))
}

/// Smallest eigenvalue of the Hermitian matrix `s + i a` (`s` symmetric, `a`
/// antisymmetric), through the real embedding `[[s, -a], [a, s]]`.
pub fn min_eigenvalue_hermitian(s: &Mat, a: &Mat) -> f64 {
    let n = s.nrows();
    let mut big = Mat::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(s);
    big.view_mut((n, n), (n, n)).copy_from(s);
    big.view_mut((0, n), (n, n)).copy_from(&(-a));
    big.view_mut((n, 0), (n, n)).copy_from(a);
    min_eigenvalue_sym(&big)
}

pub fn cholesky_inverse(m: &Mat, what: &str) -> Result<(Mat, f64)> {
    let chol = nalgebra::Cholesky::new(symmetrize(m))
        .ok_or_else(|| WeylError::NotPositiveDefinite(what.to_string()))?;
    let det = chol.l().diagonal().iter().map(|d| d * d).product::<f64>();
    Ok((chol.inverse(), det))
}

pub fn inverse(m: &Mat, what: &str) -> Result<Mat> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| WeylError::InvalidInput(format!("{what} is singular")))
}

/// Solves `a x + x aᵀ + q = 0` for symmetric `x` through the linear system in
/// the `n(n+1)/2` upper-triangular unknowns.
pub fn solve_lyapunov(a: &Mat, q: &Mat) -> Result<Mat> {
    let n = a.nrows();
    if a.ncols() != n || q.nrows() != n || q.ncols() != n {
        return Err(WeylError::Dimension(format!(
            "Lyapunov equation needs square matrices of equal order, got A {}x{} and Q {}x{}",
            a.nrows(),
            a.ncols(),
            q.nrows(),
            q.ncols()
        )));
    }
    let mut index = vec![vec![0usize; n]; n];
    let mut pairs = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            index[i][j] = pairs.len();
            index[j][i] = pairs.len();
            pairs.push((i, j));
        }
    }
    let p = pairs.len();
    let mut sys = Mat::zeros(p, p);
    let mut rhs = Vector::zeros(p);
    for (row, &(i, j)) in pairs.iter().enumerate() {
        // (A X)_ij + (X Aᵀ)_ij = Σ_k A_ik X_kj + Σ_k X_ik A_jk
        for k in 0..n {
            sys[(row, index[k][j])] += a[(i, k)];
            sys[(row, index[i][k])] += a[(j, k)];
        }
        rhs[row] = -q[(i, j)];
    }
    let sol = sys
        .lu()
        .solve(&rhs)
        .ok_or_else(|| WeylError::InvalidInput("Lyapunov system is singular".into()))?;
    let mut x = Mat::zeros(n, n);
    for (k, &(i, j)) in pairs.iter().enumerate() {
        x[(i, j)] = sol[k];
        x[(j, i)] = sol[k];
    }
    Ok(x)
}

pub fn lyapunov_residual(a: &Mat, x: &Mat, q: &Mat) -> f64 {
    max_abs(&(a * x + x * a.transpose() + q))
}

/// Rank of the Kalman controllability matrix `[B, AB, ..., A^{n-1}B]`.
pub fn controllability_rank(a: &Mat, b: &Mat, tol: f64) -> usize {
    let n = a.nrows();
    let m = b.ncols();
    let mut ctrb = Mat::zeros(n, n * m);
    let mut block = b.clone();
    for k in 0..n {
        ctrb.view_mut((0, k * m), (n, m)).copy_from(&block);
        block = a * block;
    }
    let sv = ctrb.singular_values();
    let top = sv.iter().fold(0.0f64, |acc, &v| acc.max(v));
    sv.iter().filter(|&&v| v > tol * top.max(1.0)).count()
}

pub fn quad_form(m: &Mat, x: &[f64]) -> f64 {
    let n = x.len();
    let mut acc = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += m[(i, j)] * x[j];
        }
        acc += x[i] * row;
    }
    acc
}

pub fn bilinear(m: &Mat, x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..x.len() {
        let mut row = 0.0;
        for j in 0..y.len() {
            row += m[(i, j)] * y[j];
        }
        acc += x[i] * row;
    }
    acc
}

pub fn mat_vec(m: &Mat, x: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * x[j]).sum())
        .collect()
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}
