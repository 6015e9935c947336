//! Small dense helpers shared by the geometry and distortion code.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Solution of the symmetric-definite pencil `A v = μ B v`.
#[derive(Debug, Clone)]
pub struct PencilEigen {
    /// Eigenvalues in descending order.
    pub values: Vec<f64>,
    /// `B`-orthonormal eigenvectors, column `i` belongs to `values[i]`.
    pub vectors: DMatrix<f64>,
}

/// Generalized symmetric eigenproblem via Cholesky of `b`:
/// `b = L Lᵗ`, then the ordinary problem for `L⁻¹ a L⁻ᵗ`.
pub fn pencil_eigen(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<PencilEigen> {
    let n = a.nrows();
    let chol = b
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Degenerate("metric is not positive definite".into()))?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("singular Cholesky factor".into()))?;
    let mut c = &l_inv * a * l_inv.transpose();
    // symmetrize away round-off before the symmetric solver
    for i in 0..n {
        for j in 0..i {
            let m = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = m;
            c[(j, i)] = m;
        }
    }
    let eig = c.symmetric_eigen();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let lt_inv = l_inv.transpose();
    let mut vectors = DMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (col, &i) in idx.iter().enumerate() {
        values.push(eig.eigenvalues[i]);
        let v = &lt_inv * eig.eigenvectors.column(i);
        vectors.set_column(col, &v);
    }
    Ok(PencilEigen { values, vectors })
}

/// `g(u, v)` for a bilinear form given by its component matrix.
#[inline]
pub fn inner(g: &DMatrix<f64>, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    let mut acc = 0.0;
    for i in 0..g.nrows() {
        let mut row = 0.0;
        for j in 0..g.ncols() {
            row += g[(i, j)] * v[j];
        }
        acc += u[i] * row;
    }
    acc
}

/// Gram–Schmidt with respect to `g`; vectors whose residual norm falls below
/// `drop_tol` are discarded.
pub fn gram_schmidt(g: &DMatrix<f64>, vs: &[DVector<f64>], drop_tol: f64) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(vs.len());
    for v in vs {
        let mut w = v.clone();
        // two passes keep the result orthogonal to working precision
        for _ in 0..2 {
            for e in &out {
                let c = inner(g, e, &w);
                w.axpy(-c, e, 1.0);
            }
        }
        let n2 = inner(g, &w, &w);
        if n2 > drop_tol * drop_tol {
            out.push(w / n2.sqrt());
        }
    }
    out
}

/// Elementary symmetric polynomials `e_1..e_n` of `xs`.
pub fn elementary_symmetric(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut e = vec![0.0; n + 1];
    e[0] = 1.0;
    for (k, &x) in xs.iter().enumerate() {
        for j in (1..=k + 1).rev() {
            e[j] += x * e[j - 1];
        }
    }
    e[1..].to_vec()
}

/// Sum with pairwise (cascade) splitting; result depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre order must be positive");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..(n + 1) / 2 {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (
        x.iter().map(|t| mid + half * t).collect(),
        w.iter().map(|wi| wi * half).collect(),
    )
}

/// `∫_a^b f` by a fixed Gauss–Legendre rule.
pub fn integrate_1d(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let (x, w) = gauss_legendre_on(n, a, b);
    x.iter().zip(&w).map(|(xi, wi)| wi * f(*xi)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in 1..12 {
            let (x, w) = gauss_legendre(n);
            for deg in 0..(2 * n) {
                let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} deg={deg} q={q}");
            }
        }
    }

    #[test]
    fn elementary_symmetric_small_case() {
        let e = elementary_symmetric(&[1.0, 2.0, 3.0]);
        assert_eq!(e, vec![6.0, 11.0, 6.0]);
    }

    #[test]
    fn pencil_matches_direct_for_identity_metric() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let b = DMatrix::identity(2, 2);
        let p = pencil_eigen(&a, &b).unwrap();
        assert!((p.values[0] - 3.0).abs() < 1e-14);
        assert!((p.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn pencil_vectors_are_b_orthonormal() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 1.0]);
        let b = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 0.5]);
        let p = pencil_eigen(&a, &b).unwrap();
        let gram = p.vectors.transpose() * &b * &p.vectors;
        assert!((gram - DMatrix::identity(3, 3)).amax() < 1e-12);
        let d = p.vectors.transpose() * &a * &p.vectors;
        for i in 0..3 {
            assert!((d[(i, i)] - p.values[i]).abs() < 1e-12);
        }
    }
}
