//! Helpers shared by the numerical test suites.
//!
//! These are library code, not `#[cfg(test)]`, so downstream crates can
//! reuse the same generators and checkers in their own tests. Nothing here
//! is meant for production paths.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::eigen::EigenDecomposition;
use crate::graph::{Graph, Permutation};
use crate::mat::{Mat, SymMatrix};

/// Seeded RNG with a portable, platform-independent stream.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal via Box-Muller; avoids distribution-crate churn.
pub fn normal(rng: &mut impl Rng) -> f64 {
    loop {
        let u: f64 = rng.gen();
        let v: f64 = rng.gen();
        if u > f64::MIN_POSITIVE {
            return (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos();
        }
    }
}

pub fn random_vector(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * normal(rng)).collect()
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Mat {
    let mut m = Mat::zeros(rows, cols);
    for v in m.data_mut() {
        *v = scale * normal(rng);
    }
    m
}

/// Dense symmetric matrix with Gaussian entries of the given scale.
pub fn random_symmetric(rng: &mut impl Rng, n: usize, scale: f64) -> SymMatrix {
    let mut m = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = scale * normal(rng);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    SymMatrix::try_new(m).expect("built symmetric")
}

/// Random orthogonal matrix from Gram-Schmidt on a Gaussian matrix.
pub fn random_orthogonal(rng: &mut impl Rng, n: usize) -> Mat {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v = random_vector(rng, n, 1.0);
        for u in &cols {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            for (vi, ui) in v.iter_mut().zip(u) {
                *vi -= dot * ui;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            for vi in &mut v {
                *vi /= norm;
            }
            cols.push(v);
        }
    }
    Mat::from_fn(n, n, |i, j| cols[j][i])
}

/// Uniform random permutation (Fisher-Yates).
pub fn random_permutation(rng: &mut impl Rng, n: usize) -> Permutation {
    let mut map: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        map.swap(i, j);
    }
    Permutation::new(map).expect("permutation by construction")
}

/// Erdos-Renyi graph G(n, p) with constant scalar node features.
pub fn random_graph(rng: &mut impl Rng, n: usize, p: f64) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let feat = Mat::from_fn(n, 1, |_, _| 1.0);
    Graph::new(n, edges, feat, None, None).expect("valid random graph")
}

/// Asserts orthonormality of the eigenvector matrix and reconstruction of
/// the input, both within `tol` (entrywise; reconstruction is relative to
/// `max(1, ||S||_F)`).
pub fn check_eigen(s: &SymMatrix, d: &EigenDecomposition, tol: f64) {
    let n = s.n();
    assert_eq!(d.eigvals.len(), n);
    let gram = d.eigvecs.transpose().matmul(&d.eigvecs);
    let defect = gram.max_abs_diff(&Mat::identity(n));
    assert!(defect <= tol, "orthonormality defect {defect:e} > {tol:e}");
    let rebuilt = crate::eigen::reconstruct(d);
    let scale = s.as_mat().frobenius_norm().max(1.0);
    let err = rebuilt.as_mat().max_abs_diff(s.as_mat());
    assert!(
        err <= tol * scale,
        "reconstruction error {err:e} > {tol:e} * {scale:e}"
    );
}

/// Gaussian elimination with partial pivoting; test-side oracle for small
/// dense solves (e.g. closed-form diffusion limits).
pub fn gauss_solve(a: &Mat, b: &[f64]) -> Vec<f64> {
    let n = a.rows();
    assert!(a.is_square() && b.len() == n, "gauss_solve shape");
    let mut m = a.clone();
    let mut x = b.to_vec();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| m[(i, col)].abs().partial_cmp(&m[(j, col)].abs()).unwrap())
            .unwrap();
        let pivot = m[(pivot_row, col)];
        assert!(pivot.abs() > 1e-300, "singular system in gauss_solve");
        if pivot_row != col {
            for j in 0..n {
                let tmp = m[(col, j)];
                m[(col, j)] = m[(pivot_row, j)];
                m[(pivot_row, j)] = tmp;
            }
            x.swap(col, pivot_row);
        }
        for row in (col + 1)..n {
            let factor = m[(row, col)] / m[(col, col)];
            if factor != 0.0 {
                for j in col..n {
                    let v = m[(col, j)];
                    m[(row, j)] -= factor * v;
                }
                x[row] -= factor * x[col];
            }
        }
    }
    for col in (0..n).rev() {
        let mut acc = x[col];
        for j in (col + 1)..n {
            acc -= m[(col, j)] * x[j];
        }
        x[col] = acc / m[(col, col)];
    }
    x
}

/// Symmetric central difference `(f(x+h) - f(x-h)) / 2h`.
pub fn central_difference(mut f: impl FnMut(f64) -> f64, x0: f64, step: f64) -> f64 {
    (f(x0 + step) - f(x0 - step)) / (2.0 * step)
}

/// Relative error with a floor, so near-zero pairs compare absolutely.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
