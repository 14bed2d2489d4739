//! One-sided Jacobi SVD and minimum-norm least squares.
//!
//! Filter fitting needs least squares that stays honest on ill-conditioned
//! Vandermonde systems, so the solver works through an orthogonal
//! factorization of the system matrix itself; the normal equations are
//! never formed. One-sided Jacobi orthogonalizes the columns of `A` by
//! plane rotations accumulated into `V`, giving `A = U diag(sigma) V^T`
//! with small singular values resolved to high relative accuracy.

use crate::error::{Error, Result};
use crate::mat::Mat;

/// Pairwise column orthogonality threshold, relative to the column norms.
const ORTH_RTOL: f64 = 1e-13;

/// Sweep budget; one-sided Jacobi at p <= a few dozen columns converges in
/// single-digit sweeps.
const MAX_SWEEPS: usize = 60;

/// Relative singular-value cutoff used by [`lstsq_min_norm`] both for the
/// pseudo-inverse truncation and the rank estimate.
pub const RANK_RTOL: f64 = 1e-10;

/// Thin SVD `A = U diag(sigma) V^T`.
///
/// `u` is `m x r`, `v` is `p x r` with `r = min(m, p)`; singular values are
/// nonnegative and descending. Columns of `u` paired with zero singular
/// values are zero vectors, not arbitrary basis completions.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: Mat,
    pub sigma: Vec<f64>,
    pub v: Mat,
}

pub fn svd_jacobi(a: &Mat) -> Result<Svd> {
    if a.rows() >= a.cols() {
        svd_tall(a)
    } else {
        let t = svd_tall(&a.transpose())?;
        Ok(Svd { u: t.v, sigma: t.sigma, v: t.u })
    }
}

/// One-sided Jacobi on a tall (or square) matrix, m >= p.
fn svd_tall(a: &Mat) -> Result<Svd> {
    let (m, p) = (a.rows(), a.cols());
    let mut w = a.clone();
    let mut v = Mat::identity(p);

    let mut converged = p < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for i in 0..p - 1 {
            for j in i + 1..p {
                let mut aa = 0.0;
                let mut bb = 0.0;
                let mut g = 0.0;
                for k in 0..m {
                    let wi = w[(k, i)];
                    let wj = w[(k, j)];
                    aa += wi * wi;
                    bb += wj * wj;
                    g += wi * wj;
                }
                if aa == 0.0 || bb == 0.0 || g.abs() <= ORTH_RTOL * (aa * bb).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (bb - aa) / (2.0 * g);
                let t = if zeta.abs() > 1e150 {
                    0.5 / zeta
                } else {
                    let sign = if zeta >= 0.0 { 1.0 } else { -1.0 };
                    sign / (zeta.abs() + (1.0 + zeta * zeta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..m {
                    let wi = w[(k, i)];
                    let wj = w[(k, j)];
                    w[(k, i)] = c * wi - s * wj;
                    w[(k, j)] = s * wi + c * wj;
                }
                for k in 0..p {
                    let vi = v[(k, i)];
                    let vj = v[(k, j)];
                    v[(k, i)] = c * vi - s * vj;
                    v[(k, j)] = s * vi + c * vj;
                }
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::NoConvergence(MAX_SWEEPS));
    }

    let mut order: Vec<usize> = (0..p).collect();
    let norms: Vec<f64> = (0..p)
        .map(|j| (0..m).map(|k| w[(k, j)] * w[(k, j)]).sum::<f64>().sqrt())
        .collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap().then(i.cmp(&j)));

    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let u = Mat::from_fn(m, p, |k, c| {
        let j = order[c];
        if norms[j] > 0.0 {
            w[(k, j)] / norms[j]
        } else {
            0.0
        }
    });
    let v_sorted = Mat::from_fn(p, p, |k, c| v[(k, order[c])]);
    Ok(Svd { u, sigma, v: v_sorted })
}

/// Least-squares fit of `A x ~ b`.
#[derive(Clone, Debug)]
pub struct LstsqFit {
    pub x: Vec<f64>,
    /// `||A x - b||_2` at the solution.
    pub residual: f64,
    /// Singular values above `RANK_RTOL * sigma_max`.
    pub rank: usize,
    /// True when `rank < cols`: the unknowns are not uniquely determined
    /// and `x` is the minimum-norm choice among the solutions.
    pub rank_deficient: bool,
}

/// Minimum-norm least squares through the SVD pseudo-inverse.
pub fn lstsq_min_norm(a: &Mat, b: &[f64]) -> Result<LstsqFit> {
    if b.len() != a.rows() {
        return Err(Error::DimensionMismatch(format!(
            "rhs length {} for a {}x{} system",
            b.len(),
            a.rows(),
            a.cols()
        )));
    }
    let svd = svd_jacobi(a)?;
    let smax = svd.sigma.first().copied().unwrap_or(0.0);
    let cutoff = RANK_RTOL * smax;
    let mut x = vec![0.0; a.cols()];
    let mut rank = 0;
    for (i, &s) in svd.sigma.iter().enumerate() {
        if s <= cutoff || s == 0.0 {
            break;
        }
        rank += 1;
        let mut ub = 0.0;
        for k in 0..a.rows() {
            ub += svd.u[(k, i)] * b[k];
        }
        let coef = ub / s;
        for k in 0..a.cols() {
            x[k] += coef * svd.v[(k, i)];
        }
    }
    let ax = a.matvec(&x);
    let residual = ax
        .iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt();
    Ok(LstsqFit { x, residual, rank, rank_deficient: rank < a.cols() })
}
