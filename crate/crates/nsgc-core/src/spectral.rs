//! Spectral transforms, fractional operator powers, and closed-form
//! cosine analysis of repeated filtering.
//!
//! A spectral map `phi` acts on a symmetric operator through its
//! eigendecomposition: `F_phi(S) = P phi(Lambda) P^T`. Because the map
//! touches eigenvalues only, eigenvectors are preserved, the construction
//! commutes with node relabeling, and fractional powers `S^eps` are
//! well-defined through `|lambda|^eps` without requiring positive
//! semidefiniteness.
//!
//! The cosine routines evaluate the alignment of repeatedly filtered
//! signals with eigenvectors in closed form, normalizing eigenvalues by
//! the spectral radius first so that large `k` never overflows; the
//! identity `1 - cos^2 = (1 - cos)(1 + cos)` is used where the squared
//! form would lose precision.

use std::fmt;
use std::sync::Arc;

use crate::eigen::{self, EigenDecomposition};
use crate::error::{Error, Result};
use crate::mat::{Mat, SymMatrix};

/// Absolute threshold under which two eigenvalues count as equal, and under
/// which two mapped values count as colliding, in [`injectivity_check`].
pub const INJECTIVITY_ATOL: f64 = 1e-10;

/// `|lambda|^t` with the conventions `anything^0 = 1` and `0^t = 0` for
/// `t > 0`; evaluated as `exp(t ln|lambda|)`.
pub fn abs_power(lambda: f64, t: f64) -> f64 {
    if t == 0.0 {
        1.0
    } else if lambda == 0.0 {
        0.0
    } else {
        (t * lambda.abs().ln()).exp()
    }
}

/// Scalar function applied to a spectrum.
#[derive(Clone)]
pub enum SpectralMap {
    /// `lambda -> |lambda|^eps`, `eps` in (0, 1); sign information is
    /// deliberately discarded.
    PowerEps { eps: f64 },
    /// `lambda -> (1 - alpha) lambda + alpha`, `alpha` in (0, 1).
    Residual { alpha: f64 },
    /// The recurrence `g_{s+1}(lambda) = (1 - alpha) lambda g_s(lambda) + alpha`
    /// applied `steps` times from `g_0 = 1`; one step equals `Residual`.
    PprStep { alpha: f64, steps: u32 },
    /// Arbitrary scalar map; values must come back finite.
    Custom {
        label: String,
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl SpectralMap {
    pub fn validate(&self) -> Result<()> {
        match self {
            SpectralMap::PowerEps { eps } => {
                if !(eps.is_finite() && *eps > 0.0 && *eps < 1.0) {
                    return Err(Error::BadConfig(format!(
                        "power_eps requires eps in (0, 1), got {eps}"
                    )));
                }
            }
            SpectralMap::Residual { alpha } | SpectralMap::PprStep { alpha, .. } => {
                if !(alpha.is_finite() && *alpha > 0.0 && *alpha < 1.0) {
                    return Err(Error::BadConfig(format!(
                        "alpha must lie in (0, 1), got {alpha}"
                    )));
                }
            }
            SpectralMap::Custom { .. } => {}
        }
        Ok(())
    }

    /// Evaluates the map at one eigenvalue.
    pub fn eval(&self, lambda: f64) -> Result<f64> {
        self.validate()?;
        let value = match self {
            SpectralMap::PowerEps { eps } => abs_power(lambda, *eps),
            SpectralMap::Residual { alpha } => (1.0 - alpha) * lambda + alpha,
            SpectralMap::PprStep { alpha, steps } => {
                let mut g = 1.0;
                for _ in 0..*steps {
                    g = (1.0 - alpha) * lambda * g + alpha;
                }
                g
            }
            SpectralMap::Custom { f, .. } => f(lambda),
        };
        if !value.is_finite() {
            return Err(Error::DomainError(lambda));
        }
        Ok(value)
    }
}

impl fmt::Display for SpectralMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpectralMap::PowerEps { eps } => write!(f, "power_eps({eps})"),
            SpectralMap::Residual { alpha } => write!(f, "residual({alpha})"),
            SpectralMap::PprStep { alpha, steps } => {
                write!(f, "ppr_step({alpha}, steps={steps})")
            }
            SpectralMap::Custom { label, .. } => write!(f, "custom({label})"),
        }
    }
}

impl fmt::Debug for SpectralMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Applies the map through the eigendecomposition: `P phi(Lambda) P^T`,
/// symmetrized to scrub round-off.
pub fn transform(d: &EigenDecomposition, phi: &SpectralMap) -> Result<SymMatrix> {
    let n = d.n();
    let mut mapped = Vec::with_capacity(n);
    for &l in &d.eigvals {
        mapped.push(phi.eval(l)?);
    }
    let scaled = Mat::from_fn(n, n, |i, j| d.eigvecs[(i, j)] * mapped[j]);
    SymMatrix::symmetrized(scaled.matmul(&d.eigvecs.transpose()))
}

/// The fractional basis `S^eps = P |Lambda|^eps P^T`, `eps` in (0, 1).
pub fn non_spatial_basis(d: &EigenDecomposition, eps: f64) -> Result<SymMatrix> {
    transform(d, &SpectralMap::PowerEps { eps })
}

/// The operator stack `[S^0, S^eps, S^{2 eps}, .., S^{k eps}]`, all built
/// from one eigendecomposition of `s`.
#[derive(Clone, Debug)]
pub struct BasisStack {
    pub eps: f64,
    pub k: usize,
    /// `mats[i] = S^{i eps}`; `mats[0]` is the identity up to round-off.
    pub mats: Vec<Mat>,
    /// The shared eigendecomposition the stack was built from.
    pub decomp: EigenDecomposition,
}

pub fn basis_stack(s: &SymMatrix, eps: f64, k: usize) -> Result<BasisStack> {
    SpectralMap::PowerEps { eps }.validate()?;
    let d = eigen::eig_sym(s)?;
    let n = d.n();
    let pt = d.eigvecs.transpose();
    let mut mats = Vec::with_capacity(k + 1);
    for i in 0..=k {
        let t = eps * i as f64;
        let scaled = Mat::from_fn(n, n, |r, c| d.eigvecs[(r, c)] * abs_power(d.eigvals[c], t));
        mats.push(SymMatrix::symmetrized(scaled.matmul(&pt))?.into_mat());
    }
    Ok(BasisStack { eps, k, mats, decomp: d })
}

/// Cosine between `S h` and eigenvector `p_i`:
/// `alpha_i lambda_i / sqrt(sum_j alpha_j^2 lambda_j^2)` with
/// `alpha = P^T h`. Signed; errors with [`Error::DegenerateSignal`] when
/// `S h = 0`.
pub fn cosine_to_eigenvector(d: &EigenDecomposition, h: &[f64], i: usize) -> Result<f64> {
    let n = d.n();
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, num_nodes: n });
    }
    let alpha = d.coefficients(h)?;
    let num = alpha[i] * d.eigvals[i];
    let den_sq: f64 = alpha
        .iter()
        .zip(&d.eigvals)
        .map(|(a, l)| {
            let al = a * l;
            al * al
        })
        .sum();
    if den_sq == 0.0 {
        return Err(Error::DegenerateSignal);
    }
    Ok(num / den_sq.sqrt())
}

/// Cosine between `S^k h` and `S^k h2` in closed form:
/// `sum_i alpha_i beta_i lambda_i^{2k}` over the product of the filtered
/// norms. Eigenvalues are normalized by `|lambda_1|` before powering, so
/// arbitrary `k` stays finite.
pub fn cosine_between_filtered(
    d: &EigenDecomposition,
    h: &[f64],
    h2: &[f64],
    k: usize,
) -> Result<f64> {
    let alpha = d.coefficients(h)?;
    let beta = d.coefficients(h2)?;
    let t = normalized_spectrum(d);
    let mut num = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..d.n() {
        let w = pow2k(t[i], k);
        num += alpha[i] * beta[i] * w;
        na += alpha[i] * alpha[i] * w;
        nb += beta[i] * beta[i] * w;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateSignal);
    }
    Ok(num / (na.sqrt() * nb.sqrt()))
}

/// Spectrum divided by the spectral radius; all zeros when the matrix is 0.
fn normalized_spectrum(d: &EigenDecomposition) -> Vec<f64> {
    let lead = d.eigvals.first().map_or(0.0, |l| l.abs());
    if lead == 0.0 {
        vec![0.0; d.n()]
    } else {
        d.eigvals.iter().map(|l| l / lead).collect()
    }
}

/// `t^{2k}` for `|t| <= 1` without sign gymnastics.
fn pow2k(t: f64, k: usize) -> f64 {
    (t * t).powi(k as i32)
}

/// One step of a convergence trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryPoint {
    pub k: usize,
    /// Cosine of `S^k h` against the leading eigenvector `p_1`.
    pub cos_p1: f64,
    /// Cosine against the trailing eigenvector `p_n`.
    pub cos_pn: f64,
    /// Cosine between `S^k h` and `S^k h2`, when a second signal was given.
    pub cos_pair: Option<f64>,
    /// True when `S^k` annihilates a signal at this power; cosines are
    /// reported as 0 and carry no information.
    pub degenerate: bool,
}

/// Alignment of `S^k h` with the extreme eigenvectors for `k = 0..=k_max`.
#[derive(Clone, Debug)]
pub struct TrajectoryReport {
    pub points: Vec<TrajectoryPoint>,
    /// Index (canonical order) of the eigenvector the trajectory actually
    /// converges to: the first with a nonzero coefficient and a nonzero
    /// eigenvalue. `None` when filtering kills the signal entirely.
    pub effective_leading: Option<usize>,
}

pub fn convergence_trajectory(
    d: &EigenDecomposition,
    h: &[f64],
    h2: Option<&[f64]>,
    k_max: usize,
) -> Result<TrajectoryReport> {
    let n = d.n();
    let alpha = d.coefficients(h)?;
    let norm_a: f64 = alpha.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm_a == 0.0 {
        return Err(Error::DegenerateSignal);
    }
    let beta = match h2 {
        Some(v) => {
            let b = d.coefficients(v)?;
            if b.iter().map(|x| x * x).sum::<f64>().sqrt() == 0.0 {
                return Err(Error::DegenerateSignal);
            }
            Some(b)
        }
        None => None,
    };

    let t = normalized_spectrum(d);
    let lead = d.eigvals.first().map_or(0.0, |l| l.abs());
    let zero_tol = eigen::ZERO_EIGENVALUE_RTOL * lead.max(1.0);
    let coef_tol = 1e-12 * norm_a;
    let effective_leading = (0..n)
        .find(|&i| alpha[i].abs() > coef_tol && d.eigvals[i].abs() > zero_tol);

    let mut points = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        // Filtered squared norms; at k = 0 these are the raw norms.
        let na: f64 = (0..n).map(|i| alpha[i] * alpha[i] * pow2k(t[i], k)).sum();
        let degenerate_a = na == 0.0;
        let (cos_p1, cos_pn) = if degenerate_a {
            (0.0, 0.0)
        } else {
            let den = na.sqrt();
            let c1 = alpha[0] * signed_pow(t[0], k) / den;
            let cn = alpha[n - 1] * signed_pow(t[n - 1], k) / den;
            (c1, cn)
        };
        let (cos_pair, degenerate) = match &beta {
            None => (None, degenerate_a),
            Some(b) => {
                let nb: f64 = (0..n).map(|i| b[i] * b[i] * pow2k(t[i], k)).sum();
                if degenerate_a || nb == 0.0 {
                    (Some(0.0), true)
                } else {
                    let num: f64 =
                        (0..n).map(|i| alpha[i] * b[i] * pow2k(t[i], k)).sum();
                    (Some(num / (na.sqrt() * nb.sqrt())), false)
                }
            }
        };
        points.push(TrajectoryPoint { k, cos_p1, cos_pn, cos_pair, degenerate });
    }
    Ok(TrajectoryReport { points, effective_leading })
}

/// `t^k` preserving sign, `0^0 = 1`.
fn signed_pow(t: f64, k: usize) -> f64 {
    if k == 0 {
        1.0
    } else {
        t.powi(k as i32)
    }
}

/// Residuals `||(S_ring - phi(lambda_i) I) p_i||` for every eigenpair of
/// the original operator; small residuals certify that the transformed
/// operator preserves each eigenspace with the mapped eigenvalue, which
/// holds whether or not `phi` is injective on the spectrum.
#[derive(Clone, Debug)]
pub struct ContainmentReport {
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    pub tol: f64,
    pub pass: bool,
}

pub fn eigenspace_containment_check(
    d: &EigenDecomposition,
    transformed: &SymMatrix,
    phi: &SpectralMap,
    tol: f64,
) -> Result<ContainmentReport> {
    let n = d.n();
    if transformed.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "transformed operator is {}x{}, decomposition is {n}-dimensional",
            transformed.n(),
            transformed.n()
        )));
    }
    let mut residuals = Vec::with_capacity(n);
    for i in 0..n {
        let p_i = d.eigenvector(i);
        let mapped = phi.eval(d.eigvals[i])?;
        let image = transformed.as_mat().matvec(&p_i);
        let r: f64 = image
            .iter()
            .zip(&p_i)
            .map(|(x, p)| {
                let e = x - mapped * p;
                e * e
            })
            .sum::<f64>()
            .sqrt();
        residuals.push(r);
    }
    let max_residual = residuals.iter().fold(0.0f64, |m, &r| m.max(r));
    Ok(ContainmentReport { residuals, max_residual, tol, pass: max_residual <= tol })
}

/// Distinct spectrum values mapped to (numerically) equal outputs.
#[derive(Clone, Debug)]
pub struct InjectivityReport {
    /// Pairs `(lambda_i, lambda_j)` with `|lambda_i - lambda_j| >` atol but
    /// `|phi(lambda_i) - phi(lambda_j)| <=` atol.
    pub collisions: Vec<(f64, f64)>,
}

impl InjectivityReport {
    pub fn is_injective(&self) -> bool {
        self.collisions.is_empty()
    }
}

/// Checks whether `phi` is injective on the given spectrum, at absolute
/// tolerance [`INJECTIVITY_ATOL`] for both distinctness and collision.
pub fn injectivity_check(eigvals: &[f64], phi: &SpectralMap) -> Result<InjectivityReport> {
    let mapped: Vec<f64> = eigvals
        .iter()
        .map(|&l| phi.eval(l))
        .collect::<Result<_>>()?;
    let mut collisions = Vec::new();
    for i in 0..eigvals.len() {
        for j in (i + 1)..eigvals.len() {
            if (eigvals[i] - eigvals[j]).abs() > INJECTIVITY_ATOL
                && (mapped[i] - mapped[j]).abs() <= INJECTIVITY_ATOL
            {
                collisions.push((eigvals[i], eigvals[j]));
            }
        }
    }
    Ok(InjectivityReport { collisions })
}
