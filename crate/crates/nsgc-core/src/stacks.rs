//! Per-graph operator stacks `[T^0, T^1 .., T^k]` for the basis families
//! that models and filters consume.
//!
//! Two regimes exist: plain integer powers of a base operator, and
//! fractional powers `S^{i eps}` of the augmented adjacency obtained
//! through one eigendecomposition. Plain powers of unnormalized operators
//! grow geometrically, so stacks carry an overflow flag instead of
//! silently handing callers astronomically scaled matrices.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::{family_matrix, Graph, MatrixFamily};
use crate::mat::{Mat, SymMatrix};
use crate::spectral;

/// Entry magnitude beyond which a stack is flagged as overflowed.
pub const OVERFLOW_LIMIT: f64 = 1e12;

/// Which operator stack to build for a graph.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum StackFamily {
    /// `(A + I)^i`.
    RawAug,
    /// `(D~^{-1/2} (A + I) D~^{-1/2})^i`.
    SymNorm,
    /// `(D~^{-1} (A + I))^i`; powers of a nonsymmetric operator.
    RwNorm,
    /// `(D - A)^i`.
    Laplacian,
    /// `S^{i eps}` with `S = A + I`, built spectrally.
    PowerEps { eps: f64 },
}

impl StackFamily {
    pub fn name(&self) -> &'static str {
        match self {
            StackFamily::RawAug => "raw_aug",
            StackFamily::SymNorm => "sym_norm",
            StackFamily::RwNorm => "rw_norm",
            StackFamily::Laplacian => "laplacian",
            StackFamily::PowerEps { .. } => "power_eps",
        }
    }

    /// The base matrix family for the integer-power regimes.
    pub fn matrix_family(&self) -> Option<MatrixFamily> {
        match self {
            StackFamily::RawAug => Some(MatrixFamily::RawAug),
            StackFamily::SymNorm => Some(MatrixFamily::SymNorm),
            StackFamily::RwNorm => Some(MatrixFamily::RwNorm),
            StackFamily::Laplacian => Some(MatrixFamily::Laplacian),
            StackFamily::PowerEps { .. } => None,
        }
    }
}

impl std::fmt::Display for StackFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StackFamily::PowerEps { eps } => write!(f, "power_eps({eps})"),
            other => f.write_str(other.name()),
        }
    }
}

/// The `k + 1` operators for one graph, lowest power first.
#[derive(Clone, Debug)]
pub struct GraphStack {
    pub mats: Vec<Mat>,
    /// Some entry exceeded [`OVERFLOW_LIMIT`] or stopped being finite.
    pub overflow: bool,
}

pub fn graph_stack(g: &Graph, family: StackFamily, k: usize) -> Result<GraphStack> {
    let mats = match family {
        StackFamily::PowerEps { eps } => {
            let s = g.augmented_adjacency();
            spectral::basis_stack(&s, eps, k)?.mats
        }
        _ => {
            let t = family_matrix(g, family.matrix_family().expect("integer-power family"));
            let mut mats = Vec::with_capacity(k + 1);
            mats.push(Mat::identity(g.num_nodes()));
            for i in 1..=k {
                let prev = &mats[i - 1];
                mats.push(prev.matmul(&t));
            }
            mats
        }
    };
    let overflow = mats
        .iter()
        .any(|m| !m.is_finite() || m.max_abs() > OVERFLOW_LIMIT);
    Ok(GraphStack { mats, overflow })
}

/// Stack of the transformed operator itself, `[I, S_ring, S_ring^2, ..]`,
/// for driving integer-power machinery with a spectrally built base.
pub fn matrix_power_stack(base: &SymMatrix, k: usize) -> GraphStack {
    let mut mats = Vec::with_capacity(k + 1);
    mats.push(Mat::identity(base.n()));
    for i in 1..=k {
        let prev = &mats[i - 1];
        mats.push(prev.matmul(base.as_mat()));
    }
    let overflow = mats
        .iter()
        .any(|m| !m.is_finite() || m.max_abs() > OVERFLOW_LIMIT);
    GraphStack { mats, overflow }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    fn triangle() -> Graph {
        Graph::new(
            3,
            vec![(0, 1), (1, 2), (0, 2)],
            Mat::from_fn(3, 1, |_, _| 1.0),
            None,
            None,
        )
        .unwrap()
    }

    /// On the triangle, A + I is the all-ones matrix J, and J^i = 3^{i-1} J.
    #[test]
    fn raw_aug_powers_of_triangle() {
        let stack = graph_stack(&triangle(), StackFamily::RawAug, 3).unwrap();
        assert!(!stack.overflow);
        assert_eq!(stack.mats[0], Mat::identity(3));
        for (i, scale) in [(1usize, 1.0), (2, 3.0), (3, 9.0)] {
            for r in 0..3 {
                for c in 0..3 {
                    assert_eq!(stack.mats[i][(r, c)], scale);
                }
            }
        }
    }

    /// sym_norm of the triangle is J/3, which is idempotent.
    #[test]
    fn sym_norm_triangle_is_idempotent() {
        let stack = graph_stack(&triangle(), StackFamily::SymNorm, 4).unwrap();
        for i in 1..=4 {
            assert!(
                stack.mats[i].max_abs_diff(&stack.mats[1]) < 1e-14,
                "power {i} drifted"
            );
        }
        assert!((stack.mats[1][(0, 1)] - 1.0 / 3.0).abs() < 1e-15);
    }

    /// Fractional powers of J = A + I on the triangle: spectrum (3, 0, 0),
    /// so S^eps = 3^{eps - 1} J.
    #[test]
    fn power_eps_triangle_closed_form() {
        let eps = 0.4;
        let stack = graph_stack(&triangle(), StackFamily::PowerEps { eps }, 2).unwrap();
        let want1 = 3.0f64.powf(eps - 1.0);
        let want2 = 3.0f64.powf(2.0 * eps - 1.0);
        for r in 0..3 {
            for c in 0..3 {
                assert!((stack.mats[1][(r, c)] - want1).abs() < 1e-12);
                assert!((stack.mats[2][(r, c)] - want2).abs() < 1e-12);
            }
        }
    }

    /// rw_norm powers keep rows summing to one (row-stochastic operator).
    #[test]
    fn rw_norm_powers_stay_stochastic() {
        let g = Graph::new(
            4,
            vec![(0, 1), (1, 2), (2, 3)],
            Mat::from_fn(4, 1, |_, _| 1.0),
            None,
            None,
        )
        .unwrap();
        let stack = graph_stack(&g, StackFamily::RwNorm, 3).unwrap();
        for m in &stack.mats {
            for i in 0..4 {
                let s: f64 = m.row(i).iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn overflow_flagged_on_unnormalized_high_powers() {
        // Complete graph on 40 nodes: (A + I)^k = 40^{k-1} J.
        let mut edges = Vec::new();
        for u in 0..40 {
            for v in (u + 1)..40 {
                edges.push((u, v));
            }
        }
        let g = Graph::new(40, edges, Mat::from_fn(40, 1, |_, _| 1.0), None, None).unwrap();
        let ok = graph_stack(&g, StackFamily::RawAug, 5).unwrap();
        assert!(!ok.overflow);
        let over = graph_stack(&g, StackFamily::RawAug, 9).unwrap();
        assert!(over.overflow);
    }
}
