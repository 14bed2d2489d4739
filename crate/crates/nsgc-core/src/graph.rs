//! Graph ingestion, canonical matrix representations, and permutations.
//!
//! Graphs are simple and undirected: no self-loops, no duplicate edges,
//! at most [`MAX_NODES`] nodes (everything downstream is dense). Edges are
//! normalized to `(min, max)` and sorted, with optional per-edge features
//! kept aligned through normalization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::{Mat, SymMatrix};

/// Dense-representation cap on node count.
pub const MAX_NODES: usize = 256;

#[derive(Clone, Debug)]
pub struct Graph {
    num_nodes: usize,
    /// Normalized `(u, v)` with `u < v`, sorted lexicographically.
    edges: Vec<(usize, usize)>,
    /// `num_nodes x d_node`; `d_node` may be 0.
    node_feat: Mat,
    /// `num_edges x d_edge`, row `e` aligned with `edges[e]`.
    edge_feat: Option<Mat>,
    /// Optional regression or class label (classes stored as their index).
    target: Option<f64>,
}

impl Graph {
    pub fn new(
        num_nodes: usize,
        edges: Vec<(usize, usize)>,
        node_feat: Mat,
        edge_feat: Option<Mat>,
        target: Option<f64>,
    ) -> Result<Self> {
        if num_nodes == 0 {
            return Err(Error::BadConfig("graph must have at least one node".into()));
        }
        if num_nodes > MAX_NODES {
            return Err(Error::TooManyNodes(num_nodes, MAX_NODES));
        }
        if node_feat.rows() != num_nodes {
            return Err(Error::RaggedFeatures(format!(
                "{} node feature rows for {} nodes",
                node_feat.rows(),
                num_nodes
            )));
        }

        let mut order: Vec<usize> = (0..edges.len()).collect();
        let mut normalized: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for &(u, v) in &edges {
            for idx in [u, v] {
                if idx >= num_nodes {
                    return Err(Error::IndexOutOfRange { index: idx, num_nodes });
                }
            }
            if u == v {
                return Err(Error::SelfLoop(u));
            }
            normalized.push((u.min(v), u.max(v)));
        }
        order.sort_by_key(|&e| normalized[e]);
        let sorted: Vec<(usize, usize)> = order.iter().map(|&e| normalized[e]).collect();
        for w in sorted.windows(2) {
            if w[0] == w[1] {
                return Err(Error::DuplicateEdge(w[0].0, w[0].1));
            }
        }

        let edge_feat = match edge_feat {
            None => None,
            Some(f) => {
                if f.rows() != sorted.len() {
                    return Err(Error::RaggedFeatures(format!(
                        "{} edge feature rows for {} edges",
                        f.rows(),
                        sorted.len()
                    )));
                }
                let d = f.cols();
                Some(Mat::from_fn(sorted.len(), d, |e, j| f[(order[e], j)]))
            }
        };

        Ok(Graph { num_nodes, edges: sorted, node_feat, edge_feat, target })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn node_feat(&self) -> &Mat {
        &self.node_feat
    }

    pub fn edge_feat(&self) -> Option<&Mat> {
        self.edge_feat.as_ref()
    }

    pub fn edge_feat_dim(&self) -> usize {
        self.edge_feat.as_ref().map_or(0, Mat::cols)
    }

    pub fn target(&self) -> Option<f64> {
        self.target
    }

    pub fn set_target(&mut self, t: Option<f64>) {
        self.target = t;
    }

    /// Index into `edges()` for the pair `{u, v}`, if present.
    pub fn edge_index(&self, u: usize, v: usize) -> Option<usize> {
        let key = (u.min(v), u.max(v));
        self.edges.binary_search(&key).ok()
    }

    pub fn degrees(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.num_nodes];
        for &(u, v) in &self.edges {
            d[u] += 1.0;
            d[v] += 1.0;
        }
        d
    }

    pub fn adjacency(&self) -> SymMatrix {
        let mut a = Mat::zeros(self.num_nodes, self.num_nodes);
        for &(u, v) in &self.edges {
            a[(u, v)] = 1.0;
            a[(v, u)] = 1.0;
        }
        SymMatrix::try_new(a).expect("adjacency is symmetric")
    }

    /// Adjacency with self-loops, `A + I`.
    pub fn augmented_adjacency(&self) -> SymMatrix {
        let mut a = self.adjacency().into_mat();
        for i in 0..self.num_nodes {
            a[(i, i)] += 1.0;
        }
        SymMatrix::try_new(a).expect("augmented adjacency is symmetric")
    }
}

/// Canonical base operators built from a graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixFamily {
    /// `A + I`, unnormalized.
    RawAug,
    /// `D~^{-1/2} (A + I) D~^{-1/2}` with `D~ = D + I`.
    SymNorm,
    /// `D~^{-1} (A + I)`; not symmetric in general.
    RwNorm,
    /// Combinatorial Laplacian `D - A`.
    Laplacian,
}

impl MatrixFamily {
    pub fn name(&self) -> &'static str {
        match self {
            MatrixFamily::RawAug => "raw_aug",
            MatrixFamily::SymNorm => "sym_norm",
            MatrixFamily::RwNorm => "rw_norm",
            MatrixFamily::Laplacian => "laplacian",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "raw_aug" => Ok(MatrixFamily::RawAug),
            "sym_norm" => Ok(MatrixFamily::SymNorm),
            "rw_norm" => Ok(MatrixFamily::RwNorm),
            "laplacian" => Ok(MatrixFamily::Laplacian),
            other => Err(Error::BadConfig(format!(
                "unknown matrix family '{other}' (expected raw_aug, sym_norm, rw_norm, or laplacian)"
            ))),
        }
    }
}

impl std::fmt::Display for MatrixFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// The base operator of a family as a general dense matrix.
pub fn family_matrix(g: &Graph, family: MatrixFamily) -> Mat {
    let n = g.num_nodes();
    match family {
        MatrixFamily::RawAug => g.augmented_adjacency().into_mat(),
        MatrixFamily::SymNorm => {
            let a = g.augmented_adjacency();
            let inv_sqrt: Vec<f64> =
                g.degrees().iter().map(|d| 1.0 / (d + 1.0).sqrt()).collect();
            Mat::from_fn(n, n, |i, j| a[(i, j)] * inv_sqrt[i] * inv_sqrt[j])
        }
        MatrixFamily::RwNorm => {
            let a = g.augmented_adjacency();
            let inv: Vec<f64> = g.degrees().iter().map(|d| 1.0 / (d + 1.0)).collect();
            Mat::from_fn(n, n, |i, j| a[(i, j)] * inv[i])
        }
        MatrixFamily::Laplacian => {
            let a = g.adjacency();
            let deg = g.degrees();
            Mat::from_fn(n, n, |i, j| if i == j { deg[i] } else { -a[(i, j)] })
        }
    }
}

/// The base operator where symmetry is required; `rw_norm` passes only for
/// graphs on which it happens to be numerically symmetric (e.g. regular
/// graphs), otherwise this returns [`Error::NotSymmetric`].
pub fn family_matrix_sym(g: &Graph, family: MatrixFamily) -> Result<SymMatrix> {
    SymMatrix::try_new(family_matrix(g, family))
}

/// A bijection on node indices; `map[old] = new`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let n = map.len();
        let mut seen = vec![false; n];
        for &m in &map {
            if m >= n {
                return Err(Error::IndexOutOfRange { index: m, num_nodes: n });
            }
            if seen[m] {
                return Err(Error::BadConfig(format!("permutation repeats index {m}")));
            }
            seen[m] = true;
        }
        Ok(Permutation { map })
    }

    pub fn identity(n: usize) -> Self {
        Permutation { map: (0..n).collect() }
    }

    pub fn n(&self) -> usize {
        self.map.len()
    }

    pub fn apply(&self, i: usize) -> usize {
        self.map[i]
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.map.len()];
        for (old, &new) in self.map.iter().enumerate() {
            inv[new] = old;
        }
        Permutation { map: inv }
    }

    /// The matrix `M` with `M[map[i]][i] = 1`, so `M S M^T` relabels both
    /// axes the same way this permutation relabels nodes.
    pub fn as_matrix(&self) -> Mat {
        let n = self.map.len();
        let mut m = Mat::zeros(n, n);
        for (old, &new) in self.map.iter().enumerate() {
            m[(new, old)] = 1.0;
        }
        m
    }
}

/// Relabels both axes of a square matrix: `out[p(i)][p(j)] = m[i][j]`.
pub fn permute_matrix(m: &Mat, p: &Permutation) -> Result<Mat> {
    if !m.is_square() || m.rows() != p.n() {
        return Err(Error::DimensionMismatch(format!(
            "permuting a {}x{} matrix with a permutation on {} items",
            m.rows(),
            m.cols(),
            p.n()
        )));
    }
    let n = p.n();
    let mut out = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(p.apply(i), p.apply(j))] = m[(i, j)];
        }
    }
    Ok(out)
}

pub fn permute_vector(v: &[f64], p: &Permutation) -> Result<Vec<f64>> {
    if v.len() != p.n() {
        return Err(Error::DimensionMismatch(format!(
            "permuting a length-{} vector with a permutation on {} items",
            v.len(),
            p.n()
        )));
    }
    let mut out = vec![0.0; v.len()];
    for (i, &x) in v.iter().enumerate() {
        out[p.apply(i)] = x;
    }
    Ok(out)
}

/// Relabels nodes; features and target follow their nodes and edges.
pub fn permute_graph(g: &Graph, p: &Permutation) -> Result<Graph> {
    if p.n() != g.num_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "permutation on {} items applied to a {}-node graph",
            p.n(),
            g.num_nodes()
        )));
    }
    let edges: Vec<(usize, usize)> =
        g.edges().iter().map(|&(u, v)| (p.apply(u), p.apply(v))).collect();
    let d = g.node_feat().cols();
    let inv = p.inverse();
    let node_feat = Mat::from_fn(g.num_nodes(), d, |i, j| g.node_feat()[(inv.apply(i), j)]);
    Graph::new(g.num_nodes(), edges, node_feat, g.edge_feat().cloned(), g.target())
}

/// JSON-facing graph record.
///
/// `edges` are `[u, v]` pairs; `node_feat` has one row per node;
/// `edge_feat`, when present, has one row per edge aligned with `edges`;
/// `target` is an optional number (class labels are stored as numbers).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphRecord {
    pub num_nodes: usize,
    pub edges: Vec<[usize; 2]>,
    pub node_feat: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_feat: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
}

impl GraphRecord {
    pub fn to_graph(&self) -> Result<Graph> {
        let edges: Vec<(usize, usize)> = self.edges.iter().map(|e| (e[0], e[1])).collect();
        let node_feat = Mat::from_rows(&self.node_feat)?;
        if node_feat.rows() != self.num_nodes {
            return Err(Error::RaggedFeatures(format!(
                "{} node feature rows for {} nodes",
                node_feat.rows(),
                self.num_nodes
            )));
        }
        let edge_feat = match &self.edge_feat {
            None => None,
            Some(rows) => Some(Mat::from_rows(rows)?),
        };
        Graph::new(self.num_nodes, edges, node_feat, edge_feat, self.target)
    }

    pub fn from_graph(g: &Graph) -> Self {
        GraphRecord {
            num_nodes: g.num_nodes(),
            edges: g.edges().iter().map(|&(u, v)| [u, v]).collect(),
            node_feat: (0..g.num_nodes()).map(|i| g.node_feat().row(i).to_vec()).collect(),
            edge_feat: g
                .edge_feat()
                .map(|f| (0..f.rows()).map(|e| f.row(e).to_vec()).collect()),
            target: g.target(),
        }
    }
}
