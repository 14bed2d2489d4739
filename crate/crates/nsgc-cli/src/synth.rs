//! Synthetic regression datasets whose targets are computable exactly by
//! brute force, standing in for molecule benchmarks at desk scale.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use nsgc_core::eigen::eig_sym;
use nsgc_core::error::{Error, Result};
use nsgc_core::graph::{family_matrix_sym, Graph, MatrixFamily};
use nsgc_core::mat::Mat;
use nsgc_core::nsgn::Dataset;

/// Largest graph the generators will emit.
pub const MAX_SYNTH_NODES: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    ErdosRenyi { p: f64 },
    Cycle,
    Star,
    Barbell,
    /// Rotates through the other four generators graph by graph.
    Mixed { p: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    TriangleCount,
    SpectralRadius,
    AlgebraicConnectivity,
}

impl TargetKind {
    pub fn name(self) -> &'static str {
        match self {
            TargetKind::TriangleCount => "triangle_count",
            TargetKind::SpectralRadius => "spectral_radius",
            TargetKind::AlgebraicConnectivity => "algebraic_connectivity",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTaskSpec {
    pub generator: Generator,
    /// Inclusive `[n_min, n_max]` node-count range.
    pub size_range: [usize; 2],
    pub n_graphs: usize,
    pub target: TargetKind,
    pub seed: u64,
}

impl SyntheticTaskSpec {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.size_range;
        if lo < 2 || hi < lo {
            return Err(Error::BadConfig(format!(
                "size_range [{lo}, {hi}] must satisfy 2 <= n_min <= n_max"
            )));
        }
        if hi > MAX_SYNTH_NODES {
            return Err(Error::BadConfig(format!(
                "size_range upper bound {hi} exceeds the {MAX_SYNTH_NODES}-node cap"
            )));
        }
        if self.n_graphs < 10 {
            return Err(Error::BadConfig(format!(
                "n_graphs = {} is below the minimum of 10",
                self.n_graphs
            )));
        }
        match self.generator {
            Generator::ErdosRenyi { p } | Generator::Mixed { p } => {
                if !(p > 0.0 && p <= 1.0) || !p.is_finite() {
                    return Err(Error::BadConfig(format!(
                        "edge probability {p} must lie in (0, 1]"
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

fn erdos_renyi_edges(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    edges
}

fn cycle_edges(n: usize) -> Vec<(usize, usize)> {
    // A 2-cycle would duplicate its edge; fall back to the single edge.
    if n == 2 {
        return vec![(0, 1)];
    }
    (0..n).map(|i| (i, (i + 1) % n)).collect()
}

fn star_edges(n: usize) -> Vec<(usize, usize)> {
    (1..n).map(|i| (0, i)).collect()
}

/// Two cliques joined by one bridge edge; the second clique takes the
/// extra node when `n` is odd.
fn barbell_edges(n: usize) -> Vec<(usize, usize)> {
    let m = n / 2;
    let mut edges = Vec::new();
    for i in 0..m {
        for j in (i + 1)..m {
            edges.push((i, j));
        }
    }
    for i in m..n {
        for j in (i + 1)..n {
            edges.push((i, j));
        }
    }
    if m >= 1 && n > m {
        edges.push((m - 1, m));
    }
    edges
}

fn graph_edges(rng: &mut ChaCha8Rng, gen: &Generator, index: usize, n: usize) -> Vec<(usize, usize)> {
    match gen {
        Generator::ErdosRenyi { p } => erdos_renyi_edges(rng, n, *p),
        Generator::Cycle => cycle_edges(n),
        Generator::Star => star_edges(n),
        Generator::Barbell => barbell_edges(n),
        Generator::Mixed { p } => match index % 4 {
            0 => erdos_renyi_edges(rng, n, *p),
            1 => cycle_edges(n),
            2 => star_edges(n),
            _ => barbell_edges(n),
        },
    }
}

/// Exact triangle count by triple enumeration.
pub fn triangle_count(g: &Graph) -> f64 {
    let a = g.adjacency();
    let n = g.num_nodes();
    let mut count = 0u64;
    for i in 0..n {
        for j in (i + 1)..n {
            if a[(i, j)] == 0.0 {
                continue;
            }
            for k in (j + 1)..n {
                if a[(i, k)] != 0.0 && a[(j, k)] != 0.0 {
                    count += 1;
                }
            }
        }
    }
    count as f64
}

/// Largest eigenvalue magnitude of the adjacency matrix.
pub fn spectral_radius(g: &Graph) -> Result<f64> {
    let d = eig_sym(&g.adjacency())?;
    Ok(d.eigvals[0].abs())
}

/// Second-smallest eigenvalue of the combinatorial Laplacian. Zero for
/// disconnected graphs, which are legal inputs here.
pub fn algebraic_connectivity(g: &Graph) -> Result<f64> {
    let lap = family_matrix_sym(g, MatrixFamily::Laplacian)?;
    let d = eig_sym(&lap)?;
    let mut vals = d.eigvals.clone();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(vals[1])
}

pub fn target_value(g: &Graph, target: TargetKind) -> Result<f64> {
    match target {
        TargetKind::TriangleCount => Ok(triangle_count(g)),
        TargetKind::SpectralRadius => spectral_radius(g),
        TargetKind::AlgebraicConnectivity => algebraic_connectivity(g),
    }
}

/// Deterministic dataset from a task spec, split 8:1:1 by generation
/// order. Disconnected graphs are kept; every target is well defined for
/// them.
pub fn generate_dataset(spec: &SyntheticTaskSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let [lo, hi] = spec.size_range;
    let mut graphs = Vec::with_capacity(spec.n_graphs);
    for index in 0..spec.n_graphs {
        let n = rng.gen_range(lo..=hi);
        let edges = graph_edges(&mut rng, &spec.generator, index, n);
        let node_feat = Mat::from_fn(n, 1, |_, _| 1.0);
        let mut g = Graph::new(n, edges, node_feat, None, None)?;
        g.set_target(Some(target_value(&g, spec.target)?));
        graphs.push(g);
    }
    let n_train = spec.n_graphs * 8 / 10;
    let n_valid = spec.n_graphs / 10;
    Ok(Dataset {
        train: graphs[..n_train].to_vec(),
        valid: graphs[n_train..n_train + n_valid].to_vec(),
        test: graphs[n_train + n_valid..].to_vec(),
    })
}
