//! The non-spatial graph network.
//!
//! One layer does, for every node pair `(i, j)`:
//!
//! 1. take the sender state `h[j]`, add the pair's edge embedding
//!    `e[i][j]` (a learned vector for actual edges, with dedicated learned
//!    vectors for the diagonal and for non-adjacent pairs),
//! 2. push the sum through the message perceptron,
//! 3. gate the result channel-wise with `s[i][j]`, a learned mix of the
//!    operator-stack entries at `(i, j)`,
//! 4. sum over `j` and push through the update perceptron.
//!
//! The gate tensor is produced once per graph by the basis mixer from the
//! `k + 1` stack entries at each pair; in shared mode it has one channel
//! broadcast over all `d`, in independent mode `d` channels. With an
//! identity message network and zero edge embeddings a layer collapses to
//! channel-wise polynomial filtering over the stack.
//!
//! The message input for pair `(i, j)` depends only on `j` and on which
//! edge vector applies, so rows are deduplicated per `(j, edge-class)`
//! before the message perceptron runs. With no edge features every edge
//! shares one embedding and a graph has at most `3 n` distinct rows
//! instead of `n^2`.
//!
//! Everything is computed in a fixed order with no data-dependent
//! dispatch, so forward, backward, and therefore training are bit
//! deterministic for fixed inputs.

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::Nonlinearity;
use crate::graph::Graph;
use crate::mat::Mat;
use crate::nsgn::mlp::{Mlp, MlpCache, MlpGrads};

/// How the basis mixer treats channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    /// One mixed coefficient per pair, broadcast over all channels.
    Shared,
    /// A separate mixed coefficient per channel.
    Independent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_node: usize,
    #[serde(default)]
    pub d_edge: usize,
    /// Model width; also the hidden width of every perceptron.
    #[serde(rename = "d")]
    pub width: usize,
    /// Stack depth: the model consumes `k + 1` operators per graph.
    pub k: usize,
    /// Message-passing layers `L`; 0 is legal and skips interaction
    /// entirely.
    pub layers: usize,
    #[serde(default = "default_out_dim")]
    pub out_dim: usize,
    pub channel_mode: ChannelMode,
}

fn default_out_dim() -> usize {
    1
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.out_dim == 0 {
            return Err(Error::BadConfig(
                "model width and out_dim must be positive".into(),
            ));
        }
        Ok(())
    }

    fn mix_channels(&self) -> usize {
        match self.channel_mode {
            ChannelMode::Shared => 1,
            ChannelMode::Independent => self.width,
        }
    }
}

/// One message-passing layer: message perceptron, update perceptron.
#[derive(Clone, Debug)]
pub struct LayerParams {
    pub message: Mlp,
    pub update: Mlp,
}

/// All learnable tensors.
#[derive(Clone, Debug)]
pub struct ModelParams {
    /// Node features to width `d`.
    pub node_embed: Mlp,
    /// Edge features to width `d`; with `d_edge = 0` this is a learned
    /// constant shared by all edges.
    pub edge_embed: Mlp,
    /// Embedding for non-adjacent pairs.
    pub no_edge: Vec<f64>,
    /// Embedding for the diagonal pairs `(i, i)`.
    pub self_loop: Vec<f64>,
    /// Stack entries `(k + 1)` to mix channels.
    pub basis_mixer: Mlp,
    pub layers: Vec<LayerParams>,
    /// Pooled state to prediction.
    pub head: Mlp,
}

/// Gradients, mirroring [`ModelParams`] tensor for tensor.
#[derive(Clone, Debug)]
pub struct ModelGrads {
    pub node_embed: MlpGrads,
    pub edge_embed: MlpGrads,
    pub no_edge: Vec<f64>,
    pub self_loop: Vec<f64>,
    pub basis_mixer: MlpGrads,
    pub layers: Vec<(MlpGrads, MlpGrads)>,
    pub head: MlpGrads,
}

/// Target normalization remembered from training, applied in [`Model::predict`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetStats {
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub target_stats: Option<TargetStats>,
}

impl ModelParams {
    /// Draws all tensors from one seeded stream, in checkpoint order.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let d = config.width;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let node_embed = Mlp::init(&mut rng, config.d_node, d, d, Nonlinearity::Relu);
        let edge_embed = Mlp::init(&mut rng, config.d_edge, d, d, Nonlinearity::Relu);
        let elim = (6.0 / (1 + d) as f64).sqrt();
        let no_edge: Vec<f64> = (0..d).map(|_| rng.gen_range(-elim..=elim)).collect();
        let self_loop: Vec<f64> = (0..d).map(|_| rng.gen_range(-elim..=elim)).collect();
        let basis_mixer =
            Mlp::init(&mut rng, config.k + 1, d, config.mix_channels(), Nonlinearity::Relu);
        let layers = (0..config.layers)
            .map(|_| LayerParams {
                message: Mlp::init(&mut rng, d, d, d, Nonlinearity::Relu),
                update: Mlp::init(&mut rng, d, d, d, Nonlinearity::Relu),
            })
            .collect();
        let head = Mlp::init(&mut rng, d, d, config.out_dim, Nonlinearity::Relu);
        Ok(ModelParams {
            node_embed,
            edge_embed,
            no_edge,
            self_loop,
            basis_mixer,
            layers,
            head,
        })
    }

    /// Parameter tensors in checkpoint order; the single flattening order
    /// shared by the optimizer and the checkpoint format.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = self.node_embed.tensors();
        out.extend(self.edge_embed.tensors());
        out.push(&self.no_edge);
        out.push(&self.self_loop);
        out.extend(self.basis_mixer.tensors());
        for layer in &self.layers {
            out.extend(layer.message.tensors());
            out.extend(layer.update.tensors());
        }
        out.extend(self.head.tensors());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.node_embed.tensors_mut();
        out.extend(self.edge_embed.tensors_mut());
        out.push(self.no_edge.as_mut_slice());
        out.push(self.self_loop.as_mut_slice());
        out.extend(self.basis_mixer.tensors_mut());
        for layer in &mut self.layers {
            out.extend(layer.message.tensors_mut());
            out.extend(layer.update.tensors_mut());
        }
        out.extend(self.head.tensors_mut());
        out
    }

    pub fn zero_grads(&self) -> ModelGrads {
        ModelGrads {
            node_embed: self.node_embed.zero_grads(),
            edge_embed: self.edge_embed.zero_grads(),
            no_edge: vec![0.0; self.no_edge.len()],
            self_loop: vec![0.0; self.self_loop.len()],
            basis_mixer: self.basis_mixer.zero_grads(),
            layers: self
                .layers
                .iter()
                .map(|l| (l.message.zero_grads(), l.update.zero_grads()))
                .collect(),
            head: self.head.zero_grads(),
        }
    }
}

impl ModelGrads {
    pub fn add_assign(&mut self, other: &ModelGrads) {
        self.node_embed.add_assign(&other.node_embed);
        self.edge_embed.add_assign(&other.edge_embed);
        for (a, b) in self.no_edge.iter_mut().zip(&other.no_edge) {
            *a += b;
        }
        for (a, b) in self.self_loop.iter_mut().zip(&other.self_loop) {
            *a += b;
        }
        self.basis_mixer.add_assign(&other.basis_mixer);
        for ((m, u), (om, ou)) in self.layers.iter_mut().zip(&other.layers) {
            m.add_assign(om);
            u.add_assign(ou);
        }
        self.head.add_assign(&other.head);
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            for v in t {
                *v *= s;
            }
        }
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = self.node_embed.tensors();
        out.extend(self.edge_embed.tensors());
        out.push(&self.no_edge);
        out.push(&self.self_loop);
        out.extend(self.basis_mixer.tensors());
        for (m, u) in &self.layers {
            out.extend(m.tensors());
            out.extend(u.tensors());
        }
        out.extend(self.head.tensors());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.node_embed.tensors_mut();
        out.extend(self.edge_embed.tensors_mut());
        out.push(self.no_edge.as_mut_slice());
        out.push(self.self_loop.as_mut_slice());
        out.extend(self.basis_mixer.tensors_mut());
        for (m, u) in &mut self.layers {
            out.extend(m.tensors_mut());
            out.extend(u.tensors_mut());
        }
        out.extend(self.head.tensors_mut());
        out
    }
}

/// Message-input deduplication for one graph.
///
/// The message input at `(i, j)` is `h[j] + evec`, where `evec` is row
/// `evec_id(i, j)` of the edge-vector table: row 0 the self-loop vector,
/// row 1 the no-edge vector, rows `2..` the per-edge embeddings (one
/// shared row when there are no edge features). Rows of the deduplicated
/// input matrix are keyed by `(j, evec_id)`.
struct Grouping {
    n: usize,
    /// `(j, evec_id)` per deduplicated row, in row order.
    row_keys: Vec<(usize, usize)>,
    /// Row index for every pair, indexed `i * n + j`.
    row_of: Vec<usize>,
    /// Total rows in the edge-vector table.
    evec_rows: usize,
}

impl Grouping {
    fn build(g: &Graph, shared_edge_vec: bool) -> Grouping {
        let n = g.num_nodes();
        let evec_id = |i: usize, j: usize| -> usize {
            if i == j {
                0
            } else {
                match g.edge_index(i, j) {
                    Some(e) => {
                        if shared_edge_vec {
                            2
                        } else {
                            2 + e
                        }
                    }
                    None => 1,
                }
            }
        };
        let mut row_keys = Vec::with_capacity(3 * n);
        let mut index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut row_of = vec![0usize; n * n];
        for i in 0..n {
            for j in 0..n {
                let key = (j, evec_id(i, j));
                let row = *index.entry(key).or_insert_with(|| {
                    row_keys.push(key);
                    row_keys.len() - 1
                });
                row_of[i * n + j] = row;
            }
        }
        let edge_rows = if shared_edge_vec { 1 } else { g.num_edges() };
        Grouping { n, row_keys, row_of, evec_rows: 2 + edge_rows }
    }
}

/// Everything the backward pass needs from a forward pass.
pub struct ForwardCache {
    grouping: Grouping,
    node_cache: MlpCache,
    edge_cache: MlpCache,
    mix_cache: MlpCache,
    evecs: Mat,
    s_mix: Mat,
    layer_caches: Vec<LayerCache>,
    head_cache: MlpCache,
}

struct LayerCache {
    message_cache: MlpCache,
    update_cache: MlpCache,
    u: Mat,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Model> {
        let params = ModelParams::init(&config, seed)?;
        Ok(Model { config, params, target_stats: None })
    }

    fn validate_inputs(&self, g: &Graph, stack: &[Mat]) -> Result<()> {
        let n = g.num_nodes();
        if g.node_feat().cols() != self.config.d_node {
            return Err(Error::DimensionMismatch(format!(
                "graph node features have width {}, model expects {}",
                g.node_feat().cols(),
                self.config.d_node
            )));
        }
        if g.num_edges() > 0 && g.edge_feat_dim() != self.config.d_edge {
            return Err(Error::DimensionMismatch(format!(
                "graph edge features have width {}, model expects {}",
                g.edge_feat_dim(),
                self.config.d_edge
            )));
        }
        if stack.len() != self.config.k + 1 {
            return Err(Error::DimensionMismatch(format!(
                "stack has {} operators, model expects k + 1 = {}",
                stack.len(),
                self.config.k + 1
            )));
        }
        for (idx, m) in stack.iter().enumerate() {
            if m.rows() != n || m.cols() != n {
                return Err(Error::DimensionMismatch(format!(
                    "stack operator {idx} is {}x{} for an {n}-node graph",
                    m.rows(),
                    m.cols()
                )));
            }
        }
        Ok(())
    }

    /// Stack entries per pair: row `i * n + j` holds
    /// `[T_0[i,j], .., T_k[i,j]]`.
    fn entry_matrix(stack: &[Mat], n: usize) -> Mat {
        let kp1 = stack.len();
        let mut se = Mat::zeros(n * n, kp1);
        for (t, m) in stack.iter().enumerate() {
            let src = m.data();
            let dst = se.data_mut();
            for pair in 0..n * n {
                dst[pair * kp1 + t] = src[pair];
            }
        }
        se
    }

    /// The mixed gate tensor for a stack: `n^2 x 1` (shared) or `n^2 x d`
    /// (independent). Exposed for analysis; the forward pass computes the
    /// same values internally.
    pub fn mix_basis_tensor(&self, stack: &[Mat]) -> Result<Mat> {
        if stack.is_empty() {
            return Err(Error::BadConfig("empty operator stack".into()));
        }
        let n = stack[0].rows();
        let se = Self::entry_matrix(stack, n);
        let (s_mix, _) = self.params.basis_mixer.forward_batch(&se);
        Ok(s_mix)
    }

    /// Full forward pass; returns the prediction in the model's internal
    /// (possibly standardized) scale plus the cache for [`Model::backward`].
    pub fn forward(&self, g: &Graph, stack: &[Mat]) -> Result<(Vec<f64>, ForwardCache)> {
        self.validate_inputs(g, stack)?;
        let n = g.num_nodes();
        let d = self.config.width;
        let shared_edge_vec = self.config.d_edge == 0;
        let grouping = Grouping::build(g, shared_edge_vec);

        let (h0, node_cache) = self.params.node_embed.forward_batch(g.node_feat());

        let edge_input = if shared_edge_vec {
            Mat::zeros(1, 0)
        } else {
            match g.edge_feat() {
                Some(f) => f.clone(),
                None => Mat::zeros(0, self.config.d_edge),
            }
        };
        let (edge_out, edge_cache) = self.params.edge_embed.forward_batch(&edge_input);
        debug_assert_eq!(edge_out.rows() + 2, grouping.evec_rows);
        let mut evecs = Mat::zeros(grouping.evec_rows, d);
        evecs.row_mut(0).copy_from_slice(&self.params.self_loop);
        evecs.row_mut(1).copy_from_slice(&self.params.no_edge);
        for r in 0..edge_out.rows() {
            evecs.row_mut(2 + r).copy_from_slice(edge_out.row(r));
        }

        let se = Self::entry_matrix(stack, n);
        let (s_mix, mix_cache) = self.params.basis_mixer.forward_batch(&se);

        let mut h = h0;
        let mut layer_caches = Vec::with_capacity(self.config.layers);
        for layer in &self.params.layers {
            let rows = grouping.row_keys.len();
            let mut x = Mat::zeros(rows, d);
            for (r, &(j, evec)) in grouping.row_keys.iter().enumerate() {
                let xrow = x.row_mut(r);
                let hrow = h.row(j);
                let erow = evecs.row(evec);
                for c in 0..d {
                    xrow[c] = hrow[c] + erow[c];
                }
            }
            let (u, message_cache) = layer.message.forward_batch(&x);

            let mut z = Mat::zeros(n, d);
            self.gate_and_sum(&grouping, &u, &s_mix, &mut z);

            let (h_next, update_cache) = layer.update.forward_batch(&z);
            layer_caches.push(LayerCache { message_cache, update_cache, u });
            h = h_next;
        }

        let mut pooled = Mat::zeros(1, d);
        {
            let prow = pooled.row_mut(0);
            for i in 0..n {
                let hrow = h.row(i);
                for c in 0..d {
                    prow[c] += hrow[c];
                }
            }
        }
        let (pred, head_cache) = self.params.head.forward_batch(&pooled);
        let out = pred.row(0).to_vec();

        Ok((
            out,
            ForwardCache {
                grouping,
                node_cache,
                edge_cache,
                mix_cache,
                evecs,
                s_mix,
                layer_caches,
                head_cache,
            },
        ))
    }

    /// `z[i] = sum_j message(i, j) * gate(i, j)`, channel-wise.
    fn gate_and_sum(&self, grouping: &Grouping, u: &Mat, s_mix: &Mat, z: &mut Mat) {
        let n = grouping.n;
        let d = self.config.width;
        let shared = self.config.channel_mode == ChannelMode::Shared;
        for i in 0..n {
            let zrow = z.row_mut(i);
            for j in 0..n {
                let pair = i * n + j;
                let urow = u.row(grouping.row_of[pair]);
                if shared {
                    let s = s_mix[(pair, 0)];
                    for c in 0..d {
                        zrow[c] += s * urow[c];
                    }
                } else {
                    let srow = s_mix.row(pair);
                    for c in 0..d {
                        zrow[c] += srow[c] * urow[c];
                    }
                }
            }
        }
    }

    /// Node states after the final layer (pre-pooling); the layer output
    /// itself, useful for comparing against explicit filtering.
    pub fn node_states(&self, g: &Graph, stack: &[Mat]) -> Result<Mat> {
        self.validate_inputs(g, stack)?;
        let n = g.num_nodes();
        let d = self.config.width;
        let shared_edge_vec = self.config.d_edge == 0;
        let grouping = Grouping::build(g, shared_edge_vec);
        let (mut h, _) = self.params.node_embed.forward_batch(g.node_feat());
        let edge_input = if shared_edge_vec {
            Mat::zeros(1, 0)
        } else {
            match g.edge_feat() {
                Some(f) => f.clone(),
                None => Mat::zeros(0, self.config.d_edge),
            }
        };
        let (edge_out, _) = self.params.edge_embed.forward_batch(&edge_input);
        let mut evecs = Mat::zeros(grouping.evec_rows, d);
        evecs.row_mut(0).copy_from_slice(&self.params.self_loop);
        evecs.row_mut(1).copy_from_slice(&self.params.no_edge);
        for r in 0..edge_out.rows() {
            evecs.row_mut(2 + r).copy_from_slice(edge_out.row(r));
        }
        let se = Self::entry_matrix(stack, n);
        let (s_mix, _) = self.params.basis_mixer.forward_batch(&se);
        for layer in &self.params.layers {
            let rows = grouping.row_keys.len();
            let mut x = Mat::zeros(rows, d);
            for (r, &(j, evec)) in grouping.row_keys.iter().enumerate() {
                let xrow = x.row_mut(r);
                let hrow = h.row(j);
                let erow = evecs.row(evec);
                for c in 0..d {
                    xrow[c] = hrow[c] + erow[c];
                }
            }
            let (u, _) = layer.message.forward_batch(&x);
            let mut z = Mat::zeros(n, d);
            self.gate_and_sum(&grouping, &u, &s_mix, &mut z);
            let (h_next, _) = layer.update.forward_batch(&z);
            h = h_next;
        }
        Ok(h)
    }

    /// Reverse-mode pass. `upstream` is `d loss / d prediction`.
    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64]) -> Result<ModelGrads> {
        if upstream.len() != self.config.out_dim {
            return Err(Error::DimensionMismatch(format!(
                "upstream gradient has {} entries, prediction has {}",
                upstream.len(),
                self.config.out_dim
            )));
        }
        let n = cache.grouping.n;
        let d = self.config.width;
        let shared = self.config.channel_mode == ChannelMode::Shared;
        let mut grads = self.params.zero_grads();

        let dy = Mat::from_vec(1, upstream.len(), upstream.to_vec())?;
        let (head_grads, dpooled) = self.params.head.backward_batch(&cache.head_cache, &dy);
        grads.head = head_grads;

        // Sum pooling: every node inherits the pooled gradient.
        let mut dh = Mat::zeros(n, d);
        for i in 0..n {
            dh.row_mut(i).copy_from_slice(dpooled.row(0));
        }

        let mut ds_mix = Mat::zeros(cache.s_mix.rows(), cache.s_mix.cols());
        let mut devecs = Mat::zeros(cache.evecs.rows(), d);
        let mut layer_grads_rev: Vec<(MlpGrads, MlpGrads)> =
            Vec::with_capacity(self.config.layers);

        for (layer, lcache) in self.params.layers.iter().zip(&cache.layer_caches).rev() {
            let (update_grads, dz) = layer.update.backward_batch(&lcache.update_cache, &dh);

            let rows = cache.grouping.row_keys.len();
            let mut du = Mat::zeros(rows, d);
            for i in 0..n {
                let dzrow = dz.row(i);
                for j in 0..n {
                    let pair = i * n + j;
                    let r = cache.grouping.row_of[pair];
                    let urow = lcache.u.row(r);
                    if shared {
                        let s = cache.s_mix[(pair, 0)];
                        let mut acc = 0.0;
                        let durow = du.row_mut(r);
                        for c in 0..d {
                            durow[c] += s * dzrow[c];
                            acc += dzrow[c] * urow[c];
                        }
                        ds_mix[(pair, 0)] += acc;
                    } else {
                        let srow = cache.s_mix.row(pair);
                        let durow = du.row_mut(r);
                        for c in 0..d {
                            durow[c] += srow[c] * dzrow[c];
                        }
                        let dsrow = ds_mix.row_mut(pair);
                        for c in 0..d {
                            dsrow[c] += dzrow[c] * urow[c];
                        }
                    }
                }
            }

            let (message_grads, dx) = layer.message.backward_batch(&lcache.message_cache, &du);

            let mut dh_prev = Mat::zeros(n, d);
            for (r, &(j, evec)) in cache.grouping.row_keys.iter().enumerate() {
                let dxrow = dx.row(r);
                let hrow = dh_prev.row_mut(j);
                for c in 0..d {
                    hrow[c] += dxrow[c];
                }
                let erow = devecs.row_mut(evec);
                for c in 0..d {
                    erow[c] += dxrow[c];
                }
            }

            layer_grads_rev.push((message_grads, update_grads));
            dh = dh_prev;
        }
        layer_grads_rev.reverse();
        grads.layers = layer_grads_rev;

        let (node_grads, _) = self.params.node_embed.backward_batch(&cache.node_cache, &dh);
        grads.node_embed = node_grads;

        let (mix_grads, _) = self.params.basis_mixer.backward_batch(&cache.mix_cache, &ds_mix);
        grads.basis_mixer = mix_grads;

        grads.self_loop.copy_from_slice(devecs.row(0));
        grads.no_edge.copy_from_slice(devecs.row(1));
        let edge_rows = cache.evecs.rows() - 2;
        let d_edge_out = Mat::from_fn(edge_rows, d, |r, c| devecs[(2 + r, c)]);
        let (edge_grads, _) = self.params.edge_embed.backward_batch(&cache.edge_cache, &d_edge_out);
        grads.edge_embed = edge_grads;

        Ok(grads)
    }

    /// Prediction in original target units: destandardizes scalar
    /// regression outputs when training recorded target statistics.
    pub fn predict(&self, g: &Graph, stack: &[Mat]) -> Result<Vec<f64>> {
        let (mut out, _) = self.forward(g, stack)?;
        if let Some(stats) = self.target_stats {
            for v in &mut out {
                *v = stats.mean + stats.std * *v;
            }
        }
        Ok(out)
    }
}
