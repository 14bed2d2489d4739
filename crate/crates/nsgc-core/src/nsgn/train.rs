//! Full-batch / minibatch training driver.
//!
//! Gradients are accumulated sample by sample in index order, so a run is
//! bit-deterministic for a fixed config and dataset. Reported losses are
//! always in original target units: training standardizes regression
//! targets internally and maps the mean absolute error back by the exact
//! identity `mae_raw = std * mae_standardized`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::mat::Mat;
use crate::nsgn::loss::{loss_and_grad, LossKind};
use crate::nsgn::model::{ChannelMode, Model, ModelConfig, TargetStats};
use crate::nsgn::optim::{OptimConfig, OptimState};
use crate::stacks::{graph_stack, StackFamily};

#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub train: Vec<Graph>,
    pub valid: Vec<Graph>,
    pub test: Vec<Graph>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(flatten)]
    pub family: StackFamily,
    pub k: usize,
    pub channel_mode: ChannelMode,
    pub d: usize,
    pub layers: usize,
    #[serde(default = "default_out_dim")]
    pub out_dim: usize,
    pub loss: LossKind,
    pub epochs: usize,
    pub seed: u64,
    #[serde(default)]
    pub optim: OptimConfig,
    /// `None` trains full batch; `Some(b)` shuffles each epoch and steps
    /// once per chunk of `b` samples.
    #[serde(default)]
    pub batch_size: Option<usize>,
    /// Validation cadence in epochs; the final epoch always validates.
    #[serde(default = "default_valid_every")]
    pub valid_every: usize,
    /// Standardize regression targets to zero mean, unit variance
    /// (training split statistics). Ignored for classification.
    #[serde(default = "default_true")]
    pub standardize_targets: bool,
}

fn default_out_dim() -> usize {
    1
}

fn default_valid_every() -> usize {
    1
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricRow {
    pub epoch: usize,
    pub split: String,
    /// Mean per-sample loss, in original target units.
    pub loss: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub metrics: Vec<MetricRow>,
    pub final_test_loss: Option<f64>,
    /// Graphs whose operator stack tripped the entry-magnitude flag.
    pub stack_overflow_count: usize,
}

struct PreparedSplit {
    graphs: Vec<Graph>,
    stacks: Vec<Vec<Mat>>,
    targets: Vec<f64>,
}

fn prepare_split(
    graphs: &[Graph],
    family: StackFamily,
    k: usize,
    overflow: &mut usize,
) -> Result<PreparedSplit> {
    let mut stacks = Vec::with_capacity(graphs.len());
    let mut targets = Vec::with_capacity(graphs.len());
    for g in graphs {
        let stack = graph_stack(g, family, k)?;
        if stack.overflow {
            *overflow += 1;
        }
        stacks.push(stack.mats);
        targets.push(g.target().ok_or_else(|| {
            Error::BadConfig("every graph in a training dataset needs a target".into())
        })?);
    }
    Ok(PreparedSplit { graphs: graphs.to_vec(), stacks, targets })
}

fn infer_feature_dims(dataset: &Dataset) -> Result<(usize, usize)> {
    let first = dataset
        .train
        .first()
        .ok_or_else(|| Error::EmptyDataset("training split is empty".into()))?;
    let d_node = first.node_feat().cols();
    let mut d_edge = 0;
    for g in dataset.train.iter().chain(&dataset.valid).chain(&dataset.test) {
        if g.node_feat().cols() != d_node {
            return Err(Error::DimensionMismatch(format!(
                "node feature width {} differs from {} elsewhere in the dataset",
                g.node_feat().cols(),
                d_node
            )));
        }
        if g.num_edges() > 0 {
            let de = g.edge_feat_dim();
            if d_edge == 0 {
                d_edge = de;
            } else if de != d_edge {
                return Err(Error::DimensionMismatch(format!(
                    "edge feature width {de} differs from {d_edge} elsewhere in the dataset"
                )));
            }
        }
    }
    Ok((d_node, d_edge))
}

/// Mean per-sample loss of `model` over `graphs`, in original target
/// units. Stacks are rebuilt from `family` at the model's depth.
pub fn evaluate(
    model: &Model,
    family: StackFamily,
    graphs: &[Graph],
    loss: LossKind,
) -> Result<f64> {
    if graphs.is_empty() {
        return Err(Error::EmptyDataset("cannot evaluate an empty split".into()));
    }
    let mut total = 0.0;
    for g in graphs {
        let stack = graph_stack(g, family, model.config.k)?;
        let target = g
            .target()
            .ok_or_else(|| Error::BadConfig("evaluation graph has no target".into()))?;
        total += sample_loss_original_units(model, g, &stack.mats, target, loss)?;
    }
    Ok(total / graphs.len() as f64)
}

fn sample_loss_original_units(
    model: &Model,
    g: &Graph,
    stack: &[Mat],
    target: f64,
    loss: LossKind,
) -> Result<f64> {
    match loss {
        LossKind::Mae => {
            let pred = model.predict(g, stack)?;
            Ok((pred[0] - target).abs())
        }
        LossKind::CrossEntropy => {
            let (logits, _) = model.forward(g, stack)?;
            let (l, _) = loss_and_grad(loss, &logits, target)?;
            Ok(l)
        }
    }
}

pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    if config.epochs == 0 {
        return Err(Error::BadConfig("epochs must be positive".into()));
    }
    if config.valid_every == 0 {
        return Err(Error::BadConfig("valid_every must be positive".into()));
    }
    if let Some(0) = config.batch_size {
        return Err(Error::BadConfig("batch_size must be positive".into()));
    }
    if config.loss == LossKind::Mae && config.out_dim != 1 {
        return Err(Error::BadConfig("mae requires out_dim = 1".into()));
    }
    if config.loss == LossKind::CrossEntropy && config.out_dim < 2 {
        return Err(Error::BadConfig("cross-entropy requires out_dim >= 2".into()));
    }

    let (d_node, d_edge) = infer_feature_dims(dataset)?;
    let mut overflow = 0usize;
    let train_split = prepare_split(&dataset.train, config.family, config.k, &mut overflow)?;
    let valid_split = if dataset.valid.is_empty() {
        None
    } else {
        Some(prepare_split(&dataset.valid, config.family, config.k, &mut overflow)?)
    };
    let test_split = if dataset.test.is_empty() {
        None
    } else {
        Some(prepare_split(&dataset.test, config.family, config.k, &mut overflow)?)
    };

    let model_config = ModelConfig {
        d_node,
        d_edge,
        width: config.d,
        k: config.k,
        layers: config.layers,
        out_dim: config.out_dim,
        channel_mode: config.channel_mode,
    };
    let mut model = Model::new(model_config, config.seed)?;

    // Standardization statistics come from the training split only.
    let stats = if config.loss == LossKind::Mae && config.standardize_targets {
        let n = train_split.targets.len() as f64;
        let mean = train_split.targets.iter().sum::<f64>() / n;
        let var =
            train_split.targets.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
        let std = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        Some(TargetStats { mean, std })
    } else {
        None
    };
    model.target_stats = stats;
    let to_internal = |y: f64| match stats {
        Some(s) => (y - s.mean) / s.std,
        None => y,
    };
    let loss_scale = stats.map_or(1.0, |s| s.std);

    let mut optim_state = OptimState::new(&model.params.tensors());
    // Separate stream from parameter init so reshuffling never aliases
    // the weight draw.
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);

    let n_train = train_split.graphs.len();
    let batch = config.batch_size.unwrap_or(n_train).min(n_train);
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut metrics = Vec::new();

    for epoch in 1..=config.epochs {
        if config.batch_size.is_some() {
            order.shuffle(&mut shuffle_rng);
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let mut grads = model.params.zero_grads();
            let mut chunk_loss = 0.0;
            for &idx in chunk {
                let g = &train_split.graphs[idx];
                let stack = &train_split.stacks[idx];
                let (pred, cache) = model.forward(g, stack)?;
                let target = to_internal(train_split.targets[idx]);
                let (l, dpred) = loss_and_grad(config.loss, &pred, target)?;
                chunk_loss += l;
                let sample_grads = model.backward(&cache, &dpred)?;
                grads.add_assign(&sample_grads);
            }
            grads.scale(1.0 / chunk.len() as f64);
            optim_state.step(&config.optim, &mut model.params.tensors_mut(), &grads.tensors());
            epoch_loss += chunk_loss;
        }
        metrics.push(MetricRow {
            epoch,
            split: "train".into(),
            loss: loss_scale * epoch_loss / n_train as f64,
        });

        if let Some(valid) = &valid_split {
            if epoch % config.valid_every == 0 || epoch == config.epochs {
                let loss = split_loss(&model, valid, config.loss)?;
                metrics.push(MetricRow { epoch, split: "valid".into(), loss });
            }
        }
    }

    let final_test_loss = match &test_split {
        Some(test) => {
            let loss = split_loss(&model, test, config.loss)?;
            metrics.push(MetricRow { epoch: config.epochs, split: "test".into(), loss });
            Some(loss)
        }
        None => None,
    };

    Ok(TrainOutcome { model, metrics, final_test_loss, stack_overflow_count: overflow })
}

fn split_loss(model: &Model, split: &PreparedSplit, loss: LossKind) -> Result<f64> {
    let mut total = 0.0;
    for ((g, stack), &target) in split.graphs.iter().zip(&split.stacks).zip(&split.targets) {
        total += sample_loss_original_units(model, g, stack, target, loss)?;
    }
    Ok(total / split.graphs.len() as f64)
}
