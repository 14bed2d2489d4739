//! End-to-end checks of the graph network: hand-written gradients against
//! finite differences, permutation invariance, the collapse to explicit
//! channel-wise filtering, checkpoint round-trips, and training behavior.

use nsgc_core::filters::{apply_channel_filter, apply_shared_filter, Nonlinearity};
use nsgc_core::graph::{permute_graph, Graph};
use nsgc_core::nsgn::checkpoint::{load_model, save_model, Checkpoint};
use nsgc_core::nsgn::model::TargetStats;
use nsgc_core::nsgn::train::{evaluate, MetricRow};
use nsgc_core::nsgn::{
    train, ChannelMode, Dataset, LossKind, Mlp, Model, ModelConfig, OptimConfig, TrainConfig,
};
use nsgc_core::stacks::{graph_stack, StackFamily};
use nsgc_core::testing::{random_graph, random_matrix, random_permutation, rng};
use nsgc_core::Mat;
use rand::Rng;

/// Small graph with 2-dim edge features and 3-dim node features.
fn featured_graph(seed: u64) -> Graph {
    let mut r = rng(seed);
    let node_feat = random_matrix(&mut r, 4, 3, 1.0);
    let edge_feat = random_matrix(&mut r, 4, 2, 1.0);
    Graph::new(
        4,
        vec![(0, 1), (0, 2), (1, 2), (2, 3)],
        node_feat,
        Some(edge_feat),
        Some(1.5),
    )
    .unwrap()
}

/// Adds noise to every parameter so no unit sits exactly on the relu kink
/// and bias gradients are exercised away from zero.
fn jitter_params(model: &mut Model, seed: u64) {
    let mut r = rng(seed);
    for tensor in model.params.tensors_mut() {
        for v in tensor {
            *v += 0.05 * (r.gen::<f64>() - 0.5);
        }
    }
}

fn fd_gradient_check(model: &Model, g: &Graph, stack: &[Mat], tol: f64) {
    let (pred, cache) = model.forward(g, stack).unwrap();
    let upstream: Vec<f64> = (0..pred.len()).map(|i| 1.0 + 0.3 * i as f64).collect();
    let grads = model.backward(&cache, &upstream).unwrap();

    let objective = |m: &Model| -> f64 {
        let (p, _) = m.forward(g, stack).unwrap();
        p.iter().zip(&upstream).map(|(a, b)| a * b).sum()
    };

    let h = 1e-6;
    let analytic = grads.tensors();
    let num_tensors = analytic.len();
    let mut checked = 0usize;
    for ti in 0..num_tensors {
        for si in 0..analytic[ti].len() {
            let mut probe = model.clone();
            probe.params.tensors_mut()[ti][si] += h;
            let up = objective(&probe);
            let mut probe = model.clone();
            probe.params.tensors_mut()[ti][si] -= h;
            let down = objective(&probe);
            let fd = (up - down) / (2.0 * h);
            let an = analytic[ti][si];
            let denom = (fd.abs() + an.abs()).max(1e-6);
            assert!(
                (fd - an).abs() / denom < tol,
                "tensor {ti} slot {si}: finite difference {fd} vs backward {an}"
            );
            checked += 1;
        }
    }
    assert!(checked > 300, "expected to sweep every parameter, saw {checked}");
}

#[test]
fn backward_matches_finite_differences_with_edge_features() {
    let g = featured_graph(11);
    let stack = graph_stack(&g, StackFamily::SymNorm, 2).unwrap();
    let config = ModelConfig {
        d_node: 3,
        d_edge: 2,
        width: 5,
        k: 2,
        layers: 2,
        out_dim: 1,
        channel_mode: ChannelMode::Independent,
    };
    let mut model = Model::new(config, 3).unwrap();
    jitter_params(&mut model, 4);
    fd_gradient_check(&model, &g, &stack.mats, 1e-4);
}

#[test]
fn backward_matches_finite_differences_shared_mode() {
    // No edge features: all edges share one embedded vector, which is the
    // other deduplication path.
    let mut r = rng(21);
    let g = random_graph(&mut r, 5, 0.6);
    let stack = graph_stack(&g, StackFamily::RawAug, 2).unwrap();
    let config = ModelConfig {
        d_node: 1,
        d_edge: 0,
        width: 5,
        k: 2,
        layers: 2,
        out_dim: 2,
        channel_mode: ChannelMode::Shared,
    };
    let mut model = Model::new(config, 5).unwrap();
    jitter_params(&mut model, 6);
    fd_gradient_check(&model, &g, &stack.mats, 1e-4);
}

#[test]
fn predictions_are_permutation_invariant() {
    let config = ModelConfig {
        d_node: 1,
        d_edge: 0,
        width: 8,
        k: 3,
        layers: 2,
        out_dim: 1,
        channel_mode: ChannelMode::Independent,
    };
    let model = Model::new(config, 9).unwrap();
    let mut r = rng(33);
    for trial in 0..10 {
        let g = random_graph(&mut r, 8, 0.4);
        let p = random_permutation(&mut r, 8);
        let pg = permute_graph(&g, &p).unwrap();
        let stack = graph_stack(&g, StackFamily::SymNorm, 3).unwrap();
        let pstack = graph_stack(&pg, StackFamily::SymNorm, 3).unwrap();
        let a = model.predict(&g, &stack.mats).unwrap()[0];
        let b = model.predict(&pg, &pstack.mats).unwrap()[0];
        assert!(
            (a - b).abs() <= 1e-8 * a.abs().max(1.0),
            "trial {trial}: {a} vs {b} after relabeling"
        );
    }
}

#[test]
fn zero_layers_leave_interaction_parameters_untouched() {
    let g = featured_graph(17);
    let stack = graph_stack(&g, StackFamily::SymNorm, 2).unwrap();
    let config = ModelConfig {
        d_node: 3,
        d_edge: 2,
        width: 4,
        k: 2,
        layers: 0,
        out_dim: 1,
        channel_mode: ChannelMode::Shared,
    };
    let model = Model::new(config, 2).unwrap();
    let (_, cache) = model.forward(&g, &stack.mats).unwrap();
    let grads = model.backward(&cache, &[1.0]).unwrap();

    let flat = |t: Vec<&[f64]>| t.into_iter().flatten().copied().collect::<Vec<f64>>();
    assert!(flat(grads.edge_embed.tensors()).iter().all(|&v| v == 0.0));
    assert!(grads.no_edge.iter().all(|&v| v == 0.0));
    assert!(grads.self_loop.iter().all(|&v| v == 0.0));
    assert!(flat(grads.basis_mixer.tensors()).iter().all(|&v| v == 0.0));
    assert!(grads.layers.is_empty());
    assert!(flat(grads.node_embed.tensors()).iter().any(|&v| v != 0.0));
    assert!(flat(grads.head.tensors()).iter().any(|&v| v != 0.0));
}

fn identity_mlp(dim: usize) -> Mlp {
    Mlp {
        w1: Mat::identity(dim),
        b1: vec![0.0; dim],
        w2: Mat::identity(dim),
        b2: vec![0.0; dim],
        hidden_act: Nonlinearity::Identity,
    }
}

fn zero_mlp(in_dim: usize, hidden: usize, out_dim: usize) -> Mlp {
    Mlp {
        w1: Mat::zeros(in_dim, hidden),
        b1: vec![0.0; hidden],
        w2: Mat::zeros(hidden, out_dim),
        b2: vec![0.0; out_dim],
        hidden_act: Nonlinearity::Relu,
    }
}

/// With identity message/update/embedding networks and zero edge vectors,
/// one layer must reproduce explicit filtering over the stack exactly.
#[test]
fn identity_layer_reduces_to_stack_filtering() {
    let mut r = rng(41);
    let g = random_graph(&mut r, 6, 0.5);
    let k = 2;
    let d = 3;
    let stack = graph_stack(&g, StackFamily::SymNorm, k).unwrap();
    let h0 = random_matrix(&mut r, 6, d, 1.0);
    let g = Graph::new(6, g.edges().to_vec(), h0.clone(), None, None).unwrap();

    // Independent channels: the mixer computes theta^T per pair.
    let theta = random_matrix(&mut r, k + 1, d, 1.0);
    let config = ModelConfig {
        d_node: d,
        d_edge: 0,
        width: d,
        k,
        layers: 1,
        out_dim: 1,
        channel_mode: ChannelMode::Independent,
    };
    let mut model = Model::new(config, 1).unwrap();
    model.params.node_embed = identity_mlp(d);
    model.params.edge_embed = zero_mlp(0, d, d);
    model.params.no_edge = vec![0.0; d];
    model.params.self_loop = vec![0.0; d];
    model.params.basis_mixer = Mlp {
        w1: theta.clone(),
        b1: vec![0.0; d],
        w2: Mat::identity(d),
        b2: vec![0.0; d],
        hidden_act: Nonlinearity::Identity,
    };
    model.params.layers[0].message = identity_mlp(d);
    model.params.layers[0].update = identity_mlp(d);

    let states = model.node_states(&g, &stack.mats).unwrap();
    let filtered = apply_channel_filter(&stack.mats, &theta, &h0).unwrap();
    assert!(states.max_abs_diff(&filtered) < 1e-10);

    // Shared channel: a single mixed coefficient, broadcast.
    let theta_vec: Vec<f64> = (0..=k).map(|t| 0.5 - 0.3 * t as f64).collect();
    let mut w1 = Mat::zeros(k + 1, d);
    for (t, &v) in theta_vec.iter().enumerate() {
        w1[(t, 0)] = v;
    }
    let mut w2 = Mat::zeros(d, 1);
    w2[(0, 0)] = 1.0;
    let config = ModelConfig {
        d_node: d,
        d_edge: 0,
        width: d,
        k,
        layers: 1,
        out_dim: 1,
        channel_mode: ChannelMode::Shared,
    };
    let mut model = Model::new(config, 1).unwrap();
    model.params.node_embed = identity_mlp(d);
    model.params.edge_embed = zero_mlp(0, d, d);
    model.params.no_edge = vec![0.0; d];
    model.params.self_loop = vec![0.0; d];
    model.params.basis_mixer =
        Mlp { w1, b1: vec![0.0; d], w2, b2: vec![0.0; 1], hidden_act: Nonlinearity::Identity };
    model.params.layers[0].message = identity_mlp(d);
    model.params.layers[0].update = identity_mlp(d);

    let states = model.node_states(&g, &stack.mats).unwrap();
    let filtered = apply_shared_filter(&stack.mats, &theta_vec, &h0).unwrap();
    assert!(states.max_abs_diff(&filtered) < 1e-10);
}

#[test]
fn single_node_depth_zero_works() {
    let g = Graph::new(1, vec![], Mat::from_vec(1, 1, vec![2.0]).unwrap(), None, Some(0.0))
        .unwrap();
    let stack = graph_stack(&g, StackFamily::SymNorm, 0).unwrap();
    let config = ModelConfig {
        d_node: 1,
        d_edge: 0,
        width: 4,
        k: 0,
        layers: 1,
        out_dim: 1,
        channel_mode: ChannelMode::Independent,
    };
    let model = Model::new(config, 13).unwrap();
    let mix = model.mix_basis_tensor(&stack.mats).unwrap();
    assert_eq!((mix.rows(), mix.cols()), (1, 4));
    let (pred, cache) = model.forward(&g, &stack.mats).unwrap();
    assert!(pred[0].is_finite());
    let grads = model.backward(&cache, &[1.0]).unwrap();
    assert!(grads.tensors().into_iter().flatten().all(|v| v.is_finite()));
}

#[test]
fn model_rejects_mismatched_inputs() {
    let g = featured_graph(3);
    let stack = graph_stack(&g, StackFamily::SymNorm, 2).unwrap();
    let config = ModelConfig {
        d_node: 3,
        d_edge: 2,
        width: 4,
        k: 2,
        layers: 1,
        out_dim: 1,
        channel_mode: ChannelMode::Shared,
    };
    let model = Model::new(config, 1).unwrap();
    // Wrong stack depth.
    assert!(model.forward(&g, &stack.mats[..2]).is_err());
    // Wrong node feature width.
    let bad = Graph::new(4, g.edges().to_vec(), Mat::zeros(4, 2), None, None).unwrap();
    let bad_stack = graph_stack(&bad, StackFamily::SymNorm, 2).unwrap();
    assert!(model.forward(&bad, &bad_stack.mats).is_err());
}

fn edge_count_dataset(seed: u64, offset: f64) -> Dataset {
    let mut r = rng(seed);
    let mut graphs = Vec::new();
    for i in 0..8 {
        let n = 4 + (i % 4);
        let mut g = random_graph(&mut r, n, 0.5);
        g.set_target(Some(offset + g.num_edges() as f64));
        graphs.push(g);
    }
    Dataset {
        train: graphs[..6].to_vec(),
        valid: graphs[6..7].to_vec(),
        test: graphs[7..].to_vec(),
    }
}

fn mae_config(epochs: usize, batch_size: Option<usize>) -> TrainConfig {
    TrainConfig {
        family: StackFamily::SymNorm,
        k: 2,
        channel_mode: ChannelMode::Shared,
        d: 8,
        layers: 1,
        out_dim: 1,
        loss: LossKind::Mae,
        epochs,
        seed: 7,
        optim: OptimConfig { lr: 1e-2, ..OptimConfig::default() },
        batch_size,
        valid_every: 10,
        standardize_targets: true,
    }
}

#[test]
fn training_reports_original_units_and_improves() {
    let dataset = edge_count_dataset(51, 100.0);
    let outcome = train(&dataset, &mae_config(40, None)).unwrap();

    let train_rows: Vec<&MetricRow> =
        outcome.metrics.iter().filter(|m| m.split == "train").collect();
    assert_eq!(train_rows.len(), 40);
    // Targets sit near 100 but are standardized internally; a fresh model
    // must start within a few target standard deviations, far below the
    // offset, or the reported units are wrong.
    assert!(train_rows[0].loss < 50.0, "first epoch loss {}", train_rows[0].loss);
    assert!(train_rows[39].loss < train_rows[0].loss);
    let stats: TargetStats = outcome.model.target_stats.unwrap();
    assert!((stats.mean - 100.0).abs() < 10.0);

    let valid_epochs: Vec<usize> = outcome
        .metrics
        .iter()
        .filter(|m| m.split == "valid")
        .map(|m| m.epoch)
        .collect();
    assert_eq!(valid_epochs, vec![10, 20, 30, 40]);

    let test_row = outcome.metrics.iter().find(|m| m.split == "test").unwrap();
    let final_test = outcome.final_test_loss.unwrap();
    assert_eq!(test_row.loss, final_test);
    let reeval =
        evaluate(&outcome.model, StackFamily::SymNorm, &dataset.test, LossKind::Mae).unwrap();
    assert_eq!(reeval, final_test);
}

#[test]
fn training_is_bit_deterministic() {
    let dataset = edge_count_dataset(52, 10.0);
    let config = mae_config(10, Some(3));
    let a = train(&dataset, &config).unwrap();
    let b = train(&dataset, &config).unwrap();
    assert_eq!(a.metrics.len(), b.metrics.len());
    for (x, y) in a.metrics.iter().zip(&b.metrics) {
        assert_eq!(x.loss.to_bits(), y.loss.to_bits(), "epoch {} {}", x.epoch, x.split);
    }
    let g = &dataset.test[0];
    let stack = graph_stack(g, StackFamily::SymNorm, 2).unwrap();
    let pa = a.model.predict(g, &stack.mats).unwrap();
    let pb = b.model.predict(g, &stack.mats).unwrap();
    assert_eq!(pa[0].to_bits(), pb[0].to_bits());
}

#[test]
fn classification_training_runs() {
    let mut dataset = edge_count_dataset(53, 0.0);
    for split in [&mut dataset.train, &mut dataset.valid, &mut dataset.test] {
        for g in split.iter_mut() {
            let class = (g.num_edges() % 2) as f64;
            g.set_target(Some(class));
        }
    }
    let config = TrainConfig {
        out_dim: 2,
        loss: LossKind::CrossEntropy,
        epochs: 15,
        ..mae_config(15, None)
    };
    let outcome = train(&dataset, &config).unwrap();
    let train_rows: Vec<f64> = outcome
        .metrics
        .iter()
        .filter(|m| m.split == "train")
        .map(|m| m.loss)
        .collect();
    assert!(train_rows.iter().all(|l| l.is_finite()));
    assert!(train_rows[14] <= train_rows[0] + 0.05);
}

#[test]
fn train_config_validation() {
    let dataset = edge_count_dataset(54, 0.0);
    assert!(train(&dataset, &mae_config(0, None)).is_err());
    assert!(train(&dataset, &mae_config(5, Some(0))).is_err());
    let mut bad = mae_config(5, None);
    bad.out_dim = 3;
    assert!(train(&dataset, &bad).is_err());
    let mut bad = mae_config(5, None);
    bad.loss = LossKind::CrossEntropy;
    assert!(train(&dataset, &bad).is_err());
    let empty = Dataset::default();
    assert!(train(&empty, &mae_config(5, None)).is_err());
}

#[test]
fn checkpoint_roundtrip_preserves_predictions_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");

    let dataset = edge_count_dataset(55, 5.0);
    let outcome = train(&dataset, &mae_config(5, None)).unwrap();
    save_model(&path, &outcome.model, StackFamily::SymNorm, LossKind::Mae).unwrap();
    let (loaded, family, loss) = load_model(&path).unwrap();
    assert_eq!(family, StackFamily::SymNorm);
    assert_eq!(loss, LossKind::Mae);
    assert_eq!(loaded.target_stats, outcome.model.target_stats);

    for g in dataset.train.iter().chain(&dataset.test) {
        let stack = graph_stack(g, StackFamily::SymNorm, 2).unwrap();
        let a = outcome.model.predict(g, &stack.mats).unwrap();
        let b = loaded.predict(g, &stack.mats).unwrap();
        assert_eq!(a[0].to_bits(), b[0].to_bits());
    }
}

#[test]
fn checkpoint_rejects_tampered_tensors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    let config = ModelConfig {
        d_node: 1,
        d_edge: 0,
        width: 3,
        k: 1,
        layers: 1,
        out_dim: 1,
        channel_mode: ChannelMode::Shared,
    };
    let model = Model::new(config, 1).unwrap();
    save_model(&path, &model, StackFamily::RawAug, LossKind::Mae).unwrap();

    let text = std::fs::read_to_string(&path).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();

    // Dropping a tensor breaks the count check.
    let mut truncated = v.clone();
    truncated["tensors"].as_array_mut().unwrap().pop();
    let ck: Checkpoint = serde_json::from_value(truncated).unwrap();
    assert!(ck.into_model().is_err());

    // Renaming a tensor breaks the order check.
    let mut renamed = v.clone();
    renamed["tensors"][0]["name"] = "imposter".into();
    let ck: Checkpoint = serde_json::from_value(renamed).unwrap();
    assert!(ck.into_model().is_err());

    // Reshaping a tensor breaks the shape check.
    v["tensors"][0]["rows"] = 99.into();
    let ck: Checkpoint = serde_json::from_value(v).unwrap();
    assert!(ck.into_model().is_err());

    // An unknown version is refused outright.
    let mut ck = Checkpoint::from_model(&model, StackFamily::RawAug, LossKind::Mae);
    ck.format_version = 2;
    assert!(ck.into_model().is_err());
}
