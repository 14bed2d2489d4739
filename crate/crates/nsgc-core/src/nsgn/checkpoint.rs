//! Versioned JSON checkpoints.
//!
//! A checkpoint stores the model config, the operator family and loss it
//! was trained with, target statistics, and every parameter tensor as a
//! named, shaped, row-major float list. Tensor order is fixed:
//!
//! ```text
//! node_embed.{w1,b1,w2,b2}
//! edge_embed.{w1,b1,w2,b2}
//! no_edge
//! self_loop
//! basis_mixer.{w1,b1,w2,b2}
//! layers.<i>.message.{w1,b1,w2,b2}   for i = 0..L
//! layers.<i>.update.{w1,b1,w2,b2}
//! head.{w1,b1,w2,b2}
//! ```
//!
//! Loading validates the version, the names, and every shape against the
//! config before touching any tensor. Saves go through a sibling
//! temporary file and a rename, so a failed write never leaves a
//! truncated checkpoint behind.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::Nonlinearity;
use crate::mat::Mat;
use crate::nsgn::loss::LossKind;
use crate::nsgn::mlp::Mlp;
use crate::nsgn::model::{LayerParams, Model, ModelConfig, ModelParams, TargetStats};
use crate::stacks::StackFamily;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: ModelConfig,
    pub family: StackFamily,
    pub loss: LossKind,
    pub target_stats: Option<TargetStats>,
    tensors: Vec<TensorRecord>,
}

fn mat_record(name: String, m: &Mat) -> TensorRecord {
    TensorRecord { name, rows: m.rows(), cols: m.cols(), data: m.data().to_vec() }
}

fn vec_record(name: String, v: &[f64]) -> TensorRecord {
    TensorRecord { name, rows: 1, cols: v.len(), data: v.to_vec() }
}

fn mlp_records(prefix: &str, mlp: &Mlp, out: &mut Vec<TensorRecord>) {
    out.push(mat_record(format!("{prefix}.w1"), &mlp.w1));
    out.push(vec_record(format!("{prefix}.b1"), &mlp.b1));
    out.push(mat_record(format!("{prefix}.w2"), &mlp.w2));
    out.push(vec_record(format!("{prefix}.b2"), &mlp.b2));
}

/// Pulls the next four records off the iterator and rebuilds one
/// perceptron, checking names and shapes.
fn take_mlp(
    prefix: &str,
    in_dim: usize,
    hidden: usize,
    out_dim: usize,
    act: Nonlinearity,
    records: &mut std::vec::IntoIter<TensorRecord>,
) -> Result<Mlp> {
    let w1 = take_mat(&format!("{prefix}.w1"), in_dim, hidden, records)?;
    let b1 = take_vec(&format!("{prefix}.b1"), hidden, records)?;
    let w2 = take_mat(&format!("{prefix}.w2"), hidden, out_dim, records)?;
    let b2 = take_vec(&format!("{prefix}.b2"), out_dim, records)?;
    Ok(Mlp { w1, b1, w2, b2, hidden_act: act })
}

fn take_record(
    name: &str,
    rows: usize,
    cols: usize,
    records: &mut std::vec::IntoIter<TensorRecord>,
) -> Result<TensorRecord> {
    let rec = records
        .next()
        .ok_or_else(|| Error::BadConfig(format!("checkpoint is missing tensor {name}")))?;
    if rec.name != name {
        return Err(Error::BadConfig(format!(
            "checkpoint tensor order mismatch: expected {name}, found {}",
            rec.name
        )));
    }
    if rec.rows != rows || rec.cols != cols || rec.data.len() != rows * cols {
        return Err(Error::BadConfig(format!(
            "checkpoint tensor {name} has shape {}x{} ({} values), expected {rows}x{cols}",
            rec.rows,
            rec.cols,
            rec.data.len()
        )));
    }
    Ok(rec)
}

fn take_mat(
    name: &str,
    rows: usize,
    cols: usize,
    records: &mut std::vec::IntoIter<TensorRecord>,
) -> Result<Mat> {
    let rec = take_record(name, rows, cols, records)?;
    Mat::from_vec(rows, cols, rec.data)
}

fn take_vec(
    name: &str,
    len: usize,
    records: &mut std::vec::IntoIter<TensorRecord>,
) -> Result<Vec<f64>> {
    Ok(take_record(name, 1, len, records)?.data)
}

impl Checkpoint {
    pub fn from_model(model: &Model, family: StackFamily, loss: LossKind) -> Checkpoint {
        let p = &model.params;
        let mut tensors = Vec::new();
        mlp_records("node_embed", &p.node_embed, &mut tensors);
        mlp_records("edge_embed", &p.edge_embed, &mut tensors);
        tensors.push(vec_record("no_edge".into(), &p.no_edge));
        tensors.push(vec_record("self_loop".into(), &p.self_loop));
        mlp_records("basis_mixer", &p.basis_mixer, &mut tensors);
        for (i, layer) in p.layers.iter().enumerate() {
            mlp_records(&format!("layers.{i}.message"), &layer.message, &mut tensors);
            mlp_records(&format!("layers.{i}.update"), &layer.update, &mut tensors);
        }
        mlp_records("head", &p.head, &mut tensors);
        Checkpoint {
            format_version: FORMAT_VERSION,
            config: model.config.clone(),
            family,
            loss,
            target_stats: model.target_stats,
            tensors,
        }
    }

    pub fn into_model(self) -> Result<(Model, StackFamily, LossKind)> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::BadConfig(format!(
                "unsupported checkpoint format_version {} (this build reads {FORMAT_VERSION})",
                self.format_version
            )));
        }
        self.config.validate()?;
        let c = &self.config;
        let d = c.width;
        let mix_out = match c.channel_mode {
            crate::nsgn::model::ChannelMode::Shared => 1,
            crate::nsgn::model::ChannelMode::Independent => d,
        };
        let expected = 4 * (4 + 2 * c.layers) + 2;
        if self.tensors.len() != expected {
            return Err(Error::BadConfig(format!(
                "checkpoint holds {} tensors, config implies {expected}",
                self.tensors.len()
            )));
        }
        let mut it = self.tensors.into_iter();
        let relu = Nonlinearity::Relu;
        let node_embed = take_mlp("node_embed", c.d_node, d, d, relu, &mut it)?;
        let edge_embed = take_mlp("edge_embed", c.d_edge, d, d, relu, &mut it)?;
        let no_edge = take_vec("no_edge", d, &mut it)?;
        let self_loop = take_vec("self_loop", d, &mut it)?;
        let basis_mixer = take_mlp("basis_mixer", c.k + 1, d, mix_out, relu, &mut it)?;
        let mut layers = Vec::with_capacity(c.layers);
        for i in 0..c.layers {
            let message = take_mlp(&format!("layers.{i}.message"), d, d, d, relu, &mut it)?;
            let update = take_mlp(&format!("layers.{i}.update"), d, d, d, relu, &mut it)?;
            layers.push(LayerParams { message, update });
        }
        let head = take_mlp("head", d, d, c.out_dim, relu, &mut it)?;
        let params =
            ModelParams { node_embed, edge_embed, no_edge, self_loop, basis_mixer, layers, head };
        let model = Model { config: self.config, params, target_stats: self.target_stats };
        Ok((model, self.family, self.loss))
    }

    /// Serializes to `path` atomically: a sibling `.tmp` file is written
    /// and renamed over the target.
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        let tmp = temp_sibling(path);
        fs::write(&tmp, json)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn temp_sibling(path: &Path) -> std::path::PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Convenience wrapper for the common save path.
pub fn save_model(path: &Path, model: &Model, family: StackFamily, loss: LossKind) -> Result<()> {
    Checkpoint::from_model(model, family, loss).save(path)
}

/// Convenience wrapper for the common load path.
pub fn load_model(path: &Path) -> Result<(Model, StackFamily, LossKind)> {
    Checkpoint::load(path)?.into_model()
}
