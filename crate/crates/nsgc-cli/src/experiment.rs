//! Ablation orchestration: one grid cell = (operator family, stack depth,
//! channel mode) trained once per seed, reported as per-seed metrics plus
//! mean, sample std, and median.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use nsgc_core::error::{Error, Result};
use nsgc_core::nsgn::{train, ChannelMode, Dataset, LossKind, OptimConfig, TrainConfig};
use nsgc_core::stacks::StackFamily;

use crate::synth::{generate_dataset, SyntheticTaskSpec};

/// Unnormalized stacks blow up entrywise with depth, so deeper raw stacks
/// are refused outright.
pub const RAW_AUG_MAX_K: usize = 5;
pub const RAW_AUG_CAP_MESSAGE: &str =
    "raw_aug stacks are numerically unstable for k > 5; use k <= 5 or a normalized family";

/// One grid cell: which operator stack and channel mode to train.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellSpec {
    #[serde(flatten)]
    pub family: StackFamily,
    pub k: usize,
    pub channel_mode: ChannelMode,
}

/// Family-level caps shared by every entry point that builds stacks on
/// user request (experiments, grids, and the CLI subcommands).
pub fn validate_family_depth(family: StackFamily, k: usize) -> Result<()> {
    match family {
        StackFamily::RawAug if k > RAW_AUG_MAX_K => {
            Err(Error::BadConfig(RAW_AUG_CAP_MESSAGE.into()))
        }
        StackFamily::PowerEps { eps } if !(eps > 0.0 && eps < 1.0) => Err(Error::BadConfig(
            format!("power_eps exponent {eps} must lie strictly inside (0, 1)"),
        )),
        _ => Ok(()),
    }
}

impl CellSpec {
    pub fn validate(&self) -> Result<()> {
        validate_family_depth(self.family, self.k)
    }

    /// `family[eps]_mode_k` token used in file names and report rows.
    pub fn label(&self) -> String {
        let mode = match self.channel_mode {
            ChannelMode::Shared => "shared",
            ChannelMode::Independent => "independent",
        };
        format!("{}_{}_k{}", self.family, mode, self.k)
    }
}

/// Training knobs shared by every cell of a grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSettings {
    pub d: usize,
    pub layers: usize,
    pub epochs: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_loss")]
    pub loss: LossKind,
    #[serde(default = "default_out_dim")]
    pub out_dim: usize,
    #[serde(default)]
    pub optim: OptimConfig,
    #[serde(default)]
    pub batch_size: Option<usize>,
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}

fn default_loss() -> LossKind {
    LossKind::Mae
}

fn default_out_dim() -> usize {
    1
}

/// A single-cell experiment: task + settings + one cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: SyntheticTaskSpec,
    #[serde(flatten)]
    pub settings: RunSettings,
    #[serde(flatten)]
    pub cell: CellSpec,
}

/// A grid: task + settings + many cells.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridConfig {
    pub task: SyntheticTaskSpec,
    #[serde(flatten)]
    pub settings: RunSettings,
    pub cells: Vec<CellSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub test_loss: f64,
    pub train_loss: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellReport {
    pub index: usize,
    pub family: String,
    /// Exponent for power_eps cells, empty otherwise.
    pub eps: Option<f64>,
    pub k: usize,
    pub channel_mode: ChannelMode,
    /// "ok", or "error: ..." for cells that failed at runtime. Failed
    /// cells keep their row; they are never dropped from a grid report.
    pub status: String,
    pub runs: Vec<SeedRun>,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub median: Option<f64>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn aggregate(index: usize, cell: &CellSpec, runs: Vec<SeedRun>) -> CellReport {
    let losses: Vec<f64> = runs.iter().map(|r| r.test_loss).collect();
    let n = losses.len() as f64;
    let mean = losses.iter().sum::<f64>() / n;
    let std = if losses.len() > 1 {
        (losses.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let (family, eps) = match cell.family {
        StackFamily::PowerEps { eps } => ("power_eps".to_string(), Some(eps)),
        f => (f.to_string(), None),
    };
    CellReport {
        index,
        family,
        eps,
        k: cell.k,
        channel_mode: cell.channel_mode,
        status: "ok".into(),
        median: Some(median(&losses)),
        runs,
        mean: Some(mean),
        std: Some(std),
    }
}

fn failed_cell(index: usize, cell: &CellSpec, err: &Error) -> CellReport {
    let (family, eps) = match cell.family {
        StackFamily::PowerEps { eps } => ("power_eps".to_string(), Some(eps)),
        f => (f.to_string(), None),
    };
    CellReport {
        index,
        family,
        eps,
        k: cell.k,
        channel_mode: cell.channel_mode,
        status: format!("error: {err}"),
        runs: Vec::new(),
        mean: None,
        std: None,
        median: None,
    }
}

fn train_config(settings: &RunSettings, cell: &CellSpec, seed: u64, epochs: usize) -> TrainConfig {
    TrainConfig {
        family: cell.family,
        k: cell.k,
        channel_mode: cell.channel_mode,
        d: settings.d,
        layers: settings.layers,
        out_dim: settings.out_dim,
        loss: settings.loss,
        epochs,
        seed,
        optim: settings.optim,
        batch_size: settings.batch_size,
        // Validation inside ablation runs only at the end; the harness
        // reads test metrics, so mid-run eval is wasted work.
        valid_every: epochs.max(1),
        standardize_targets: true,
    }
}

/// Trains one cell over every seed. Zero epochs is legal and reports the
/// untrained model's metrics (the loop still evaluates).
fn run_cell(dataset: &Dataset, settings: &RunSettings, cell: &CellSpec) -> Result<Vec<SeedRun>> {
    let mut runs = Vec::with_capacity(settings.seeds.len());
    for &seed in &settings.seeds {
        // train() requires at least one epoch; epochs = 0 means "evaluate
        // the untrained model", realized as one epoch with zero learning
        // rate so parameters stay at initialization.
        let (epochs, optim) = if settings.epochs == 0 {
            (1, OptimConfig { lr: 0.0, ..settings.optim })
        } else {
            (settings.epochs, settings.optim)
        };
        let mut config = train_config(settings, cell, seed, epochs);
        config.optim = optim;
        let outcome = train(dataset, &config)?;
        let test_loss = outcome.final_test_loss.ok_or_else(|| {
            Error::EmptyDataset("ablation dataset has an empty test split".into())
        })?;
        let train_loss = outcome
            .metrics
            .iter()
            .rev()
            .find(|m| m.split == "train")
            .map(|m| m.loss)
            .unwrap_or(f64::NAN);
        runs.push(SeedRun { seed, test_loss, train_loss });
    }
    Ok(runs)
}

/// Runs a single-cell experiment; propagates any failure.
pub fn run_experiment(config: &ExperimentConfig) -> Result<CellReport> {
    config.task.validate()?;
    config.cell.validate()?;
    let dataset = generate_dataset(&config.task)?;
    let runs = run_cell(&dataset, &config.settings, &config.cell)?;
    Ok(aggregate(0, &config.cell, runs))
}

/// Cell parallelism cap from `NSGC_THREADS`; defaults to 1 (sequential).
pub fn thread_cap() -> usize {
    std::env::var("NSGC_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v >= 1)
        .unwrap_or(1)
}

/// Runs every cell of the grid. Spec errors (bad task, a cell violating
/// the family caps) reject the whole grid up front; runtime failures are
/// recorded per cell in `status` and never drop the row. Reports come
/// back ordered by cell index regardless of scheduling.
pub fn run_ablation_grid(config: &GridConfig) -> Result<Vec<CellReport>> {
    config.task.validate()?;
    if config.cells.is_empty() {
        return Err(Error::BadConfig("ablation grid has no cells".into()));
    }
    for cell in &config.cells {
        cell.validate()?;
    }
    let dataset = generate_dataset(&config.task)?;

    let workers = thread_cap().min(config.cells.len());
    let reports: Mutex<Vec<Option<CellReport>>> =
        Mutex::new(vec![None; config.cells.len()]);
    let next: Mutex<usize> = Mutex::new(0);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = {
                    let mut guard = next.lock().unwrap();
                    let i = *guard;
                    if i >= config.cells.len() {
                        return;
                    }
                    *guard += 1;
                    i
                };
                let cell = &config.cells[index];
                let report = match run_cell(&dataset, &config.settings, cell) {
                    Ok(runs) => aggregate(index, cell, runs),
                    Err(e) => failed_cell(index, cell, &e),
                };
                reports.lock().unwrap()[index] = Some(report);
            });
        }
    });

    Ok(reports
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every cell index was claimed"))
        .collect())
}
