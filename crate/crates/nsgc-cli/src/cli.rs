//! The `nsgc` command line.
//!
//! Usage errors exit with code 2 (clap's convention); any runtime failure
//! prints a single machine-parsable `error: ...` line on stderr and exits
//! with code 1. All output files are written atomically, so a failing
//! invocation never leaves a partial file.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use nsgc_core::eigen::{eig_sym, spectrum_stats, EigenDecomposition};
use nsgc_core::error::{Error, Result};
use nsgc_core::filters::fit_filter;
use nsgc_core::graph::{family_matrix_sym, Graph, GraphRecord, MatrixFamily};
use nsgc_core::nsgn::checkpoint::save_model;
use nsgc_core::nsgn::train::train;
use nsgc_core::nsgn::TrainConfig;
use nsgc_core::spectral::{convergence_trajectory, non_spatial_basis};
use nsgc_core::stacks::{graph_stack, StackFamily};

use crate::csvfmt::{sig9, write_csv};
use crate::experiment::{run_ablation_grid, validate_family_depth, GridConfig};
use crate::synth::{generate_dataset, SyntheticTaskSpec};

#[derive(Parser)]
#[command(
    name = "nsgc",
    version,
    about = "Non-spatial graph convolution toolkit: operator stacks, spectra, \
             convergence trajectories, filter fitting, training, and ablations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emit the operator stack [T^0 .. T^k] of a graph as CSV.
    Basis {
        /// Graph JSON file.
        #[arg(long)]
        graph: PathBuf,
        /// raw_aug | sym_norm | rw_norm | laplacian | power_eps
        #[arg(long)]
        family: String,
        /// Exponent for power_eps, in (0, 1).
        #[arg(long)]
        eps: Option<f64>,
        /// Stack depth; the file holds k + 1 operators.
        #[arg(long)]
        k: usize,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit eigenvalues and spectrum statistics of a family operator.
    Spectrum {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        family: String,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit the cosine convergence trajectory of a filtered signal.
    Converge {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        family: String,
        #[arg(long)]
        eps: Option<f64>,
        /// random | onehot:IDX
        #[arg(long)]
        signal: String,
        /// Optional second signal for the pairwise cosine column.
        #[arg(long)]
        signal2: Option<String>,
        /// Trajectory length; rows run k = 0 ..= kmax.
        #[arg(long)]
        kmax: usize,
        /// Seed for random signals.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit least-squares filter coefficients to a desired per-eigenvalue
    /// response over the fractional power basis of A + I.
    FitFilter {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        k: usize,
        /// Text file holding one desired response value per line, aligned
        /// with the operator's eigenvalues in canonical order.
        #[arg(long)]
        desired: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a synthetic task described by a JSON config.
    Train {
        /// JSON config: a synthetic task plus training fields.
        #[arg(long)]
        config: PathBuf,
        /// Output directory for checkpoint.json and metrics.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an ablation grid described by a JSON config.
    Ablate {
        /// JSON grid config: task, shared settings, and cells.
        #[arg(long)]
        grid: PathBuf,
        /// Output directory for summary.csv and per-cell CSVs.
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn main_entry() -> ExitCode {
    // Usage errors (unknown subcommand, missing flags) exit 2 here.
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Basis { graph, family, eps, k, out } => {
            let g = load_graph(&graph)?;
            let family = resolve_family(&family, eps)?;
            validate_family_depth(family, k)?;
            let stack = graph_stack(&g, family, k)?;
            if stack.overflow {
                eprintln!(
                    "warning: stack entries exceed 1e12 or are not finite; \
                     downstream use is unreliable"
                );
            }
            write_csv(&out, "i,row,col,value", &crate::csvfmt::stack_rows(&stack.mats))?;
            println!("wrote {} operators ({} nodes) to {}", k + 1, g.num_nodes(), out.display());
            Ok(())
        }
        Command::Spectrum { graph, family, eps, out } => {
            let g = load_graph(&graph)?;
            let family = resolve_family(&family, eps)?;
            let d = spectrum_decomposition(&g, family)?;
            let stats = spectrum_stats(&d);
            let mut rows: Vec<String> = d
                .eigvals
                .iter()
                .enumerate()
                .map(|(i, v)| format!("eigenvalue,{i},{}", sig9(*v)))
                .collect();
            rows.push(format!("spectral_gap_ratio,,{}", sig9(stats.spectral_gap_ratio)));
            rows.push(format!("condition_number,,{}", sig9(stats.condition_number)));
            rows.push(format!("num_zero_eigenvalues,,{}", stats.num_zero_eigenvalues));
            write_csv(&out, "field,index,value", &rows)?;
            println!("wrote spectrum of {} to {}", family, out.display());
            Ok(())
        }
        Command::Converge { graph, family, eps, signal, signal2, kmax, seed, out } => {
            let g = load_graph(&graph)?;
            let family = resolve_family(&family, eps)?;
            let d = strict_decomposition(&g, family)?;
            let n = g.num_nodes();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = SignalSpec::from_str(&signal)?.realize(n, &mut rng)?;
            let h2 = match signal2 {
                Some(s) => Some(SignalSpec::from_str(&s)?.realize(n, &mut rng)?),
                None => None,
            };
            let report = convergence_trajectory(&d, &h, h2.as_deref(), kmax)?;
            let rows: Vec<String> = report
                .points
                .iter()
                .map(|p| {
                    let pair = p.cos_pair.map(sig9).unwrap_or_default();
                    format!(
                        "{},{},{},{pair},{}",
                        p.k,
                        sig9(p.cos_p1),
                        sig9(p.cos_pn),
                        p.degenerate
                    )
                })
                .collect();
            write_csv(&out, "k,cos_p1,cos_pn,cos_pair,degenerate", &rows)?;
            match report.effective_leading {
                Some(i) => println!("effective leading eigenvector index: {i}"),
                None => println!("effective leading eigenvector index: none"),
            }
            Ok(())
        }
        Command::FitFilter { graph, eps, k, desired, out } => {
            let g = load_graph(&graph)?;
            if !(eps > 0.0 && eps < 1.0) {
                return Err(Error::BadConfig(format!(
                    "power_eps exponent {eps} must lie strictly inside (0, 1)"
                )));
            }
            let d = eig_sym(&g.augmented_adjacency())?;
            let desired_vals = load_desired(&desired)?;
            if desired_vals.len() != g.num_nodes() {
                return Err(Error::DimensionMismatch(format!(
                    "{} desired values for a {}-node graph",
                    desired_vals.len(),
                    g.num_nodes()
                )));
            }
            let fit = fit_filter(&d, &desired_vals, eps, k)?;
            let mut rows: Vec<String> = fit
                .theta
                .iter()
                .enumerate()
                .map(|(j, v)| format!("theta,{j},{}", sig9(*v)))
                .collect();
            rows.push(format!("residual,,{}", sig9(fit.residual)));
            rows.push(format!("rank,,{}", fit.rank));
            rows.push(format!("rank_deficient,,{}", u8::from(fit.rank_deficient)));
            write_csv(&out, "field,index,value", &rows)?;
            println!(
                "fit {} coefficients, residual {}",
                fit.theta.len(),
                sig9(fit.residual)
            );
            Ok(())
        }
        Command::Train { config, out } => {
            let job: TrainJob = read_json(&config)?;
            job.task.validate()?;
            validate_family_depth(job.train.family, job.train.k)?;
            let dataset = generate_dataset(&job.task)?;
            let outcome = train(&dataset, &job.train)?;
            if outcome.stack_overflow_count > 0 {
                eprintln!(
                    "warning: {} graphs tripped the stack overflow flag",
                    outcome.stack_overflow_count
                );
            }
            fs::create_dir_all(&out)?;
            let rows: Vec<String> = outcome
                .metrics
                .iter()
                .map(|m| format!("{},{},{}", m.epoch, m.split, sig9(m.loss)))
                .collect();
            write_csv(&out.join("metrics.csv"), "epoch,split,loss", &rows)?;
            save_model(
                &out.join("checkpoint.json"),
                &outcome.model,
                job.train.family,
                job.train.loss,
            )?;
            for m in outcome.metrics.iter().rev().take(3).collect::<Vec<_>>().iter().rev() {
                println!("epoch {} {} loss {}", m.epoch, m.split, sig9(m.loss));
            }
            println!("wrote checkpoint.json and metrics.csv to {}", out.display());
            Ok(())
        }
        Command::Ablate { grid, out } => {
            let config: GridConfig = read_json(&grid)?;
            let reports = run_ablation_grid(&config)?;
            fs::create_dir_all(&out)?;
            let mut summary = Vec::with_capacity(reports.len());
            for report in &reports {
                let eps = report.eps.map(sig9).unwrap_or_default();
                let fmt_opt = |v: Option<f64>| v.map(sig9).unwrap_or_default();
                summary.push(format!(
                    "{},{},{eps},{},{},{},{},{},{},{}",
                    report.index,
                    report.family,
                    report.k,
                    mode_name(report.channel_mode),
                    csv_quote(&report.status),
                    report.runs.len(),
                    fmt_opt(report.mean),
                    fmt_opt(report.std),
                    fmt_opt(report.median),
                ));
                if !report.runs.is_empty() {
                    let rows: Vec<String> = report
                        .runs
                        .iter()
                        .map(|r| {
                            format!("{},{},{}", r.seed, sig9(r.test_loss), sig9(r.train_loss))
                        })
                        .collect();
                    let cell = &config.cells[report.index];
                    let name = format!("cell_{:02}_{}.csv", report.index, cell.label());
                    write_csv(&out.join(name), "seed,test_loss,train_loss", &rows)?;
                }
                println!(
                    "cell {:02} {:<28} {}",
                    report.index,
                    config.cells[report.index].label(),
                    match report.median {
                        Some(m) => format!("median test loss {}", sig9(m)),
                        None => report.status.clone(),
                    }
                );
            }
            write_csv(
                &out.join("summary.csv"),
                "cell,family,eps,k,channel_mode,status,n_seeds,mean,std,median",
                &summary,
            )?;
            println!("wrote summary.csv and per-cell files to {}", out.display());
            Ok(())
        }
    }
}

/// Training job file: a synthetic task plus the training fields, flat.
#[derive(Deserialize)]
struct TrainJob {
    task: SyntheticTaskSpec,
    #[serde(flatten)]
    train: TrainConfig,
}

fn mode_name(mode: nsgc_core::nsgn::ChannelMode) -> &'static str {
    match mode {
        nsgc_core::nsgn::ChannelMode::Shared => "shared",
        nsgc_core::nsgn::ChannelMode::Independent => "independent",
    }
}

/// Quotes a CSV field that may contain commas.
fn csv_quote(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn load_graph(path: &Path) -> Result<Graph> {
    let record: GraphRecord = read_json(path)?;
    record.to_graph()
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::BadConfig(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::BadConfig(format!("cannot parse {}: {e}", path.display())))
}

fn load_desired(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::BadConfig(format!("cannot read {}: {e}", path.display())))?;
    let mut vals = Vec::new();
    for (lineno, token) in text.split_whitespace().enumerate() {
        vals.push(token.parse::<f64>().map_err(|_| {
            Error::BadConfig(format!(
                "desired-response entry {} ('{token}') is not a number",
                lineno + 1
            ))
        })?);
    }
    if vals.is_empty() {
        return Err(Error::BadConfig("desired-response file holds no values".into()));
    }
    Ok(vals)
}

fn resolve_family(name: &str, eps: Option<f64>) -> Result<StackFamily> {
    if name == "power_eps" {
        let eps = eps.ok_or_else(|| {
            Error::BadConfig("family power_eps requires --eps".into())
        })?;
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::BadConfig(format!(
                "power_eps exponent {eps} must lie strictly inside (0, 1)"
            )));
        }
        return Ok(StackFamily::PowerEps { eps });
    }
    if eps.is_some() {
        return Err(Error::BadConfig(format!(
            "--eps only applies to family power_eps, not {name}"
        )));
    }
    Ok(match MatrixFamily::parse(name)? {
        MatrixFamily::RawAug => StackFamily::RawAug,
        MatrixFamily::SymNorm => StackFamily::SymNorm,
        MatrixFamily::RwNorm => StackFamily::RwNorm,
        MatrixFamily::Laplacian => StackFamily::Laplacian,
    })
}

/// Eigenvalue-only reporting: rw_norm is similar to sym_norm via a
/// diagonal conjugation, so their spectra coincide exactly and the
/// symmetric twin stands in for the solver.
fn spectrum_decomposition(g: &Graph, family: StackFamily) -> Result<EigenDecomposition> {
    match family {
        StackFamily::RwNorm => eig_sym(&family_matrix_sym(g, MatrixFamily::SymNorm)?),
        other => strict_decomposition(g, other),
    }
}

/// Trajectories need the operator's own eigenvectors, so no similarity
/// stand-in is allowed: rw_norm passes only when it is numerically
/// symmetric (regular graphs), otherwise the symmetry check fails loudly.
fn strict_decomposition(g: &Graph, family: StackFamily) -> Result<EigenDecomposition> {
    match family {
        StackFamily::PowerEps { eps } => {
            let d = eig_sym(&g.augmented_adjacency())?;
            eig_sym(&non_spatial_basis(&d, eps)?)
        }
        other => {
            let mf = other.matrix_family().expect("integer-power family");
            eig_sym(&family_matrix_sym(g, mf)?)
        }
    }
}

enum SignalSpec {
    Random,
    OneHot(usize),
}

impl FromStr for SignalSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<SignalSpec> {
        if s == "random" {
            return Ok(SignalSpec::Random);
        }
        if let Some(idx) = s.strip_prefix("onehot:") {
            let idx = idx.parse::<usize>().map_err(|_| {
                Error::BadConfig(format!("bad one-hot index in signal '{s}'"))
            })?;
            return Ok(SignalSpec::OneHot(idx));
        }
        Err(Error::BadConfig(format!(
            "unknown signal '{s}' (expected random or onehot:IDX)"
        )))
    }
}

impl SignalSpec {
    fn realize(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        match *self {
            SignalSpec::Random => Ok((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()),
            SignalSpec::OneHot(idx) => {
                if idx >= n {
                    return Err(Error::IndexOutOfRange { index: idx, num_nodes: n });
                }
                let mut h = vec![0.0; n];
                h[idx] = 1.0;
                Ok(h)
            }
        }
    }
}
