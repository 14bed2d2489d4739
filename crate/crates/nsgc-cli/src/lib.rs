//! Desk-scale experiment harness: synthetic graph datasets with exactly
//! computable targets, single-cell and grid ablation runners, and the CSV
//! conventions shared by the `nsgc` binary.

pub mod cli;
pub mod csvfmt;
pub mod experiment;
pub mod synth;
