//! Zonal network equivalents whose DC power flow parameters are learned from
//! AC power flow solutions of the original network.
//!
//! The pipeline runs parse → zone reduction → scenario generation → AC ground
//! truth → parameter training → evaluation:
//!
//! - [`netmodel`]: network types and the matrix-text case reader/writer.
//! - [`acpf`]: Newton–Raphson AC power flow.
//! - [`reduce`]: zone partitions, tie-lines, flow and injection aggregation.
//! - [`dcpf`]: reduced DC power flow and PTDFs.
//! - [`learn`]: scenarios, datasets, loss and gradients, optimizers, metrics.
//! - [`cli`]: the `gridreduce` command implementations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acpf;
pub mod cli;
pub mod dcpf;
pub mod error;
pub mod learn;
pub mod linalg;
pub mod netmodel;
pub mod reduce;

pub use error::{Error, Result};
