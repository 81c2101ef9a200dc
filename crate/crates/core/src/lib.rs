//! Modeling toolkit for RGB-D middle fusion on a split-PE-array accelerator.
//!
//! - [`netspec`]: dual-network shapes and presets
//! - [`fuselink`]: cross-modal links, deployment enumeration and ranking
//! - [`hypergate`]: hypernetwork gating and threshold pruning
//! - [`costmodel`]: MAC, parameter and storage accounting
//! - [`simulator`]: task graphs and discrete-event execution
//! - [`cli`]: the `a3sim` command-line front end

pub mod cli;
pub mod costmodel;
pub mod fuselink;
pub mod hypergate;
pub mod netspec;
pub mod simulator;
