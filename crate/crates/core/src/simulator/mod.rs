//! Fused task graphs and their cycle-approximate execution on the monolithic
//! baseline and on the split Fuse-Multitasking array.

mod arch;
mod compare;
mod engine;
mod replay;
mod taskgraph;

use thiserror::Error;

pub use arch::{ArchConfig, ArchMode, BufferSizes};
pub use compare::{compare, ComparisonRow, ComparisonTable, DeltaRow};
pub use engine::{
    movement_cycles, plan_resources, simulate, simulate_traced, ArrayStats, ChannelStats, Resource,
    ResourceKind, SimResult, TraceEvent,
};
pub use replay::{read_trace_csv, verify_trace, write_trace_csv};
pub use taskgraph::{build_taskgraph, PriorityKey, Task, TaskGraph, TaskKind};

use crate::costmodel::CostError;
use crate::fuselink::{Deployment, ValidationReport};
use crate::hypergate::{prune, GateError, GateVector, Threshold};
use crate::netspec::DualNetwork;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("architecture config: {0}")]
    Config(String),
    #[error("task graph has a cycle")]
    Cycle,
    #[error("task graph: {0}")]
    BadGraph(String),
    #[error("link '{link_id}': transfer of {words} words exceeds the {capacity}-word fuseLink buffer")]
    TransferExceedsBuffer {
        link_id: String,
        words: u64,
        capacity: u64,
    },
    #[error("deadlock: task '{task_id}' can never start{}", .link_id.as_ref().map(|l| format!(" (link '{l}')")).unwrap_or_default())]
    Deadlock {
        task_id: String,
        link_id: Option<String>,
    },
    #[error("invalid deployment: {} violation(s)", .0.violations.len())]
    InvalidDeployment(ValidationReport),
    #[error("comparison needs at least 2 results, got {0}")]
    TooFewResults(usize),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Gate(#[from] GateError),
}

/// Optionally prunes `dep` with `gating`, then builds and simulates it.
pub fn run_experiment(
    nets: &DualNetwork,
    dep: &Deployment,
    gating: Option<(&GateVector, Threshold)>,
    arch: &ArchConfig,
) -> Result<SimResult, SimError> {
    let pruned;
    let dep = match gating {
        Some((gates, th)) => {
            pruned = prune(dep, gates, th)?;
            &pruned
        }
        None => dep,
    };
    simulate(&build_taskgraph(nets, dep)?, arch)
}
