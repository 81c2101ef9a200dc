use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::costmodel::{layer_cost, link_cost};
use crate::fuselink::{validate_deployment, Deployment};
use crate::netspec::{DualNetwork, Modality};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    LayerCompute,
    FuseFilter,
    FuseTransfer,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::LayerCompute => "layer_compute",
            TaskKind::FuseFilter => "fuse_filter",
            TaskKind::FuseTransfer => "fuse_transfer",
        }
    }

    // fuse tasks feeding a level run before that level's layers
    fn rank(self) -> u8 {
        match self {
            TaskKind::FuseFilter => 0,
            TaskKind::FuseTransfer => 1,
            TaskKind::LayerCompute => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Task {
    pub id: String,
    pub kind: TaskKind,
    pub modality_home: Modality,
    /// Level the task belongs to; for fuse tasks, the passive level.
    pub level: usize,
    pub macs: u64,
    pub move_words: u64,
    /// Indices into [`TaskGraph::tasks`].
    pub depends_on: Vec<usize>,
    pub link_id: Option<String>,
}

impl Task {
    pub fn compute(id: impl Into<String>, home: Modality, level: usize, macs: u64, move_words: u64) -> Self {
        Task {
            id: id.into(),
            kind: TaskKind::LayerCompute,
            modality_home: home,
            level,
            macs,
            move_words,
            depends_on: Vec::new(),
            link_id: None,
        }
    }

    pub fn after(mut self, deps: &[usize]) -> Self {
        self.depends_on.extend_from_slice(deps);
        self
    }
}

/// Scheduling priority: modality (RGB first), level, kind, insertion index.
pub type PriorityKey = (Modality, usize, u8, usize);

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TaskGraph {
    pub tasks: Vec<Task>,
}

impl TaskGraph {
    /// Checks ids and dependency indices; acyclicity is checked by
    /// [`TaskGraph::topological_order`].
    pub fn new(tasks: Vec<Task>) -> Result<Self, SimError> {
        let mut ids = HashSet::new();
        for (i, t) in tasks.iter().enumerate() {
            if !ids.insert(t.id.as_str()) {
                return Err(SimError::BadGraph(format!("duplicate task id '{}'", t.id)));
            }
            if let Some(&d) = t.depends_on.iter().find(|&&d| d >= tasks.len() || d == i) {
                return Err(SimError::BadGraph(format!("task '{}' has invalid dependency {d}", t.id)));
            }
            if t.kind == TaskKind::FuseTransfer && t.macs != 0 {
                return Err(SimError::BadGraph(format!("transfer '{}' carries MACs", t.id)));
            }
        }
        Ok(TaskGraph { tasks })
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn priority(&self, i: usize) -> PriorityKey {
        let t = &self.tasks[i];
        (t.modality_home, t.level, t.kind.rank(), i)
    }

    pub fn dependents(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.tasks.len()];
        for (i, t) in self.tasks.iter().enumerate() {
            for &d in &t.depends_on {
                out[d].push(i);
            }
        }
        out
    }

    pub fn total_macs(&self) -> u64 {
        self.tasks.iter().map(|t| t.macs).sum()
    }

    /// Topological order restricted to `members` (edges between members
    /// only), choosing the smallest [`PriorityKey`] among ready tasks.
    pub fn priority_order(&self, members: &[usize]) -> Result<Vec<usize>, SimError> {
        let mut in_set = vec![false; self.tasks.len()];
        for &m in members {
            in_set[m] = true;
        }
        let dependents = self.dependents();
        let mut pending = vec![0usize; self.tasks.len()];
        for &m in members {
            pending[m] = self.tasks[m].depends_on.iter().filter(|&&d| in_set[d]).count();
        }
        let mut ready: BinaryHeap<Reverse<PriorityKey>> = members
            .iter()
            .filter(|&&m| pending[m] == 0)
            .map(|&m| Reverse(self.priority(m)))
            .collect();
        let mut order = Vec::with_capacity(members.len());
        while let Some(Reverse(key)) = ready.pop() {
            let i = key.3;
            order.push(i);
            for &n in &dependents[i] {
                if in_set[n] {
                    pending[n] -= 1;
                    if pending[n] == 0 {
                        ready.push(Reverse(self.priority(n)));
                    }
                }
            }
        }
        if order.len() != members.len() {
            return Err(SimError::Cycle);
        }
        Ok(order)
    }

    /// Deterministic topological order of the whole graph.
    pub fn topological_order(&self) -> Result<Vec<usize>, SimError> {
        let all: Vec<usize> = (0..self.tasks.len()).collect();
        self.priority_order(&all)
    }
}

/// One compute task per layer, chained within each modality; per link a
/// fuse_filter on the passive half and a fuse_transfer feeding the passive
/// block's first layer.
///
/// Layer tasks move their weights plus input and output feature maps. A
/// filter moves its weights plus the active feature map; a transfer moves
/// the partial-sum tensor.
pub fn build_taskgraph(nets: &DualNetwork, dep: &Deployment) -> Result<TaskGraph, SimError> {
    let report = validate_deployment(dep, nets);
    if !report.is_clean() {
        return Err(SimError::InvalidDeployment(report));
    }
    let mut tasks: Vec<Task> = Vec::new();
    let mut first_of_block = [Vec::new(), Vec::new()];
    let mut last_of_block = [Vec::new(), Vec::new()];
    for (slot, modality) in [Modality::Rgb, Modality::Depth].into_iter().enumerate() {
        let net = nets.get(modality);
        let mut prev: Option<usize> = None;
        for (level, block) in net.blocks.iter().enumerate() {
            for (pos, layer) in block.iter().enumerate() {
                let cost = layer_cost(layer);
                let moved = cost.weight_words + layer.input_shape().words() + cost.activation_words;
                let task = Task::compute(format!("{modality}/{}", layer.id), modality, level, cost.macs, moved)
                    .after(prev.as_slice());
                let idx = tasks.len();
                tasks.push(task);
                if pos == 0 {
                    first_of_block[slot].push(idx);
                }
                prev = Some(idx);
            }
            last_of_block[slot].push(prev.expect("blocks are non-empty"));
        }
    }
    let slot = |m: Modality| m as usize;
    for link in &dep.links {
        let cost = link_cost(link, nets)?;
        let active_task = last_of_block[slot(link.active.modality)][link.active.level];
        let active_out = link
            .active_layer(nets)
            .map(|l| l.output_shape().words())
            .unwrap_or_default();
        let filter = tasks.len();
        tasks.push(Task {
            id: format!("fuse/{}/filter", link.id),
            kind: TaskKind::FuseFilter,
            modality_home: link.passive.modality,
            level: link.passive.level,
            macs: cost.macs,
            move_words: cost.weight_words + active_out,
            depends_on: vec![active_task],
            link_id: Some(link.id.clone()),
        });
        let transfer = tasks.len();
        tasks.push(Task {
            id: format!("fuse/{}/transfer", link.id),
            kind: TaskKind::FuseTransfer,
            modality_home: link.passive.modality,
            level: link.passive.level,
            macs: 0,
            move_words: cost.activation_words,
            depends_on: vec![filter],
            link_id: Some(link.id.clone()),
        });
        let consumer = first_of_block[slot(link.passive.modality)][link.passive.level];
        tasks[consumer].depends_on.push(transfer);
    }
    TaskGraph::new(tasks)
}
