//! Discrete-event execution of a [`TaskGraph`].
//!
//! Every resource executes its queue strictly in order; a task starts once it
//! is at the head of its queue, all dependencies have finished and, for a
//! fuse transfer on the split architecture, the destination fuseLink buffer
//! has room. The transfer's words stay in the buffer until every consumer
//! has started.
//!
//! Task duration is `setup + ceil(macs / PEs) + ceil(move_words / bandwidth)`
//! with no overlap of compute and movement inside a task.

use serde::{Deserialize, Serialize};

use super::taskgraph::{TaskGraph, TaskKind};
use super::{ArchConfig, ArchMode, SimError};
use crate::netspec::Modality;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResourceKind {
    Array,
    LinkChannel,
}

/// A resource the tasks are mapped onto, with its in-order queue.
#[derive(Debug, Clone, PartialEq)]
pub struct Resource {
    pub name: String,
    pub kind: ResourceKind,
    pub pes: u64,
    pub bandwidth: f64,
    /// Buffer slot (modality index) a transfer on this resource fills.
    pub buffer: Option<usize>,
    pub queue: Vec<usize>,
}

impl Resource {
    pub fn duration(&self, macs: u64, move_words: u64, setup: u64) -> u64 {
        let compute = if macs == 0 { 0 } else { macs.div_ceil(self.pes) };
        setup + compute + movement_cycles(move_words, self.bandwidth)
    }
}

pub fn movement_cycles(words: u64, bandwidth: f64) -> u64 {
    if words == 0 {
        0
    } else {
        (words as f64 / bandwidth).ceil() as u64
    }
}

/// Maps tasks onto resources for `arch`.
///
/// Baseline: one monolithic array running the whole graph in priority
/// topological order. Split: an array per modality running its home compute
/// and filter tasks, plus an inbound fuseLink channel per modality running
/// the transfers into that half, each queue in local priority order.
pub fn plan_resources(graph: &TaskGraph, arch: &ArchConfig) -> Result<Vec<Resource>, SimError> {
    match arch.mode {
        ArchMode::BaselineSequential => Ok(vec![Resource {
            name: "monolithic".into(),
            kind: ResourceKind::Array,
            pes: arch.total_pes(),
            bandwidth: arch.dram_bandwidth_words_per_cycle,
            buffer: None,
            queue: graph.topological_order()?,
        }]),
        ArchMode::FuseMultitasking => {
            graph.topological_order()?;
            let members = |m: Modality, transfers: bool| -> Vec<usize> {
                graph
                    .tasks
                    .iter()
                    .enumerate()
                    .filter(|(_, t)| t.modality_home == m && (t.kind == TaskKind::FuseTransfer) == transfers)
                    .map(|(i, _)| i)
                    .collect()
            };
            let mut out = Vec::with_capacity(4);
            for m in [Modality::Rgb, Modality::Depth] {
                out.push(Resource {
                    name: m.as_str().to_string(),
                    kind: ResourceKind::Array,
                    pes: arch.pes_per_array(),
                    bandwidth: arch.dram_bandwidth_words_per_cycle,
                    buffer: None,
                    queue: graph.priority_order(&members(m, false))?,
                });
            }
            for m in [Modality::Rgb, Modality::Depth] {
                out.push(Resource {
                    name: format!("{m}_link"),
                    kind: ResourceKind::LinkChannel,
                    pes: 0,
                    bandwidth: arch.fuselink_bandwidth_words_per_cycle,
                    buffer: Some(m as usize),
                    queue: graph.priority_order(&members(m, true))?,
                });
            }
            Ok(out)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayStats {
    pub name: String,
    pub pes: u64,
    pub busy_cycles: u64,
    pub compute_cycles: u64,
    pub idle_cycles: u64,
    pub dependency_stall_cycles: u64,
    pub transfer_stall_cycles: u64,
    pub macs: u64,
    /// macs / (busy_cycles * pes)
    pub pe_utilization: f64,
    /// macs / (compute_cycles * pes)
    pub compute_utilization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub name: String,
    pub busy_cycles: u64,
    pub buffer_wait_cycles: u64,
    pub words: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub mode: ArchMode,
    pub total_cycles: u64,
    pub latency_ms: f64,
    pub arrays: Vec<ArrayStats>,
    pub channels: Vec<ChannelStats>,
    pub peak_fuselink_buffer_words: u64,
    pub total_macs: u64,
    pub energy_proxy: u64,
}

impl SimResult {
    pub fn total_pes(&self) -> u64 {
        self.arrays.iter().map(|a| a.pes).sum()
    }

    /// Whole-run PE utilization.
    pub fn utilization(&self) -> f64 {
        ratio(self.total_macs, self.total_cycles * self.total_pes())
    }

    pub const CSV_HEADER: [&'static str; 7] = [
        "mode",
        "total_cycles",
        "latency_ms",
        "total_macs",
        "utilization",
        "peak_fuselink_buffer_words",
        "energy_proxy",
    ];

    pub fn csv_record(&self) -> [String; 7] {
        [
            self.mode.as_str().to_string(),
            self.total_cycles.to_string(),
            self.latency_ms.to_string(),
            self.total_macs.to_string(),
            self.utilization().to_string(),
            self.peak_fuselink_buffer_words.to_string(),
            self.energy_proxy.to_string(),
        ]
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub task_id: String,
    pub array: String,
    pub start_cycle: u64,
    pub end_cycle: u64,
    pub kind: TaskKind,
}

pub fn simulate(graph: &TaskGraph, arch: &ArchConfig) -> Result<SimResult, SimError> {
    simulate_traced(graph, arch).map(|(r, _)| r)
}

struct Running {
    task: usize,
    end: u64,
}

pub fn simulate_traced(graph: &TaskGraph, arch: &ArchConfig) -> Result<(SimResult, Vec<TraceEvent>), SimError> {
    arch.validate()?;
    let resources = plan_resources(graph, arch)?;
    let split = arch.mode == ArchMode::FuseMultitasking;
    if split {
        for t in graph.tasks.iter().filter(|t| t.kind == TaskKind::FuseTransfer) {
            if t.move_words > arch.fuselink_buffer_words {
                return Err(SimError::TransferExceedsBuffer {
                    link_id: t.link_id.clone().unwrap_or_else(|| t.id.clone()),
                    words: t.move_words,
                    capacity: arch.fuselink_buffer_words,
                });
            }
        }
    }

    let n = graph.len();
    let dependents = graph.dependents();
    let mut done = vec![false; n];
    let mut finish = vec![0u64; n];
    // consumers still to start before a transfer's words leave the buffer
    let mut holders_left: Vec<usize> = dependents.iter().map(Vec::len).collect();
    let mut buffer_home = vec![None; n];
    let mut occupancy = [0u64; 2];
    let mut peak = 0u64;

    let mut next = vec![0usize; resources.len()];
    let mut running: Vec<Option<Running>> = (0..resources.len()).map(|_| None).collect();
    let mut busy = vec![0u64; resources.len()];
    let mut compute = vec![0u64; resources.len()];
    let mut macs = vec![0u64; resources.len()];
    let mut words = vec![0u64; resources.len()];
    let mut dep_stall = vec![0u64; resources.len()];
    let mut transfer_stall = vec![0u64; resources.len()];
    let mut buffer_wait = vec![0u64; resources.len()];
    let mut idle = vec![0u64; resources.len()];
    let mut trace = Vec::with_capacity(n);
    let mut completed = 0usize;
    let mut now = 0u64;

    loop {
        for (r, slot) in running.iter_mut().enumerate() {
            if slot.as_ref().is_some_and(|run| run.end <= now) {
                let run = slot.take().expect("checked");
                done[run.task] = true;
                finish[run.task] = run.end;
                completed += 1;
                if let Some(b) = resources[r].buffer {
                    if holders_left[run.task] == 0 {
                        occupancy[b] -= graph.tasks[run.task].move_words;
                    }
                }
            }
        }

        loop {
            let mut progressed = false;
            for (r, res) in resources.iter().enumerate() {
                if running[r].is_some() || next[r] >= res.queue.len() {
                    continue;
                }
                let i = res.queue[next[r]];
                let task = &graph.tasks[i];
                if !task.depends_on.iter().all(|&d| done[d]) {
                    continue;
                }
                if let Some(b) = res.buffer {
                    if occupancy[b] + task.move_words > arch.fuselink_buffer_words {
                        continue;
                    }
                    occupancy[b] += task.move_words;
                    peak = peak.max(occupancy[b]);
                    buffer_home[i] = Some(b);
                }
                for &d in &task.depends_on {
                    if let Some(b) = buffer_home[d] {
                        holders_left[d] -= 1;
                        if holders_left[d] == 0 {
                            occupancy[b] -= graph.tasks[d].move_words;
                        }
                    }
                }
                let cycles = res.duration(task.macs, task.move_words, arch.task_setup_cycles);
                busy[r] += cycles;
                if task.macs > 0 {
                    compute[r] += task.macs.div_ceil(res.pes);
                }
                macs[r] += task.macs;
                words[r] += task.move_words;
                trace.push(TraceEvent {
                    task_id: task.id.clone(),
                    array: res.name.clone(),
                    start_cycle: now,
                    end_cycle: now + cycles,
                    kind: task.kind,
                });
                next[r] += 1;
                progressed = true;
                if cycles == 0 {
                    done[i] = true;
                    finish[i] = now;
                    completed += 1;
                    if buffer_home[i].is_some() && holders_left[i] == 0 {
                        occupancy[buffer_home[i].expect("checked")] -= task.move_words;
                    }
                } else {
                    running[r] = Some(Running { task: i, end: now + cycles });
                }
            }
            if !progressed {
                break;
            }
        }

        if completed == n {
            break;
        }
        let Some(until) = running.iter().flatten().map(|run| run.end).min() else {
            // prefer the head that is only waiting for buffer room
            let heads: Vec<usize> = resources
                .iter()
                .enumerate()
                .filter(|(r, res)| next[*r] < res.queue.len())
                .map(|(r, res)| res.queue[next[r]])
                .collect();
            let stuck = heads
                .iter()
                .find(|&&i| graph.tasks[i].depends_on.iter().all(|&d| done[d]))
                .or(heads.first());
            let task = &graph.tasks[*stuck.expect("incomplete run has a pending task")];
            return Err(SimError::Deadlock {
                task_id: task.id.clone(),
                link_id: task.link_id.clone(),
            });
        };
        let span = until - now;
        for (r, res) in resources.iter().enumerate() {
            if running[r].is_some() {
                continue;
            }
            if next[r] >= res.queue.len() {
                idle[r] += span;
                continue;
            }
            let task = &graph.tasks[res.queue[next[r]]];
            let waiting: Vec<usize> = task.depends_on.iter().copied().filter(|&d| !done[d]).collect();
            if waiting.is_empty() {
                buffer_wait[r] += span;
            } else if waiting.iter().any(|&d| graph.tasks[d].kind == TaskKind::FuseTransfer) {
                transfer_stall[r] += span;
            } else {
                dep_stall[r] += span;
            }
        }
        now = until;
    }

    let total_cycles = finish.iter().copied().max().unwrap_or(0);
    let mut arrays = Vec::new();
    let mut channels = Vec::new();
    for (r, res) in resources.iter().enumerate() {
        match res.kind {
            ResourceKind::Array => arrays.push(ArrayStats {
                name: res.name.clone(),
                pes: res.pes,
                busy_cycles: busy[r],
                compute_cycles: compute[r],
                idle_cycles: idle[r],
                dependency_stall_cycles: dep_stall[r],
                transfer_stall_cycles: transfer_stall[r],
                macs: macs[r],
                pe_utilization: ratio(macs[r], busy[r] * res.pes),
                compute_utilization: ratio(macs[r], compute[r] * res.pes),
            }),
            ResourceKind::LinkChannel => channels.push(ChannelStats {
                name: res.name.clone(),
                busy_cycles: busy[r],
                buffer_wait_cycles: buffer_wait[r],
                words: words[r],
            }),
        }
    }
    let energy_proxy = arrays.iter().map(|a| a.busy_cycles * a.pes).sum();
    Ok((
        SimResult {
            mode: arch.mode,
            total_cycles,
            latency_ms: total_cycles as f64 / (arch.frequency_mhz * 1000.0),
            arrays,
            channels,
            peak_fuselink_buffer_words: peak,
            total_macs: graph.total_macs(),
            energy_proxy,
        },
        trace,
    ))
}
