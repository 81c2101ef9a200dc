//! Reference oracles and generators shared by the integration suites.
//!
//! The oracles deliberately avoid the library's closed forms: MACs are
//! counted one at a time, the hypernetwork is evaluated with explicit index
//! loops, and the simulator advances one cycle per step.

#![allow(dead_code, clippy::needless_range_loop, clippy::manual_div_ceil)]

use std::collections::HashSet;

use a3sim::fuselink::{make_link, Deployment, EndpointRef, FuseLink};
use a3sim::hypergate::HyperNet;
use a3sim::netspec::{DualNetwork, LayerKind, LayerSpec, Modality, NetworkSpec};
use a3sim::simulator::{ArchConfig, ArchMode, TaskGraph, TaskKind};
use ndarray::Array3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- MACs

/// Counts multiply-accumulates by walking every output element and every
/// kernel tap. Padded taps count, as the hardware still issues them.
pub fn brute_layer_macs(layer: &LayerSpec) -> u64 {
    match layer.kind {
        LayerKind::Pool | LayerKind::Upsample => 0,
        LayerKind::Fc => {
            let mut n = 0;
            for _o in 0..layer.out_channels {
                for _i in 0..layer.in_channels {
                    n += 1;
                }
            }
            n
        }
        LayerKind::Conv => {
            let padded_h = layer.in_height + 2 * layer.padding;
            let padded_w = layer.in_width + 2 * layer.padding;
            let mut n = 0;
            for _oc in 0..layer.out_channels {
                let mut oy = 0;
                while oy * layer.stride + layer.kernel_h <= padded_h {
                    let mut ox = 0;
                    while ox * layer.stride + layer.kernel_w <= padded_w {
                        for _ic in 0..layer.in_channels {
                            for _ky in 0..layer.kernel_h {
                                for _kx in 0..layer.kernel_w {
                                    n += 1;
                                }
                            }
                        }
                        ox += 1;
                    }
                    oy += 1;
                }
            }
            n
        }
    }
}

/// A fuseFilter evaluated as a conv producing one partial sum per passive
/// input element.
pub fn brute_link_macs(link: &FuseLink, nets: &DualNetwork) -> u64 {
    let passive = nets
        .get(link.passive.modality)
        .first_layer(link.passive.level)
        .expect("resolvable link");
    let active = nets
        .get(link.active.modality)
        .last_layer(link.active.level)
        .expect("resolvable link");
    let mut n = 0;
    for _co in 0..passive.in_channels {
        for _y in 0..passive.in_height {
            for _x in 0..passive.in_width {
                for _ci in 0..active.out_channels {
                    for _ky in 0..link.filter.h {
                        for _kx in 0..link.filter.w {
                            n += 1;
                        }
                    }
                }
            }
        }
    }
    n
}

// ---------------------------------------------------------------- hypernet

/// Dense evaluation with explicit bounds checks in place of padding.
pub fn brute_hypernet(net: &HyperNet, input: &Array3<f64>) -> Vec<f64> {
    let (k_in, h, w) = input.dim();
    let k_out = net.conv_bias.len();
    let mut pooled = vec![0.0; k_out];
    for o in 0..k_out {
        let mut sum = 0.0;
        for y in 0..h {
            for x in 0..w {
                let mut pre = net.conv_bias[o];
                for c in 0..k_in {
                    for dy in 0..3 {
                        for dx in 0..3 {
                            let iy = y as i64 + dy as i64 - 1;
                            let ix = x as i64 + dx as i64 - 1;
                            if iy < 0 || ix < 0 || iy >= h as i64 || ix >= w as i64 {
                                continue;
                            }
                            pre += net.conv_weights[[o, c, dy, dx]] * input[[c, iy as usize, ix as usize]];
                        }
                    }
                }
                sum += if pre > 0.0 { pre } else { 0.0 };
            }
        }
        pooled[o] = sum / (h * w) as f64;
    }
    let links = net.fc_bias.len();
    (0..links)
        .map(|l| {
            let mut z = net.fc_bias[l];
            for o in 0..k_out {
                z += net.fc_weights[[l, o]] * pooled[o];
            }
            1.0 / (1.0 + (-z).exp())
        })
        .collect()
}

// ---------------------------------------------------------------- simulator

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepRun {
    pub total_cycles: u64,
    /// (start, end) per task index.
    pub spans: Vec<(u64, u64)>,
    pub peak_buffer: u64,
}

struct StepResource {
    pes: u64,
    bandwidth: f64,
    buffer: Option<usize>,
    queue: Vec<usize>,
}

fn kind_rank(kind: TaskKind) -> u8 {
    match kind {
        TaskKind::FuseFilter => 0,
        TaskKind::FuseTransfer => 1,
        TaskKind::LayerCompute => 2,
    }
}

/// Repeatedly picks the lowest-key member whose member dependencies have
/// all been picked. Quadratic, and independent of the library's heap.
pub fn naive_order(graph: &TaskGraph, members: &[usize]) -> Option<Vec<usize>> {
    let set: HashSet<usize> = members.iter().copied().collect();
    let mut picked: HashSet<usize> = HashSet::new();
    let mut order = Vec::new();
    while order.len() < members.len() {
        let best = members
            .iter()
            .copied()
            .filter(|i| !picked.contains(i))
            .filter(|&i| {
                graph.tasks[i]
                    .depends_on
                    .iter()
                    .all(|d| !set.contains(d) || picked.contains(d))
            })
            .min_by_key(|&i| {
                let t = &graph.tasks[i];
                (t.modality_home == Modality::Depth, t.level, kind_rank(t.kind), i)
            })?;
        picked.insert(best);
        order.push(best);
    }
    Some(order)
}

fn step_resources(graph: &TaskGraph, arch: &ArchConfig) -> Option<Vec<StepResource>> {
    let all: Vec<usize> = (0..graph.len()).collect();
    match arch.mode {
        ArchMode::BaselineSequential => Some(vec![StepResource {
            pes: arch.pe_rows * arch.pe_cols,
            bandwidth: arch.dram_bandwidth_words_per_cycle,
            buffer: None,
            queue: naive_order(graph, &all)?,
        }]),
        ArchMode::FuseMultitasking => {
            naive_order(graph, &all)?;
            let mut out = Vec::new();
            for transfers in [false, true] {
                for (slot, m) in [Modality::Rgb, Modality::Depth].into_iter().enumerate() {
                    let members: Vec<usize> = all
                        .iter()
                        .copied()
                        .filter(|&i| {
                            let t = &graph.tasks[i];
                            t.modality_home == m && (t.kind == TaskKind::FuseTransfer) == transfers
                        })
                        .collect();
                    out.push(StepResource {
                        pes: arch.pe_rows * arch.pe_cols / 2,
                        bandwidth: if transfers {
                            arch.fuselink_bandwidth_words_per_cycle
                        } else {
                            arch.dram_bandwidth_words_per_cycle
                        },
                        buffer: transfers.then_some(slot),
                        queue: naive_order(graph, &members)?,
                    });
                }
            }
            Some(out)
        }
    }
}

/// Advances one cycle at a time. Each resource runs its queue in order; a
/// transfer needs room in its destination buffer and holds it until all of
/// its consumers have started. Returns `Err` on overflow, cycles or
/// deadlock.
pub fn step_simulate(graph: &TaskGraph, arch: &ArchConfig) -> Result<StepRun, String> {
    let resources = step_resources(graph, arch).ok_or("cycle")?;
    let cap = arch.fuselink_buffer_words;
    let split = arch.mode == ArchMode::FuseMultitasking;
    let n = graph.len();
    if split
        && graph
            .tasks
            .iter()
            .any(|t| t.kind == TaskKind::FuseTransfer && t.move_words > cap)
    {
        return Err("transfer exceeds buffer".into());
    }
    let consumers: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| graph.tasks[j].depends_on.contains(&i)).collect())
        .collect();

    let mut head = vec![0usize; resources.len()];
    let mut current: Vec<Option<usize>> = vec![None; resources.len()];
    let mut spans: Vec<Option<(u64, u64)>> = vec![None; n];
    let mut done = vec![false; n];
    let mut held: Vec<Option<usize>> = vec![None; n];
    let mut occupancy = [0u64; 2];
    let mut peak = 0;
    let mut t = 0u64;

    let release_if_free = |i: usize, spans: &Vec<Option<(u64, u64)>>, held: &mut Vec<Option<usize>>, occ: &mut [u64; 2]| {
        if let Some(b) = held[i] {
            if consumers[i].iter().all(|&c| spans[c].is_some()) {
                occ[b] -= graph.tasks[i].move_words;
                held[i] = None;
            }
        }
    };

    loop {
        for r in 0..resources.len() {
            if let Some(i) = current[r] {
                if spans[i].expect("running").1 == t {
                    done[i] = true;
                    current[r] = None;
                    release_if_free(i, &spans, &mut held, &mut occupancy);
                }
            }
        }
        loop {
            let mut started = false;
            for (r, res) in resources.iter().enumerate() {
                if current[r].is_some() || head[r] == res.queue.len() {
                    continue;
                }
                let i = res.queue[head[r]];
                let task = &graph.tasks[i];
                if task.depends_on.iter().any(|&d| !done[d]) {
                    continue;
                }
                if let Some(b) = res.buffer {
                    if occupancy[b] + task.move_words > cap {
                        continue;
                    }
                    occupancy[b] += task.move_words;
                    peak = peak.max(occupancy[b]);
                    held[i] = Some(b);
                }
                let compute = (task.macs + res.pes - 1) / res.pes;
                let movement = if task.move_words == 0 {
                    0
                } else {
                    (task.move_words as f64 / res.bandwidth).ceil() as u64
                };
                let end = t + arch.task_setup_cycles + compute + movement;
                spans[i] = Some((t, end));
                head[r] += 1;
                started = true;
                for &d in &task.depends_on {
                    release_if_free(d, &spans, &mut held, &mut occupancy);
                }
                if end == t {
                    done[i] = true;
                    release_if_free(i, &spans, &mut held, &mut occupancy);
                } else {
                    current[r] = Some(i);
                }
            }
            if !started {
                break;
            }
        }
        if done.iter().all(|&d| d) {
            break;
        }
        if current.iter().all(Option::is_none) {
            return Err(format!("deadlock at cycle {t}"));
        }
        t += 1;
    }
    let spans: Vec<(u64, u64)> = spans.into_iter().map(|s| s.expect("all ran")).collect();
    Ok(StepRun {
        total_cycles: spans.iter().map(|s| s.1).max().unwrap_or(0),
        spans,
        peak_buffer: peak,
    })
}

// ---------------------------------------------------------------- generators

pub fn conv(id: &str, cin: u64, cout: u64, hw: (u64, u64), k: (u64, u64), stride: u64, padding: u64) -> LayerSpec {
    LayerSpec {
        id: id.to_string(),
        kind: LayerKind::Conv,
        in_channels: cin,
        out_channels: cout,
        in_height: hw.0,
        in_width: hw.1,
        kernel_h: k.0,
        kernel_w: k.1,
        stride,
        padding,
    }
}

/// A valid layer with every dimension at most 8.
pub fn random_layer(rng: &mut ChaCha8Rng, id: &str) -> LayerSpec {
    let cin = rng.gen_range(1..=8);
    let h = rng.gen_range(1..=8);
    let w = rng.gen_range(1..=8);
    match rng.gen_range(0..10) {
        0 => LayerSpec {
            kind: LayerKind::Fc,
            ..conv(id, cin, rng.gen_range(1..=8), (h, w), (1, 1), 1, 0)
        },
        1 => LayerSpec {
            kind: LayerKind::Pool,
            ..conv(id, cin, cin, (h.max(2), w.max(2)), (2, 2), 2, 0)
        },
        2 => LayerSpec {
            kind: LayerKind::Upsample,
            ..conv(id, cin, cin, (h, w), (1, 1), 1, 0)
        },
        _ => {
            let padding = rng.gen_range(0..=2);
            let kh = rng.gen_range(1..=(h + 2 * padding).min(8));
            let kw = rng.gen_range(1..=(w + 2 * padding).min(8));
            conv(id, cin, rng.gen_range(1..=8), (h, w), (kh, kw), rng.gen_range(1..=3), padding)
        }
    }
}

fn random_net(rng: &mut ChaCha8Rng, m: Modality, blocks: usize, hw: (u64, u64)) -> NetworkSpec {
    let mut channels = rng.gen_range(1..=8);
    let mut out = Vec::new();
    for b in 0..blocks {
        let mut block = Vec::new();
        for l in 0..rng.gen_range(1..=2) {
            let next = rng.gen_range(1..=8);
            block.push(conv(&format!("{m}_b{b}_{l}"), channels, next, hw, (3, 3), 1, 1));
            channels = next;
        }
        out.push(block);
    }
    NetworkSpec { modality: m, blocks: out }
}

/// Two same-depth conv stacks with every dimension at most 8.
pub fn random_dual(rng: &mut ChaCha8Rng, blocks: usize) -> DualNetwork {
    let hw = (rng.gen_range(1..=8), rng.gen_range(1..=8));
    let rgb = random_net(rng, Modality::Rgb, blocks, hw);
    let depth = random_net(rng, Modality::Depth, blocks, hw);
    DualNetwork::new(rgb, depth).expect("generated networks are valid")
}

/// Every link with distance at least 1, in both directions.
pub fn all_links(nets: &DualNetwork, kernel: (u64, u64)) -> Vec<FuseLink> {
    let b = nets.block_count();
    let mut out = Vec::new();
    for (src, dst) in [(Modality::Rgb, Modality::Depth), (Modality::Depth, Modality::Rgb)] {
        for a in 0..b {
            for p in a + 1..b {
                out.push(make_link(EndpointRef::new(src, a), EndpointRef::new(dst, p), nets, kernel).unwrap());
            }
        }
    }
    out
}

/// A random subset of [`all_links`] with random kernels up to `max_kernel`.
pub fn random_deployment(rng: &mut ChaCha8Rng, nets: &DualNetwork, max_kernel: u64) -> Deployment {
    let mut links = Vec::new();
    for l in all_links(nets, (1, 1)) {
        if rng.gen_bool(0.6) {
            let k = (rng.gen_range(1..=max_kernel), rng.gen_range(1..=max_kernel));
            links.push(make_link(l.active.as_ref(), l.passive.as_ref(), nets, k).unwrap());
        }
    }
    Deployment::new("random", links)
}

/// Every deployment of the two-block preset: each subset of its two links,
/// with a few kernel shapes.
pub fn tiny2_deployments(nets: &DualNetwork) -> Vec<Deployment> {
    let mut out = vec![Deployment::empty("empty")];
    for kernel in [(1, 1), (3, 3), (1, 3)] {
        let links = all_links(nets, kernel);
        assert_eq!(links.len(), 2);
        for mask in 1..4u32 {
            let chosen = links
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, l)| l.clone())
                .collect();
            out.push(Deployment::new(format!("m{mask}k{}x{}", kernel.0, kernel.1), chosen));
        }
    }
    out
}

/// A small architecture with randomized rates, so movement and setup terms
/// are exercised at different magnitudes.
pub fn random_arch(rng: &mut ChaCha8Rng, mode: ArchMode) -> ArchConfig {
    ArchConfig {
        mode,
        pe_rows: rng.gen_range(1..=4),
        pe_cols: 2 * rng.gen_range(1..=4),
        dram_bandwidth_words_per_cycle: [1.0, 2.5, 8.0, 64.0][rng.gen_range(0..4)],
        fuselink_bandwidth_words_per_cycle: [1.0, 4.0, 32.0][rng.gen_range(0..3)],
        task_setup_cycles: rng.gen_range(0..=16),
        fuselink_buffer_words: [256, 1024, 1 << 20][rng.gen_range(0..3)],
        ..ArchConfig::default()
    }
}
