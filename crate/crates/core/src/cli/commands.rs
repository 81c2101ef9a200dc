use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::config::{read_text, ExperimentConfig, HypernetConfig};
use super::{Args, CliError, ModeArg};
use crate::costmodel::{deployment_cost, storage_footprint};
use crate::fuselink::{enumerate_deployments, rank_deployments, validate_deployment, Deployment};
use crate::hypergate::{check_ascending, prune, synthetic_input, FrameDoc, GateError, HyperNet, Threshold};
use crate::netspec::{DualNetwork, Modality};
use crate::simulator::{
    build_taskgraph, compare as compare_results, simulate as run_sim, simulate_traced, write_trace_csv, ArchMode, SimError,
    SimResult,
};

fn emit(stdout: &mut dyn Write, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(stdout, "{text}").map_err(|e| CliError::Io(e.to_string()))
}

fn sim_err(e: SimError) -> CliError {
    match e {
        SimError::InvalidDeployment(report) => CliError::Violations {
            message: "deployment is invalid for this network".into(),
            report,
        },
        other => CliError::domain(other.to_string()),
    }
}

fn gate_err(e: GateError) -> CliError {
    match e {
        GateError::Io(_) | GateError::Format(_) => CliError::Config(format!("hypernetwork: {e}")),
        other => CliError::domain(format!("hypernetwork: {other}")),
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn create_file(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn ranked(cfg: &ExperimentConfig, nets: &DualNetwork) -> Result<Vec<(Deployment, u64)>, CliError> {
    let policy = cfg
        .policy()
        .ok_or_else(|| CliError::Config("deployment.policy is required for enumeration".into()))?;
    let deps = enumerate_deployments(nets, policy).map_err(|e| CliError::domain(e.to_string()))?;
    rank_deployments(deps, nets).map_err(|e| CliError::domain(e.to_string()))
}

/// The deployment file if one is given, else the top-ranked enumerated
/// deployment, else no links at all.
fn select_deployment(cfg: &ExperimentConfig, nets: &DualNetwork) -> Result<Deployment, CliError> {
    let has_path = cfg.deployment.as_ref().is_some_and(|d| d.path.is_some());
    if has_path || cfg.policy().is_none() {
        return cfg.load_deployment(nets);
    }
    ranked(cfg, nets)?
        .into_iter()
        .next()
        .map(|(dep, _)| dep)
        .ok_or_else(|| CliError::domain("policy yields no deployments"))
}

pub fn validate(cfg: &ExperimentConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    let nets = cfg.load_network()?;
    let mut checked = Vec::new();
    if cfg.policy().is_some() {
        for (dep, score) in ranked(cfg, &nets)? {
            checked.push(json!({ "name": dep.name, "links": dep.links.len(), "score": score }));
        }
    }
    let dep = cfg.load_deployment(&nets)?;
    let report = validate_deployment(&dep, &nets);
    let doc = json!({
        "ok": report.is_clean(),
        "network": {
            "levels": nets.block_count(),
            "rgb_layers": nets.get(Modality::Rgb).layers().count(),
            "depth_layers": nets.get(Modality::Depth).layers().count(),
        },
        "deployment": { "name": dep.name, "links": dep.links.len() },
        "enumerated": checked,
        "violations": report.violations,
    });
    emit(stdout, &doc)?;
    if report.is_clean() {
        Ok(())
    } else {
        Err(CliError::domain("deployment has violations"))
    }
}

pub fn enumerate(cfg: &ExperimentConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    let nets = cfg.load_network()?;
    let ranked = ranked(cfg, &nets)?;
    if ranked.is_empty() {
        return Err(CliError::domain("policy yields no deployments"));
    }
    let dir = cfg.output_dir();
    create_dir(&dir)?;
    let index_path = dir.join("index.csv");
    let mut index = csv::Writer::from_writer(create_file(&index_path)?);
    let io = |e: csv::Error| CliError::Io(format!("{}: {e}", index_path.display()));
    index.write_record(["rank", "name", "score", "links", "file"]).map_err(io)?;
    for (rank, (dep, score)) in ranked.iter().enumerate() {
        let file = format!("{}.json", dep.name);
        write_file(&dir.join(&file), &dep.to_json())?;
        index
            .write_record([
                (rank + 1).to_string(),
                dep.name.clone(),
                score.to_string(),
                dep.links.len().to_string(),
                file,
            ])
            .map_err(io)?;
    }
    index.flush().map_err(|e| CliError::Io(e.to_string()))?;
    info!("wrote {} deployments to {}", ranked.len(), dir.display());
    let top: Vec<_> = ranked
        .iter()
        .take(10)
        .map(|(d, s)| json!({ "name": d.name, "score": s, "links": d.links.len() }))
        .collect();
    emit(
        stdout,
        &json!({ "count": ranked.len(), "index": index_path, "top": top }),
    )
}

pub fn simulate(cfg: &ExperimentConfig, args: &Args, stdout: &mut dyn Write) -> Result<(), CliError> {
    let nets = cfg.load_network()?;
    let dep = select_deployment(cfg, &nets)?;
    let graph = build_taskgraph(&nets, &dep).map_err(sim_err)?;
    let modes = args.arch_mode.unwrap_or(ModeArg::Both).modes();
    let dir = cfg.output_dir();
    create_dir(&dir)?;
    let mut results = Vec::new();
    let mut files: Vec<PathBuf> = Vec::new();
    for mode in modes {
        let arch = cfg.arch.with_mode(mode);
        info!("simulating '{}' ({} tasks) in {} mode", dep.name, graph.len(), mode.as_str());
        let (result, trace) = simulate_traced(&graph, &arch).map_err(sim_err)?;
        let path = dir.join(format!("{}.json", mode.as_str()));
        let text = serde_json::to_string_pretty(&result).map_err(|e| CliError::Io(e.to_string()))?;
        write_file(&path, &text)?;
        files.push(path);
        if args.trace {
            let path = dir.join(format!("trace_{}.csv", mode.as_str()));
            write_trace_csv(create_file(&path)?, &trace)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            files.push(path);
        }
        let storage = storage_footprint(&arch).map_err(|e| CliError::domain(e.to_string()))?;
        results.push((mode, result, storage));
    }
    let labelled: Vec<(String, SimResult)> =
        results.iter().map(|(m, r, _)| (m.as_str().to_string(), r.clone())).collect();
    let comparison = if labelled.len() >= 2 {
        Some(compare_results(&labelled).map_err(sim_err)?)
    } else {
        None
    };
    let runs: Vec<_> = results
        .iter()
        .map(|(mode, result, storage)| json!({ "mode": mode, "result": result, "storage": storage }))
        .collect();
    let cost = deployment_cost(&nets, &dep).map_err(|e| CliError::domain(e.to_string()))?;
    emit(
        stdout,
        &json!({
            "deployment": { "name": dep.name, "links": dep.link_ids() },
            "cost": cost,
            "dsp_blocks": cfg.arch.dsp_blocks(),
            "runs": runs,
            "comparison": comparison,
            "files": files,
        }),
    )
}

fn load_hypernet(hn: &HypernetConfig, num_links: usize) -> Result<HyperNet, CliError> {
    match &hn.weights {
        Some(path) => {
            let file = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            HyperNet::read_from(std::io::BufReader::new(file)).map_err(gate_err)
        }
        None => HyperNet::init(hn.seed, num_links, hn.input_spec, hn.k_out).map_err(gate_err),
    }
}

fn load_frame(hn: &HypernetConfig) -> Result<ndarray::Array3<f64>, CliError> {
    match &hn.input {
        Some(path) => {
            let doc: FrameDoc = serde_json::from_str(&read_text(path)?)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            doc.into_array().map_err(gate_err)
        }
        None if hn.synthetic => Ok(synthetic_input(hn.seed, hn.input_spec)),
        None => Err(CliError::Config("hypernet.input is required when synthetic is false".into())),
    }
}

#[derive(Debug, Serialize)]
struct SweepLine {
    th: f64,
    kept_links: usize,
    total_macs: u64,
    baseline_cycles: u64,
    fuse_multitasking_cycles: u64,
    latency_ms: f64,
    delta_pct: f64,
}

pub fn sweep(cfg: &ExperimentConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    let hn = cfg
        .hypernet
        .as_ref()
        .ok_or_else(|| CliError::Config("sweep needs a hypernet section".into()))?;
    let raw = cfg
        .thresholds
        .as_ref()
        .filter(|t| !t.is_empty())
        .ok_or_else(|| CliError::Config("sweep needs a non-empty thresholds list".into()))?;
    let ths = raw
        .iter()
        .map(|&t| Threshold::new(t))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Config(e.to_string()))?;
    check_ascending(&ths).map_err(|e| CliError::Config(e.to_string()))?;

    let nets = cfg.load_network()?;
    let dep = select_deployment(cfg, &nets)?;
    let net = load_hypernet(hn, dep.links.len())?;
    let frame = load_frame(hn)?;
    let gates = net.gates(frame.view(), &dep).map_err(gate_err)?;

    let dir = cfg.output_dir();
    create_dir(&dir)?;
    write_file(&dir.join("gates.csv"), &gates.to_csv())?;
    if hn.weights.is_none() {
        net.write_to(create_file(&dir.join("hypernet.bin"))?).map_err(gate_err)?;
    }

    let baseline_arch = cfg.arch.with_mode(ArchMode::BaselineSequential);
    let split_arch = cfg.arch.with_mode(ArchMode::FuseMultitasking);
    let lines = ths
        .par_iter()
        .map(|&th| {
            let kept = prune(&dep, &gates, th)?;
            let graph = build_taskgraph(&nets, &kept)?;
            let base = run_sim(&graph, &baseline_arch)?;
            let split = run_sim(&graph, &split_arch)?;
            let delta_pct = if base.latency_ms == 0.0 {
                0.0
            } else {
                (split.latency_ms - base.latency_ms) / base.latency_ms * 100.0
            };
            Ok(SweepLine {
                th: th.value(),
                kept_links: kept.links.len(),
                total_macs: graph.total_macs(),
                baseline_cycles: base.total_cycles,
                fuse_multitasking_cycles: split.total_cycles,
                latency_ms: split.latency_ms,
                delta_pct,
            })
        })
        .collect::<Result<Vec<_>, SimError>>()
        .map_err(sim_err)?;

    let path = dir.join("sweep.csv");
    let mut out = csv::Writer::from_writer(create_file(&path)?);
    for line in &lines {
        out.serialize(line).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    out.flush().map_err(|e| CliError::Io(e.to_string()))?;
    info!("swept {} thresholds over '{}'", lines.len(), dep.name);
    emit(
        stdout,
        &json!({
            "deployment": dep.name,
            "gates": gates.link_ids.iter().zip(&gates.scores).map(|(id, s)| json!({"link_id": id, "score": s})).collect::<Vec<_>>(),
            "rows": lines,
            "sweep": path,
        }),
    )
}

pub fn compare(paths: &[PathBuf], stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut results = Vec::with_capacity(paths.len());
    for path in paths {
        let result: SimResult = serde_json::from_str(&read_text(path)?)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        results.push((label, result));
    }
    let table = compare_results(&results).map_err(sim_err)?;
    emit(stdout, &table)
}
