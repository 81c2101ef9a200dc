//! Trace replay: checks an emitted event trace against its task graph.

use std::collections::HashMap;
use std::io::{Read, Write};

use super::engine::TraceEvent;
use super::taskgraph::TaskGraph;

/// Returns every dependency, coverage or overlap violation found in `trace`.
pub fn verify_trace(graph: &TaskGraph, trace: &[TraceEvent]) -> Result<(), Vec<String>> {
    let mut problems = Vec::new();
    let mut by_id: HashMap<&str, &TraceEvent> = HashMap::new();
    for ev in trace {
        if ev.end_cycle < ev.start_cycle {
            problems.push(format!("{} ends before it starts", ev.task_id));
        }
        if by_id.insert(ev.task_id.as_str(), ev).is_some() {
            problems.push(format!("{} appears more than once", ev.task_id));
        }
    }
    for task in &graph.tasks {
        let Some(ev) = by_id.get(task.id.as_str()) else {
            problems.push(format!("{} never ran", task.id));
            continue;
        };
        if ev.kind != task.kind {
            problems.push(format!("{} has kind {:?} in trace", task.id, ev.kind));
        }
        for &d in &task.depends_on {
            let dep = &graph.tasks[d];
            if let Some(dev) = by_id.get(dep.id.as_str()) {
                if dev.end_cycle > ev.start_cycle {
                    problems.push(format!(
                        "{} started at {} before dependency {} finished at {}",
                        task.id, ev.start_cycle, dep.id, dev.end_cycle
                    ));
                }
            }
        }
    }
    if by_id.len() != graph.len() {
        problems.push(format!("trace has {} tasks, graph has {}", by_id.len(), graph.len()));
    }

    let mut per_array: HashMap<&str, Vec<&TraceEvent>> = HashMap::new();
    for ev in trace {
        per_array.entry(ev.array.as_str()).or_default().push(ev);
    }
    for (array, mut events) in per_array {
        events.sort_by_key(|e| (e.start_cycle, e.end_cycle));
        for pair in events.windows(2) {
            if pair[1].start_cycle < pair[0].end_cycle {
                problems.push(format!(
                    "{array}: {} overlaps {}",
                    pair[1].task_id, pair[0].task_id
                ));
            }
        }
    }

    if problems.is_empty() {
        Ok(())
    } else {
        Err(problems)
    }
}

/// CSV with columns `task_id,array,start_cycle,end_cycle,kind`.
pub fn write_trace_csv<W: Write>(out: W, trace: &[TraceEvent]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for ev in trace {
        w.serialize(ev)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv<R: Read>(input: R) -> csv::Result<Vec<TraceEvent>> {
    csv::Reader::from_reader(input).deserialize().collect()
}
