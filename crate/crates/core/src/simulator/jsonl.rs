//! JSON-lines trace export and replay.
//!
//! One line per segment, `{"t0":..,"t1":..,"proc":[{"id":1,"job":"T4.1"},..]}`
//! with `"job":null` for idle processors, and one line per event,
//! `{"t":..,"kind":"migration","job":"T4.1","procs":[2,1]}`. Events are
//! written before the segment that starts at their time.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ProcId, SystemFile};
use crate::rational::Rational;

use super::{EventKind, JobRecord, JobRef, ScheduleTrace, Segment, TraceEvent};

#[derive(Serialize, Deserialize)]
struct ProcEntry {
    id: ProcId,
    job: Option<JobRef>,
}

#[derive(Serialize, Deserialize)]
struct SegmentLine {
    t0: Rational,
    t1: Rational,
    proc: Vec<ProcEntry>,
}

#[derive(Serialize, Deserialize)]
struct EventLine {
    t: Rational,
    kind: EventKind,
    job: JobRef,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    procs: Vec<ProcId>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Line {
    Segment(SegmentLine),
    Event(EventLine),
}

#[derive(Debug, Error)]
pub enum TraceParseError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("trace has no segments")]
    Empty,
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn event_line(e: &TraceEvent) -> String {
    serde_json::to_string(&EventLine {
        t: e.time.clone(),
        kind: e.kind,
        job: e.job,
        procs: e.procs.clone(),
    })
    .expect("serializable")
}

fn segment_line(s: &Segment) -> String {
    serde_json::to_string(&SegmentLine {
        t0: s.start.clone(),
        t1: s.end.clone(),
        proc: s
            .procs
            .iter()
            .enumerate()
            .map(|(p, job)| ProcEntry { id: p + 1, job: *job })
            .collect(),
    })
    .expect("serializable")
}

pub fn write_trace_jsonl<W: Write>(trace: &ScheduleTrace, mut out: W) -> io::Result<()> {
    let mut events = trace.events.iter().peekable();
    for seg in &trace.segments {
        while let Some(e) = events.next_if(|e| e.time <= seg.start) {
            writeln!(out, "{}", event_line(e))?;
        }
        writeln!(out, "{}", segment_line(seg))?;
    }
    for e in events {
        writeln!(out, "{}", event_line(e))?;
    }
    Ok(())
}

/// Rebuilds a trace from its JSON-lines form. Job parameters come from the
/// task system; completed work is recomputed from the segments.
pub fn read_trace_jsonl<R: BufRead>(input: R, system: &SystemFile) -> Result<ScheduleTrace, TraceParseError> {
    let speeds = system.platform.speeds();
    let mut segments: Vec<Segment> = Vec::new();
    let mut events = Vec::new();
    let mut jobs: BTreeMap<JobRef, JobRecord> = BTreeMap::new();
    let mut completions: Vec<(usize, JobRef, Rational)> = Vec::new();

    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let invalid = |message: String| TraceParseError::Invalid {
            line: line_no,
            message,
        };
        let parsed: Line = serde_json::from_str(&line).map_err(|source| TraceParseError::Json {
            line: line_no,
            source,
        })?;
        match parsed {
            Line::Segment(s) => {
                if s.t0 >= s.t1 {
                    return Err(invalid("segment must have t0 < t1".into()));
                }
                let expected = segments.last().map(|p| p.end.clone()).unwrap_or_else(Rational::zero);
                if s.t0 != expected {
                    return Err(invalid(format!("segment starts at {} but previous ended at {expected}", s.t0)));
                }
                let mut procs = vec![None; speeds.len()];
                for entry in s.proc {
                    if entry.id == 0 || entry.id > speeds.len() {
                        return Err(invalid(format!("unknown processor {}", entry.id)));
                    }
                    procs[entry.id - 1] = entry.job;
                }
                segments.push(Segment {
                    start: s.t0,
                    end: s.t1,
                    procs,
                });
            }
            Line::Event(e) => {
                match e.kind {
                    EventKind::Release => {
                        let task = system
                            .tasks
                            .get(e.job.task)
                            .ok_or_else(|| invalid(format!("unknown task {}", e.job.task)))?;
                        jobs.insert(
                            e.job,
                            JobRecord {
                                job: e.job,
                                release: e.t.clone(),
                                deadline: &e.t + task.period(),
                                workload: task.exec().clone(),
                                completed_work: Rational::zero(),
                                completion: None,
                            },
                        );
                    }
                    EventKind::Completion => completions.push((line_no, e.job, e.t.clone())),
                    _ => {}
                }
                events.push(TraceEvent {
                    time: e.t,
                    kind: e.kind,
                    job: e.job,
                    procs: e.procs,
                });
            }
        }
    }
    let horizon = segments.last().ok_or(TraceParseError::Empty)?.end.clone();
    for (line, job, t) in completions {
        let rec = jobs.get_mut(&job).ok_or_else(|| TraceParseError::Invalid {
            line,
            message: format!("completion of unreleased job {job}"),
        })?;
        rec.completion = Some(t);
    }
    for seg in &segments {
        let len = seg.length();
        for (p, slot) in seg.procs.iter().enumerate() {
            if let Some(job) = slot {
                let rec = jobs.get_mut(job).ok_or_else(|| TraceParseError::Invalid {
                    line: 0,
                    message: format!("segment at {} runs unreleased job {job}", seg.start),
                })?;
                rec.completed_work += &speeds[p] * &len;
            }
        }
    }
    events.sort_by(|a, b| a.time.cmp(&b.time).then(a.kind.cmp(&b.kind)));
    Ok(ScheduleTrace {
        speeds,
        horizon,
        segments,
        events,
        jobs: jobs.into_values().collect(),
    })
}
