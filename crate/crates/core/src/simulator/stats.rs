use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::TaskId;
use crate::rational::Rational;

use super::ScheduleTrace;

/// Response times of one task's completed jobs. Jobs still running at the
/// horizon are only counted in `censored`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskResponse {
    pub max: Option<Rational>,
    pub mean: Option<Rational>,
    /// `(job index, response time)` per completed job.
    pub jobs: Vec<(u64, Rational)>,
    pub censored: usize,
}

pub fn response_times(trace: &ScheduleTrace) -> BTreeMap<TaskId, TaskResponse> {
    let mut out: BTreeMap<TaskId, TaskResponse> = BTreeMap::new();
    for rec in &trace.jobs {
        let entry = out.entry(rec.job.task).or_default();
        match rec.response_time() {
            Some(r) => entry.jobs.push((rec.job.index, r)),
            None => entry.censored += 1,
        }
    }
    for entry in out.values_mut() {
        entry.max = entry.jobs.iter().map(|(_, r)| r).max().cloned();
        if !entry.jobs.is_empty() {
            let total: Rational = entry.jobs.iter().map(|(_, r)| r).sum();
            entry.mean = Some(total / Rational::from(entry.jobs.len()));
        }
    }
    out
}

/// Per task, how many times one of its jobs kept running across a segment
/// boundary but on a different processor.
pub fn migration_count(trace: &ScheduleTrace) -> BTreeMap<TaskId, u64> {
    let mut out: BTreeMap<TaskId, u64> = trace.jobs.iter().map(|r| (r.job.task, 0)).collect();
    for w in trace.segments.windows(2) {
        for (p, slot) in w[0].procs.iter().enumerate() {
            let Some(job) = slot else { continue };
            if let Some(q) = w[1].procs.iter().position(|x| x == slot) {
                if q != p {
                    *out.entry(job.task).or_default() += 1;
                }
            }
        }
    }
    out
}
