//! Exact event-driven simulation of GEDF-H, NP-GEDF-H and plain GEDF.
//!
//! The engine jumps between decision points (releases and completions).
//! Between two decision points the processor assignment is constant, so the
//! trace is a list of segments and every completion time is computed exactly
//! as `remaining / speed`.

mod arrivals;
mod assign;
mod jsonl;
mod stats;

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{validate_task_system, Platform, ProcId, TaskId, TaskSystem};
use crate::rational::Rational;

pub use arrivals::ArrivalSource;
pub use assign::{gedfh_assign, np_dispatch, plain_assign, Candidate, NoLegalAssignment, NpDecision};
pub use jsonl::{read_trace_jsonl, write_trace_jsonl, TraceParseError};
pub use stats::{migration_count, response_times, TaskResponse};

/// The `index`-th job (from 1) of task `task`. Written `T<task>.<index>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct JobRef {
    pub task: TaskId,
    pub index: u64,
}

impl fmt::Display for JobRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}.{}", self.task, self.index)
    }
}

impl FromStr for JobRef {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("bad job reference `{s}` (expected T<task>.<index>)");
        let rest = s.strip_prefix('T').ok_or_else(bad)?;
        let (t, i) = rest.split_once('.').ok_or_else(bad)?;
        Ok(JobRef {
            task: t.parse().map_err(|_| bad())?,
            index: i.parse().map_err(|_| bad())?,
        })
    }
}

impl Serialize for JobRef {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for JobRef {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Job per processor slot (`ProcId - 1`); `None` is idle.
pub type Assignment = Vec<Option<JobRef>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selector {
    ArbitraryLowestId,
    FastestFirst,
    AdversarialSlowForHeavy,
}

impl FromStr for Selector {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "arbitrary-lowest-id" => Ok(Selector::ArbitraryLowestId),
            "fastest-first" => Ok(Selector::FastestFirst),
            "adversarial-slow-for-heavy" => Ok(Selector::AdversarialSlowForHeavy),
            _ => Err(format!("unknown selector `{s}`")),
        }
    }
}

/// Scheduling policy. Only plain GEDF takes a processor selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    GedfHPreemptive,
    GedfHNonpreemptive,
    GedfPlain(Selector),
}

impl Policy {
    pub fn is_gedf_h(&self) -> bool {
        !matches!(self, Policy::GedfPlain(_))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Policy::GedfHPreemptive => "gedf-h-preemptive",
            Policy::GedfHNonpreemptive => "gedf-h-nonpreemptive",
            Policy::GedfPlain(_) => "gedf-plain",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Completion,
    Deadline,
    Release,
    Preemption,
    Migration,
    BlockStart,
    BlockEnd,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Completion => "completion",
            EventKind::Deadline => "deadline",
            EventKind::Release => "release",
            EventKind::Preemption => "preemption",
            EventKind::Migration => "migration",
            EventKind::BlockStart => "block-start",
            EventKind::BlockEnd => "block-end",
        }
    }
}

/// `procs` is `[from, to]` for migrations, `[from]` for preemptions and
/// `[proc]` for completions; empty otherwise.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub time: Rational,
    pub kind: EventKind,
    pub job: JobRef,
    pub procs: Vec<ProcId>,
}

/// `[start, end)` with a constant processor assignment.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: Rational,
    pub end: Rational,
    pub procs: Assignment,
}

impl Segment {
    pub fn length(&self) -> Rational {
        &self.end - &self.start
    }

    pub fn proc_of(&self, job: JobRef) -> Option<ProcId> {
        self.procs.iter().position(|x| *x == Some(job)).map(|p| p + 1)
    }
}

/// Everything known about one released job at the end of a run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobRecord {
    pub job: JobRef,
    pub release: Rational,
    pub deadline: Rational,
    pub workload: Rational,
    pub completed_work: Rational,
    /// `None` if the job was still unfinished at the horizon.
    pub completion: Option<Rational>,
}

impl JobRecord {
    pub fn period(&self) -> Rational {
        &self.deadline - &self.release
    }

    pub fn utilization(&self) -> Rational {
        &self.workload / self.period()
    }

    pub fn response_time(&self) -> Option<Rational> {
        self.completion.as_ref().map(|f| f - &self.release)
    }
}

/// The complete record of one simulation run over `[0, horizon)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleTrace {
    /// Speed of each processor, indexed by `ProcId - 1`.
    pub speeds: Vec<Rational>,
    pub horizon: Rational,
    pub segments: Vec<Segment>,
    pub events: Vec<TraceEvent>,
    /// Sorted by `(task, index)`.
    pub jobs: Vec<JobRecord>,
}

impl ScheduleTrace {
    pub fn processor_count(&self) -> usize {
        self.speeds.len()
    }

    pub fn job(&self, job: JobRef) -> Option<&JobRecord> {
        self.jobs
            .binary_search_by_key(&job, |r| r.job)
            .ok()
            .map(|i| &self.jobs[i])
    }

    /// Segment boundaries: every segment start plus the horizon.
    pub fn boundaries(&self) -> Vec<Rational> {
        let mut b: Vec<Rational> = self.segments.iter().map(|s| s.start.clone()).collect();
        b.push(self.horizon.clone());
        b
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("horizon must be positive")]
    NonPositiveHorizon,
    #[error("release {index} of task {task} violates the minimum separation")]
    MalformedArrivals { task: TaskId, index: u64 },
    #[error("unknown task {0}")]
    UnknownTask(TaskId),
    #[error("task system rejected by the feasibility gate: {0}")]
    Infeasible(String),
    #[error("no legal GEDF-H assignment for {job} at t = {time}")]
    NoLegalAssignment { time: Rational, job: JobRef },
}

struct JobState {
    release: Rational,
    deadline: Rational,
    workload: Rational,
    done: Rational,
    completion: Option<Rational>,
}

struct Engine<'a> {
    tasks: &'a TaskSystem,
    speeds: Vec<Rational>,
    policy: Policy,
    horizon: Rational,
    streams: Vec<arrivals::ReleaseStream>,
    /// Per task (by position): every job released so far, index - 1.
    jobs: Vec<Vec<JobState>>,
    /// Per task: indices (from 1) of released, unfinished jobs.
    queues: Vec<VecDeque<u64>>,
    /// `(deadline, task id, task position)` of each task's oldest unfinished job.
    enabled: BTreeSet<(Rational, TaskId, usize)>,
    releases: BinaryHeap<Reverse<(Rational, usize)>>,
    segments: Vec<Segment>,
    events: Vec<TraceEvent>,
    blocked: BTreeSet<JobRef>,
}

impl<'a> Engine<'a> {
    fn pos(&self, task: TaskId) -> usize {
        self.tasks
            .tasks()
            .binary_search_by_key(&task, |t| t.id())
            .expect("job of a known task")
    }

    fn state(&self, job: JobRef) -> &JobState {
        &self.jobs[self.pos(job.task)][job.index as usize - 1]
    }

    fn schedule_next_release(&mut self, pos: usize) {
        if let Some(r) = self.streams[pos].next_release() {
            if r < self.horizon {
                self.releases.push(Reverse((r, pos)));
            }
        }
    }

    fn release_due(&mut self, t: &Rational) {
        while let Some(Reverse((r, _))) = self.releases.peek() {
            if r > t {
                break;
            }
            let Reverse((r, pos)) = self.releases.pop().expect("peeked");
            let task = &self.tasks.tasks()[pos];
            let deadline = &r + task.period();
            let index = self.jobs[pos].len() as u64 + 1;
            let job = JobRef {
                task: task.id(),
                index,
            };
            self.jobs[pos].push(JobState {
                release: r.clone(),
                deadline: deadline.clone(),
                workload: task.exec().clone(),
                done: Rational::zero(),
                completion: None,
            });
            if self.queues[pos].is_empty() {
                self.enabled.insert((deadline.clone(), task.id(), pos));
            }
            self.queues[pos].push_back(index);
            self.events.push(TraceEvent {
                time: r,
                kind: EventKind::Release,
                job,
                procs: vec![],
            });
            if deadline < self.horizon {
                self.events.push(TraceEvent {
                    time: deadline,
                    kind: EventKind::Deadline,
                    job,
                    procs: vec![],
                });
            }
            self.schedule_next_release(pos);
        }
    }

    fn enabled_candidates(&self) -> Vec<Candidate<'a>> {
        let tasks: &'a TaskSystem = self.tasks;
        self.enabled
            .iter()
            .map(|(_, id, pos)| Candidate {
                job: JobRef {
                    task: *id,
                    index: *self.queues[*pos].front().expect("enabled task has a job"),
                },
                utilization: tasks.tasks()[*pos].utilization(),
            })
            .collect()
    }

    fn decide(&self, t: &Rational, prev: &Assignment) -> Result<Assignment, SimError> {
        let enabled = self.enabled_candidates();
        match self.policy {
            Policy::GedfHPreemptive => gedfh_assign(&enabled, &self.speeds, prev).map_err(|e| {
                SimError::NoLegalAssignment {
                    time: t.clone(),
                    job: e.job,
                }
            }),
            Policy::GedfHNonpreemptive => {
                // Every job in `prev` that has not completed is still running.
                let running: Assignment = prev
                    .iter()
                    .map(|x| x.filter(|j| self.state(*j).completion.is_none()))
                    .collect();
                Ok(np_dispatch(&enabled, &self.speeds, &running).assignment)
            }
            Policy::GedfPlain(sel) => Ok(plain_assign(&enabled, &self.speeds, sel)),
        }
    }

    fn record_transitions(&mut self, t: &Rational, prev: &Assignment, next: &Assignment) {
        for (p, slot) in prev.iter().enumerate() {
            let Some(job) = slot else { continue };
            if self.state(*job).completion.is_some() {
                continue;
            }
            match next.iter().position(|x| x == slot) {
                Some(q) if q != p => self.events.push(TraceEvent {
                    time: t.clone(),
                    kind: EventKind::Migration,
                    job: *job,
                    procs: vec![p + 1, q + 1],
                }),
                Some(_) => {}
                None => self.events.push(TraceEvent {
                    time: t.clone(),
                    kind: EventKind::Preemption,
                    job: *job,
                    procs: vec![p + 1],
                }),
            }
        }
    }

    /// Enabled jobs that wait while a lower-priority job executes.
    fn record_blocking(&mut self, t: &Rational, assignment: &Assignment) {
        let running: BTreeSet<JobRef> = assignment.iter().flatten().copied().collect();
        let lowest_running = self
            .enabled
            .iter()
            .rev()
            .find(|(_, id, pos)| {
                let index = *self.queues[*pos].front().expect("enabled task has a job");
                running.contains(&JobRef { task: *id, index })
            })
            .cloned();
        let mut now = BTreeSet::new();
        if let Some(lowest) = lowest_running {
            for (_, id, pos) in self.enabled.range(..lowest) {
                let job = JobRef {
                    task: *id,
                    index: *self.queues[*pos].front().expect("enabled task has a job"),
                };
                if !running.contains(&job) {
                    now.insert(job);
                }
            }
        }
        for job in self.blocked.difference(&now) {
            self.events.push(TraceEvent {
                time: t.clone(),
                kind: EventKind::BlockEnd,
                job: *job,
                procs: vec![],
            });
        }
        for job in now.difference(&self.blocked) {
            self.events.push(TraceEvent {
                time: t.clone(),
                kind: EventKind::BlockStart,
                job: *job,
                procs: vec![],
            });
        }
        self.blocked = now;
    }

    fn complete(&mut self, t: &Rational, job: JobRef, proc_index: usize) {
        let pos = self.pos(job.task);
        let st = &mut self.jobs[pos][job.index as usize - 1];
        st.done = st.workload.clone();
        st.completion = Some(t.clone());
        let removed = self.queues[pos].pop_front();
        debug_assert_eq!(removed, Some(job.index));
        self.enabled.remove(&(st.deadline.clone(), job.task, pos));
        if let Some(&next) = self.queues[pos].front() {
            let d = self.jobs[pos][next as usize - 1].deadline.clone();
            self.enabled.insert((d, job.task, pos));
        }
        self.events.push(TraceEvent {
            time: t.clone(),
            kind: EventKind::Completion,
            job,
            procs: vec![proc_index + 1],
        });
    }

    fn run(mut self) -> Result<ScheduleTrace, SimError> {
        let m = self.speeds.len();
        for pos in 0..self.tasks.len() {
            self.schedule_next_release(pos);
        }
        let mut t = Rational::zero();
        self.release_due(&t);
        let mut prev: Assignment = vec![None; m];
        loop {
            let assignment = self.decide(&t, &prev)?;
            self.record_transitions(&t, &prev, &assignment);
            if self.policy == Policy::GedfHNonpreemptive {
                self.record_blocking(&t, &assignment);
            }

            let mut next = self.horizon.clone();
            if let Some(Reverse((r, _))) = self.releases.peek() {
                if r < &next {
                    next = r.clone();
                }
            }
            let mut finish: Vec<Option<Rational>> = vec![None; m];
            for (p, slot) in assignment.iter().enumerate() {
                if let Some(job) = slot {
                    let st = self.state(*job);
                    let f = &t + (&st.workload - &st.done) / &self.speeds[p];
                    if f < next {
                        next = f.clone();
                    }
                    finish[p] = Some(f);
                }
            }
            debug_assert!(next > t);
            self.segments.push(Segment {
                start: t.clone(),
                end: next.clone(),
                procs: assignment.clone(),
            });

            let dt = &next - &t;
            let mut completed = Vec::new();
            for (p, slot) in assignment.iter().enumerate() {
                if let Some(job) = slot {
                    if finish[p].as_ref() == Some(&next) {
                        completed.push((*job, p));
                    } else {
                        let pos = self.pos(job.task);
                        let work = &self.speeds[p] * &dt;
                        self.jobs[pos][job.index as usize - 1].done += work;
                    }
                }
            }
            t = next;
            for (job, p) in completed {
                self.complete(&t, job, p);
            }
            if t == self.horizon {
                break;
            }
            self.release_due(&t);
            prev = assignment;
        }
        Ok(self.finish())
    }

    fn finish(mut self) -> ScheduleTrace {
        let mut jobs = Vec::new();
        for (pos, states) in self.jobs.into_iter().enumerate() {
            let task = self.tasks.tasks()[pos].id();
            for (i, st) in states.into_iter().enumerate() {
                jobs.push(JobRecord {
                    job: JobRef {
                        task,
                        index: i as u64 + 1,
                    },
                    release: st.release,
                    deadline: st.deadline,
                    workload: st.workload,
                    completed_work: st.done,
                    completion: st.completion,
                });
            }
        }
        self.events
            .sort_by(|a, b| a.time.cmp(&b.time).then(a.kind.cmp(&b.kind)));
        ScheduleTrace {
            speeds: self.speeds,
            horizon: self.horizon,
            segments: self.segments,
            events: self.events,
            jobs,
        }
    }
}

/// Runs `system` on `platform` over `[0, horizon)`.
///
/// GEDF-H policies require a system accepted by the feasibility gate; plain
/// GEDF runs anything, so infeasible counterexamples can be reproduced.
pub fn simulate(
    system: &TaskSystem,
    platform: &Platform,
    arrivals: &ArrivalSource,
    policy: Policy,
    horizon: &Rational,
) -> Result<ScheduleTrace, SimError> {
    if !horizon.is_positive() {
        return Err(SimError::NonPositiveHorizon);
    }
    if policy.is_gedf_h() {
        let report = validate_task_system(system, platform);
        if !report.accepted {
            return Err(SimError::Infeasible(report.failures().join("; ")));
        }
    }
    let streams = arrivals.streams(system)?;
    let n = system.len();
    let engine = Engine {
        tasks: system,
        speeds: platform.speeds(),
        policy,
        horizon: horizon.clone(),
        streams,
        jobs: (0..n).map(|_| Vec::new()).collect(),
        queues: vec![VecDeque::new(); n],
        enabled: BTreeSet::new(),
        releases: BinaryHeap::new(),
        segments: Vec::new(),
        events: Vec::new(),
        blocked: BTreeSet::new(),
    };
    engine.run()
}
