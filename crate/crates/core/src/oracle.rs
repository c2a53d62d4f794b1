//! The processor-share (PS) reference schedule, lag and LAG against a
//! simulated trace, busy intervals, property checks and blocking analysis.
//!
//! Everything is exact and evaluated at trace segment boundaries. A segment
//! `[s, e)` is busy for **d** when every processor runs a job of **d**
//! throughout it; an instant takes the classification of the segment that
//! starts there.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{SporadicTask, TaskId};
use crate::rational::Rational;
use crate::simulator::{JobRecord, JobRef, ScheduleTrace};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("interval start {t1} is after its end {t2}")]
    ReversedInterval { t1: Rational, t2: Rational },
    #[error("job {0} is not in the trace")]
    UnknownJob(JobRef),
    #[error("pivot deadline {deadline} is beyond the trace horizon {horizon}")]
    PivotBeyondHorizon { deadline: Rational, horizon: Rational },
}

/// Length of the overlap of `[a0, a1)` and `[b0, b1)`.
fn overlap(a0: &Rational, a1: &Rational, b0: &Rational, b1: &Rational) -> Rational {
    let lo = Rational::max_of(a0, b0);
    let hi = Rational::min_of(a1, b1);
    if hi > lo {
        hi - lo
    } else {
        Rational::zero()
    }
}

/// PS allocation to `task` over `[t1, t2)` given its release times: the
/// task runs at rate `u` while some job is between release and deadline.
pub fn ps_allocation(
    task: &SporadicTask,
    t1: &Rational,
    t2: &Rational,
    releases: &[Rational],
) -> Result<Rational, OracleError> {
    if t1 > t2 {
        return Err(OracleError::ReversedInterval {
            t1: t1.clone(),
            t2: t2.clone(),
        });
    }
    let active: Rational = releases
        .iter()
        .map(|r| overlap(r, &(r + task.period()), t1, t2))
        .sum();
    Ok(active * task.utilization())
}

/// PS allocation to a single job over `[t1, t2)`.
pub fn ps_job_allocation(job: &JobRecord, t1: &Rational, t2: &Rational) -> Rational {
    overlap(&job.release, &job.deadline, t1, t2) * job.utilization()
}

/// Work the trace gives `job` over `[t1, t2)`.
pub fn trace_allocation(trace: &ScheduleTrace, job: JobRef, t1: &Rational, t2: &Rational) -> Rational {
    let mut total = Rational::zero();
    for seg in &trace.segments {
        if &seg.start >= t2 {
            break;
        }
        if let Some(p) = seg.procs.iter().position(|x| *x == Some(job)) {
            total += overlap(&seg.start, &seg.end, t1, t2) * &trace.speeds[p];
        }
    }
    total
}

/// The job set **d** for a pivot job: every job with an earlier deadline, or
/// the same deadline and a task id no larger than the pivot's.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobSetD {
    pub pivot: JobRef,
    pub t_d: Rational,
    /// Per task, the highest job index in the set. Deadlines grow with the
    /// index, so membership is a prefix of each task's jobs.
    cutoff: BTreeMap<TaskId, u64>,
}

impl JobSetD {
    pub fn from_pivot(trace: &ScheduleTrace, pivot: JobRef) -> Result<Self, OracleError> {
        let rec = trace.job(pivot).ok_or(OracleError::UnknownJob(pivot))?;
        let t_d = rec.deadline.clone();
        let mut cutoff = BTreeMap::new();
        for r in &trace.jobs {
            if r.deadline < t_d || (r.deadline == t_d && r.job.task <= pivot.task) {
                cutoff.insert(r.job.task, r.job.index);
            }
        }
        Ok(JobSetD { pivot, t_d, cutoff })
    }

    pub fn contains(&self, job: JobRef) -> bool {
        self.cutoff.get(&job.task).is_some_and(|&c| job.index <= c)
    }

    pub fn members(&self) -> Vec<JobRef> {
        self.cutoff
            .iter()
            .flat_map(|(&task, &c)| (1..=c).map(move |index| JobRef { task, index }))
            .collect()
    }

    fn member_records<'a>(&'a self, trace: &'a ScheduleTrace) -> impl Iterator<Item = &'a JobRecord> + 'a {
        trace.jobs.iter().filter(|r| self.contains(r.job))
    }
}

/// lag of `task` at `t`: PS minus trace allocation over `[0, t)`, summed over
/// the task's jobs in `d`.
pub fn lag(trace: &ScheduleTrace, task: TaskId, t: &Rational, d: &JobSetD) -> Rational {
    let zero = Rational::zero();
    d.member_records(trace)
        .filter(|r| r.job.task == task)
        .map(|r| ps_job_allocation(r, &zero, t) - trace_allocation(trace, r.job, &zero, t))
        .sum()
}

/// LAG of `d` at `t`, accumulated job by job in a single pass over the trace.
pub fn big_lag(trace: &ScheduleTrace, d: &JobSetD, t: &Rational) -> Rational {
    let zero = Rational::zero();
    let ps: Rational = d.member_records(trace).map(|r| ps_job_allocation(r, &zero, t)).sum();
    let mut done = Rational::zero();
    for seg in &trace.segments {
        if &seg.start >= t {
            break;
        }
        let len = overlap(&seg.start, &seg.end, &zero, t);
        for (p, slot) in seg.procs.iter().enumerate() {
            if slot.is_some_and(|j| d.contains(j)) {
                done += &len * &trace.speeds[p];
            }
        }
    }
    ps - done
}

fn segment_busy(d: &JobSetD, procs: &[Option<JobRef>]) -> bool {
    !procs.is_empty() && procs.iter().all(|s| s.is_some_and(|j| d.contains(j)))
}

/// Maximal busy intervals for `d` within `[0, min(t_d, horizon))`, in time
/// order.
pub fn busy_intervals(trace: &ScheduleTrace, d: &JobSetD) -> Vec<(Rational, Rational)> {
    let mut out: Vec<(Rational, Rational)> = Vec::new();
    for seg in &trace.segments {
        if seg.start >= d.t_d {
            break;
        }
        if !segment_busy(d, &seg.procs) {
            continue;
        }
        let end = Rational::min_of(&seg.end, &d.t_d).clone();
        match out.last_mut() {
            Some(last) if last.1 == seg.start => last.1 = end,
            _ => out.push((seg.start.clone(), end)),
        }
    }
    out
}

/// LAG of `d` at each segment boundary in `[0, t_d]`, with whether the
/// segment starting at that boundary is busy (`None` for the last point).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LagPoint {
    pub time: Rational,
    pub lag: Rational,
    pub busy_after: Option<bool>,
}

/// Per-trace orderings shared by every pivot, so a pivot sweep sorts once.
pub struct TraceIndex<'a> {
    trace: &'a ScheduleTrace,
    util: Vec<Rational>,
    /// `(job position, is_release)`, ordered by the release or deadline time.
    rate_changes: Vec<(usize, bool)>,
    by_release: Vec<usize>,
    /// Completed jobs only.
    by_completion: Vec<usize>,
}

impl<'a> TraceIndex<'a> {
    pub fn new(trace: &'a ScheduleTrace) -> Self {
        let jobs = &trace.jobs;
        let util = jobs.iter().map(|r| r.utilization()).collect();
        let time = |&(i, release): &(usize, bool)| if release { &jobs[i].release } else { &jobs[i].deadline };
        let mut rate_changes: Vec<(usize, bool)> = (0..jobs.len()).flat_map(|i| [(i, true), (i, false)]).collect();
        rate_changes.sort_by(|a, b| time(a).cmp(time(b)));
        let mut by_release: Vec<usize> = (0..jobs.len()).collect();
        by_release.sort_by(|&a, &b| jobs[a].release.cmp(&jobs[b].release));
        let mut by_completion: Vec<usize> = (0..jobs.len()).filter(|&i| jobs[i].completion.is_some()).collect();
        by_completion.sort_by(|&a, &b| jobs[a].completion.cmp(&jobs[b].completion));
        TraceIndex {
            trace,
            util,
            rate_changes,
            by_release,
            by_completion,
        }
    }

    /// One sweep over the trace computing LAG at every boundary up to `t_d`.
    pub fn lag_profile(&self, d: &JobSetD) -> Vec<LagPoint> {
        let trace = self.trace;
        let jobs = &trace.jobs;
        // PS rate changes: +u at each member release, -u at each member deadline.
        let changes: Vec<(&Rational, Rational)> = self
            .rate_changes
            .iter()
            .filter(|(i, _)| d.contains(jobs[*i].job))
            .map(|&(i, release)| {
                if release {
                    (&jobs[i].release, self.util[i].clone())
                } else {
                    (&jobs[i].deadline, -&self.util[i])
                }
            })
            .collect();

        let end_time = Rational::min_of(&d.t_d, &trace.horizon).clone();
        let mut out = Vec::new();
        let mut lag = Rational::zero();
        let mut rate = Rational::zero();
        let mut next_change = 0;
        for seg in &trace.segments {
            if seg.start >= end_time {
                break;
            }
            let seg_end = Rational::min_of(&seg.end, &end_time).clone();
            let busy = segment_busy(d, &seg.procs);
            out.push(LagPoint {
                time: seg.start.clone(),
                lag: lag.clone(),
                busy_after: Some(busy),
            });
            let mut cursor = seg.start.clone();
            loop {
                while next_change < changes.len() && changes[next_change].0 <= &cursor {
                    rate += &changes[next_change].1;
                    next_change += 1;
                }
                let stop = match changes.get(next_change) {
                    Some((t, _)) if *t < &seg_end => (*t).clone(),
                    _ => seg_end.clone(),
                };
                if !rate.is_zero() {
                    lag += &rate * (&stop - &cursor);
                }
                cursor = stop;
                if cursor == seg_end {
                    break;
                }
            }
            let mut actual = Rational::zero();
            for (p, slot) in seg.procs.iter().enumerate() {
                if slot.is_some_and(|j| d.contains(j)) {
                    actual += &trace.speeds[p];
                }
            }
            if !actual.is_zero() {
                lag -= actual * (&seg_end - &seg.start);
            }
        }
        out.push(LagPoint {
            time: end_time,
            lag,
            busy_after: None,
        });
        out
    }

    /// Number of tasks with a pending job of `d` (released strictly before
    /// `t`, completing strictly after it) at each time in `times` (ascending).
    fn pending_task_counts(&self, d: &JobSetD, times: &[&Rational]) -> Vec<usize> {
        let jobs = &self.trace.jobs;
        let by_release: Vec<&JobRecord> = self.by_release.iter().map(|&i| &jobs[i]).filter(|r| d.contains(r.job)).collect();
        let by_completion: Vec<&JobRecord> =
            self.by_completion.iter().map(|&i| &jobs[i]).filter(|r| d.contains(r.job)).collect();

        let mut per_task: HashMap<TaskId, usize> = HashMap::new();
        let mut tasks_pending = 0usize;
        let (mut ri, mut ci) = (0, 0);
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            while ri < by_release.len() && &by_release[ri].release < t {
                let c = per_task.entry(by_release[ri].job.task).or_default();
                if *c == 0 {
                    tasks_pending += 1;
                }
                *c += 1;
                ri += 1;
            }
            while ci < by_completion.len() && by_completion[ci].completion.as_ref().is_some_and(|f| f <= t) {
                // A job completing by t was released before t, so it was counted.
                let c = per_task.get_mut(&by_completion[ci].job.task).expect("released before completion");
                *c -= 1;
                if *c == 0 {
                    tasks_pending -= 1;
                }
                ci += 1;
            }
            out.push(tasks_pending);
        }
        out
    }

    /// P1 and P2 for one pivot's job set (P0 is left to [`check_p0`]).
    pub fn check_lag_properties(&self, d: &JobSetD) -> PropertyReport {
        let m = self.trace.processor_count();
        let profile = self.lag_profile(d);
        let mut report = PropertyReport {
            pivots_checked: 1,
            ..Default::default()
        };
        for w in profile.windows(2) {
            if w[1].lag > w[0].lag && w[0].busy_after == Some(true) {
                report.p1.push(Violation {
                    property: "P1".into(),
                    time: w[0].time.clone(),
                    pivot: Some(d.pivot),
                    detail: format!(
                        "LAG rose from {} to {} over busy [{}, {})",
                        w[0].lag, w[1].lag, w[0].time, w[1].time
                    ),
                });
            }
        }
        let non_busy: Vec<&Rational> = profile
            .iter()
            .filter(|p| p.busy_after == Some(false))
            .map(|p| &p.time)
            .collect();
        let counts = self.pending_task_counts(d, &non_busy);
        for (t, count) in non_busy.into_iter().zip(counts) {
            if count + 1 > m {
                report.p2.push(Violation {
                    property: "P2".into(),
                    time: t.clone(),
                    pivot: Some(d.pivot),
                    detail: format!("{count} tasks have pending jobs at a non-busy instant on {m} processors"),
                });
            }
        }
        report
    }
}

pub fn lag_profile(trace: &ScheduleTrace, d: &JobSetD) -> Vec<LagPoint> {
    TraceIndex::new(trace).lag_profile(d)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub property: String,
    pub time: Rational,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pivot: Option<JobRef>,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub pivots_checked: usize,
    pub p0: Vec<Violation>,
    pub p1: Vec<Violation>,
    pub p2: Vec<Violation>,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.p0.is_empty() && self.p1.is_empty() && self.p2.is_empty()
    }

    pub fn merge(&mut self, other: PropertyReport) {
        self.pivots_checked += other.pivots_checked;
        self.p0.extend(other.p0);
        self.p1.extend(other.p1);
        self.p2.extend(other.p2);
    }
}

fn utilizations(trace: &ScheduleTrace) -> HashMap<TaskId, Rational> {
    let mut out = HashMap::new();
    for r in &trace.jobs {
        out.entry(r.job.task).or_insert_with(|| r.utilization());
    }
    out
}

/// Every running job sits on a processor at least as fast as its task's
/// utilization. Independent of any pivot.
pub fn check_p0(trace: &ScheduleTrace) -> Vec<Violation> {
    let util = utilizations(trace);
    let mut out = Vec::new();
    for seg in &trace.segments {
        for (p, slot) in seg.procs.iter().enumerate() {
            let Some(job) = slot else { continue };
            let Some(u) = util.get(&job.task) else {
                out.push(Violation {
                    property: "P0".into(),
                    time: seg.start.clone(),
                    pivot: None,
                    detail: format!("{job} runs on processor {} but was never released", p + 1),
                });
                continue;
            };
            if u > &trace.speeds[p] {
                out.push(Violation {
                    property: "P0".into(),
                    time: seg.start.clone(),
                    pivot: None,
                    detail: format!(
                        "{job} (u = {u}) on processor {} with speed {} during [{}, {})",
                        p + 1,
                        trace.speeds[p],
                        seg.start,
                        seg.end
                    ),
                });
            }
        }
    }
    out
}

/// P1 and P2 for one pivot's job set (P0 is left to [`check_p0`]).
pub fn check_lag_properties(trace: &ScheduleTrace, d: &JobSetD) -> PropertyReport {
    TraceIndex::new(trace).check_lag_properties(d)
}

/// P0, P1 and P2 for one pivot's job set.
pub fn check_properties(trace: &ScheduleTrace, d: &JobSetD) -> PropertyReport {
    let mut report = check_lag_properties(trace, d);
    report.p0 = check_p0(trace);
    report
}

/// Up to `budget` pivots spread evenly over the jobs whose deadline is within
/// the horizon, in `(deadline, task)` order.
pub fn select_pivots(trace: &ScheduleTrace, budget: usize) -> Vec<JobRef> {
    let mut eligible: Vec<&JobRecord> = trace.jobs.iter().filter(|r| r.deadline <= trace.horizon).collect();
    eligible.sort_by(|a, b| a.deadline.cmp(&b.deadline).then(a.job.task.cmp(&b.job.task)));
    let n = eligible.len();
    if budget == 0 || n == 0 {
        return Vec::new();
    }
    if n <= budget {
        return eligible.iter().map(|r| r.job).collect();
    }
    (0..budget).map(|k| eligible[k * (n - 1) / (budget - 1).max(1)].job).collect()
}

/// P0 once, then P1 and P2 for each pivot from [`select_pivots`].
pub fn verify_trace(trace: &ScheduleTrace, budget: usize) -> PropertyReport {
    let mut report = PropertyReport {
        p0: check_p0(trace),
        ..Default::default()
    };
    let index = TraceIndex::new(trace);
    for pivot in select_pivots(trace, budget) {
        let d = JobSetD::from_pivot(trace, pivot).expect("pivot comes from the trace");
        report.merge(index.check_lag_properties(&d));
    }
    report
}

/// Non-preemptive blocking relative to `d` before `t_d`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockingReport {
    /// Maximal blocking intervals, clipped to `[0, t_d)`.
    pub intervals: Vec<(Rational, Rational)>,
    /// Jobs outside `d` that block some job of `d` before `t_d` and are
    /// still unfinished at `t_d`.
    pub blocking_jobs: Vec<JobRef>,
    /// Their total remaining workload at `t_d`.
    pub pending_work: Rational,
}

/// Blocking instants: some enabled job of `d` waits while a job outside `d`
/// executes. Classified per segment.
pub fn blocking_analysis(trace: &ScheduleTrace, d: &JobSetD) -> Result<BlockingReport, OracleError> {
    if d.t_d > trace.horizon {
        return Err(OracleError::PivotBeyondHorizon {
            deadline: d.t_d.clone(),
            horizon: trace.horizon.clone(),
        });
    }
    // Per task, the jobs of d in index order, and a cursor at the earliest
    // unfinished one.
    let mut tasks: BTreeMap<TaskId, (Vec<&JobRecord>, usize)> = BTreeMap::new();
    for r in d.member_records(trace) {
        tasks.entry(r.job.task).or_default().0.push(r);
    }
    let mut intervals: Vec<(Rational, Rational)> = Vec::new();
    let mut blockers: Vec<JobRef> = Vec::new();
    for seg in &trace.segments {
        if seg.start >= d.t_d {
            break;
        }
        let outsider_running = seg.procs.iter().flatten().any(|j| !d.contains(*j));
        if !outsider_running {
            continue;
        }
        let mut waiting = false;
        for (jobs, cursor) in tasks.values_mut() {
            while *cursor < jobs.len() && jobs[*cursor].completion.as_ref().is_some_and(|f| f <= &seg.start) {
                *cursor += 1;
            }
            if let Some(r) = jobs.get(*cursor) {
                if r.release <= seg.start && !seg.procs.contains(&Some(r.job)) {
                    waiting = true;
                }
            }
        }
        if !waiting {
            continue;
        }
        let end = Rational::min_of(&seg.end, &d.t_d).clone();
        match intervals.last_mut() {
            Some(last) if last.1 == seg.start => last.1 = end,
            _ => intervals.push((seg.start.clone(), end)),
        }
        for j in seg.procs.iter().flatten() {
            if !d.contains(*j) && !blockers.contains(j) {
                blockers.push(*j);
            }
        }
    }
    blockers.sort();
    let zero = Rational::zero();
    let mut blocking_jobs = Vec::new();
    let mut pending_work = Rational::zero();
    for job in blockers {
        let rec = trace.job(job).ok_or(OracleError::UnknownJob(job))?;
        if rec.completion.as_ref().is_some_and(|f| f <= &d.t_d) {
            continue;
        }
        pending_work += &rec.workload - trace_allocation(trace, job, &zero, &d.t_d);
        blocking_jobs.push(job);
    }
    Ok(BlockingReport {
        intervals,
        blocking_jobs,
        pending_work,
    })
}
