//! Processor selection: GEDF-H, its non-preemptive dispatcher, and the plain
//! GEDF selectors used for comparison.
//!
//! Every function works on processor slots indexed by `ProcId - 1`, with
//! speeds non-decreasing in the index (the order [`Platform::speeds`]
//! produces).
//!
//! [`Platform::speeds`]: crate::model::Platform::speeds

use crate::rational::Rational;

use super::{Assignment, JobRef, Selector};

/// A job competing for a processor, with its task's utilization.
#[derive(Clone, Copy, Debug)]
pub struct Candidate<'a> {
    pub job: JobRef,
    pub utilization: &'a Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoLegalAssignment {
    pub job: JobRef,
}

fn slowest_free_adequate(out: &[Option<JobRef>], speeds: &[Rational], u: &Rational) -> Option<usize> {
    // Speeds are sorted, so the first free adequate slot is the slowest one
    // with the lowest id.
    (0..speeds.len()).find(|&p| out[p].is_none() && &speeds[p] >= u)
}

/// GEDF-H processor selection for the `m` highest-priority enabled jobs.
///
/// `enabled` must be in priority order. Jobs whose previous processor is
/// still adequate keep it. Every other job goes to the slowest free adequate
/// processor; if none is free, a running job with lower utilization is moved
/// off a fast processor to a free one it can legally use (repeating while the
/// freed processor is still too slow), and the job takes the freed slot.
pub fn gedfh_assign(
    enabled: &[Candidate<'_>],
    speeds: &[Rational],
    previous: &[Option<JobRef>],
) -> Result<Assignment, NoLegalAssignment> {
    let m = speeds.len();
    let top = &enabled[..enabled.len().min(m)];
    let mut out: Assignment = vec![None; m];
    let mut util: Vec<Option<&Rational>> = vec![None; m];
    let mut pending = Vec::with_capacity(top.len());

    for c in top {
        match previous.iter().position(|x| *x == Some(c.job)) {
            Some(p) if &speeds[p] >= c.utilization => {
                out[p] = Some(c.job);
                util[p] = Some(c.utilization);
            }
            _ => pending.push(*c),
        }
    }

    for c in pending {
        loop {
            if let Some(p) = slowest_free_adequate(&out, speeds, c.utilization) {
                out[p] = Some(c.job);
                util[p] = Some(c.utilization);
                break;
            }
            // At least one slot is free: fewer than m jobs are placed.
            let free_max = (0..m)
                .rev()
                .find(|&p| out[p].is_none())
                .map(|p| &speeds[p])
                .ok_or(NoLegalAssignment { job: c.job })?;
            let victim = (0..m)
                .filter(|&p| &speeds[p] > free_max)
                .filter_map(|p| Some((p, out[p]?, util[p]?)))
                .filter(|(_, _, u)| *u <= free_max)
                .min_by(|a, b| {
                    let direct_a = &speeds[a.0] >= c.utilization;
                    let direct_b = &speeds[b.0] >= c.utilization;
                    direct_b
                        .cmp(&direct_a)
                        .then_with(|| a.2.cmp(b.2))
                        .then_with(|| a.1.task.cmp(&b.1.task))
                });
            let (from, job, u) = victim.ok_or(NoLegalAssignment { job: c.job })?;
            let to = slowest_free_adequate(&out, speeds, u).expect("free_max slot is adequate");
            out[to] = Some(job);
            util[to] = Some(u);
            out[from] = None;
            util[from] = None;
        }
    }
    Ok(out)
}

/// Start decisions of the non-preemptive dispatcher.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NpDecision {
    pub assignment: Assignment,
    /// `(ProcId, job)` for each job started at this instant.
    pub started: Vec<(usize, JobRef)>,
    /// Enabled jobs that found no free adequate processor.
    pub skipped: Vec<JobRef>,
}

/// NP-GEDF-H dispatch: running jobs keep their processors; the remaining
/// enabled jobs are scanned in priority order and each starts on the slowest
/// free processor fast enough for it, if any.
pub fn np_dispatch(enabled: &[Candidate<'_>], speeds: &[Rational], running: &[Option<JobRef>]) -> NpDecision {
    let mut out: Assignment = running.to_vec();
    let mut started = Vec::new();
    let mut skipped = Vec::new();
    let mut free = out.iter().filter(|x| x.is_none()).count();
    for c in enabled {
        if free == 0 {
            break;
        }
        if running.contains(&Some(c.job)) {
            continue;
        }
        match slowest_free_adequate(&out, speeds, c.utilization) {
            Some(p) => {
                out[p] = Some(c.job);
                started.push((p + 1, c.job));
                free -= 1;
            }
            None => skipped.push(c.job),
        }
    }
    NpDecision {
        assignment: out,
        started,
        skipped,
    }
}

/// Plain GEDF: the top `m` jobs run, processors picked by `selector` with
/// no regard for utilization.
pub fn plain_assign(enabled: &[Candidate<'_>], speeds: &[Rational], selector: Selector) -> Assignment {
    let m = speeds.len();
    let mut top: Vec<Candidate<'_>> = enabled[..enabled.len().min(m)].to_vec();
    let mut out: Assignment = vec![None; m];
    match selector {
        Selector::ArbitraryLowestId => {
            for (p, c) in top.iter().enumerate() {
                out[p] = Some(c.job);
            }
        }
        Selector::FastestFirst => {
            for (i, c) in top.iter().enumerate() {
                out[m - 1 - i] = Some(c.job);
            }
        }
        Selector::AdversarialSlowForHeavy => {
            // Stable sort keeps priority order among equal utilizations.
            top.sort_by(|a, b| b.utilization.cmp(a.utilization));
            for (p, c) in top.iter().enumerate() {
                out[p] = Some(c.job);
            }
        }
    }
    out
}
