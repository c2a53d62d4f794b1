//! Response-time bounds for GEDF-H and NP-GEDF-H.
//!
//! Both bounds have the form `x + 2 p_i` with
//! `x = max(0, (E - p_min) / (R_sum - U_bar))`, where `U_bar` sums the `m - 1`
//! largest utilizations and `E` is the preemptive term [`e_bar`] or the
//! non-preemptive term [`e_star`].

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{validate_task_system, Platform, SporadicTask, TaskId, TaskSystem};
use crate::rational::Rational;
use crate::simulator::{JobRef, ScheduleTrace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Preemptive,
    Nonpreemptive,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Preemptive => "preemptive",
            Mode::Nonpreemptive => "nonpreemptive",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BoundsError {
    #[error("task system is not accepted on this platform: {0}")]
    Rejected(String),
    #[error("no capacity left beyond the m - 1 largest utilizations")]
    NoSpareCapacity,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundReport {
    pub mode: Mode,
    pub u_bar: Rational,
    pub e_term: Rational,
    pub x: Rational,
    pub p_min: Rational,
    pub r_sum: Rational,
    pub per_task_bound: BTreeMap<TaskId, Rational>,
}

/// Sum of the `min(m - 1, n)` largest utilizations.
pub fn u_bar(tasks: &TaskSystem, m: usize) -> Rational {
    let mut us: Vec<&Rational> = tasks.tasks().iter().map(|t| t.utilization()).collect();
    us.sort_by(|a, b| b.cmp(a));
    us.into_iter().take(m.saturating_sub(1)).sum()
}

/// Tasks ordered by `u * e` descending. Pairing a chosen subset with speeds
/// in this order, fastest first, minimizes the sum of `u e / alpha`.
fn by_weight(tasks: &TaskSystem) -> Vec<(&SporadicTask, Rational)> {
    let mut v: Vec<(&SporadicTask, Rational)> =
        tasks.tasks().iter().map(|t| (t, t.utilization() * t.exec())).collect();
    v.sort_by(|a, b| b.1.cmp(&a.1));
    v
}

/// Maximum of `sum(term(task, slot))` over subsequences of `order` filling
/// every slot, plus optionally one extra task outside the subsequence
/// scored by `extra`. Slots must be visited in order.
fn best_assignment<F, G>(order: &[(&SporadicTask, Rational)], slots: usize, term: F, extra: Option<G>) -> Rational
where
    F: Fn(&SporadicTask, &Rational, usize) -> Rational,
    G: Fn(&SporadicTask) -> Rational,
{
    // dp[j][f]: best value with j slots filled and f extra tasks taken.
    let flags = if extra.is_some() { 2 } else { 1 };
    let mut dp: Vec<Vec<Option<Rational>>> = vec![vec![None; flags]; slots + 1];
    dp[0][0] = Some(Rational::zero());
    for (task, w) in order {
        let prev = dp.clone();
        for j in 0..=slots {
            for f in 0..flags {
                let Some(base) = &prev[j][f] else { continue };
                if j < slots {
                    let v = base + term(task, w, j);
                    if dp[j + 1][f].as_ref().is_none_or(|cur| &v > cur) {
                        dp[j + 1][f] = Some(v);
                    }
                }
                if f == 0 && flags == 2 {
                    let v = base + (extra.as_ref().expect("flags == 2"))(task);
                    if dp[j][1].as_ref().is_none_or(|cur| &v > cur) {
                        dp[j][1] = Some(v);
                    }
                }
            }
        }
    }
    dp[slots].iter().flatten().max().cloned().unwrap_or_else(Rational::zero)
}

/// Largest `sum(e_i + u_i (p_i - e_i / alpha_j))` over sets of
/// `min(m - 1, n)` tasks paired one-to-one with the fastest `m - 1` speeds.
pub fn e_bar(tasks: &TaskSystem, platform: &Platform) -> Rational {
    let k = (platform.processor_count() - 1).min(tasks.len());
    let speeds = platform.fastest_speeds(k);
    let order = by_weight(tasks);
    best_assignment(
        &order,
        k,
        |t, w, j| t.exec() + t.utilization() * t.period() - w / &speeds[j],
        None::<fn(&SporadicTask) -> Rational>,
    )
}

/// Largest `sum(e_i + u_i e_i (1 - 1 / alpha_j)) + e_k` over the same sets
/// and pairings, with `tau_k` any task outside the set (`e_k = 0` if none).
pub fn e_star(tasks: &TaskSystem, platform: &Platform) -> Rational {
    let k = (platform.processor_count() - 1).min(tasks.len());
    let speeds = platform.fastest_speeds(k);
    let order = by_weight(tasks);
    best_assignment(
        &order,
        k,
        |t, w, j| t.exec() + w - w / &speeds[j],
        Some(|t: &SporadicTask| t.exec().clone()),
    )
}

/// `max(0, (e_term - p_min) / (r_sum - u_bar))`.
pub fn x_value(e_term: &Rational, p_min: &Rational, r_sum: &Rational, u_bar: &Rational) -> Result<Rational, BoundsError> {
    let spare = r_sum - u_bar;
    if !spare.is_positive() {
        return Err(BoundsError::NoSpareCapacity);
    }
    let x = (e_term - p_min) / spare;
    Ok(if x.is_negative() { Rational::zero() } else { x })
}

pub fn compute_bounds(tasks: &TaskSystem, platform: &Platform, mode: Mode) -> Result<BoundReport, BoundsError> {
    let report = validate_task_system(tasks, platform);
    if !report.accepted {
        return Err(BoundsError::Rejected(report.failures().join("; ")));
    }
    let u_bar = u_bar(tasks, platform.processor_count());
    let e_term = match mode {
        Mode::Preemptive => e_bar(tasks, platform),
        Mode::Nonpreemptive => e_star(tasks, platform),
    };
    let p_min = tasks.min_period().cloned().unwrap_or_else(Rational::zero);
    let x = x_value(&e_term, &p_min, platform.r_sum(), &u_bar)?;
    let two = Rational::from(2);
    let per_task_bound = tasks
        .tasks()
        .iter()
        .map(|t| (t.id(), &x + &two * t.period()))
        .collect();
    Ok(BoundReport {
        mode,
        u_bar,
        e_term,
        x,
        p_min,
        r_sum: platform.r_sum().clone(),
        per_task_bound,
    })
}

/// A job whose response time exceeds its task's bound. Unfinished jobs
/// count once the horizon is already past `release + bound`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundViolation {
    pub job: JobRef,
    pub release: Rational,
    pub bound: Rational,
    /// `None` when the job was still unfinished at the horizon.
    pub response: Option<Rational>,
}

/// Every job of `trace` that breaks the per-task bound in `report`.
pub fn bound_violations(trace: &ScheduleTrace, report: &BoundReport) -> Vec<BoundViolation> {
    let mut out = Vec::new();
    for rec in &trace.jobs {
        let Some(bound) = report.per_task_bound.get(&rec.job.task) else {
            continue;
        };
        let response = rec.response_time();
        let late = match &response {
            Some(r) => r > bound,
            None => &trace.horizon - &rec.release > *bound,
        };
        if late {
            out.push(BoundViolation {
                job: rec.job,
                release: rec.release.clone(),
                bound: bound.clone(),
                response,
            });
        }
    }
    out
}
