//! Tasks, platforms, and the feasibility gate.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::Rational;

pub type TaskId = u32;

/// Processor identifier. Processors are numbered from 1 in order of
/// non-decreasing speed, lowest class first.
pub type ProcId = usize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("task {0}: execution cost must be positive")]
    NonPositiveExec(TaskId),
    #[error("task {0}: period must be positive")]
    NonPositivePeriod(TaskId),
    #[error("task id {0} is used more than once")]
    DuplicateId(TaskId),
    #[error("task id must be positive")]
    ZeroId,
    #[error("platform has no processors")]
    EmptyPlatform,
    #[error("speed class {0}: speed must be positive")]
    NonPositiveSpeed(usize),
    #[error("speed class {0}: count must be at least 1")]
    ZeroCount(usize),
    #[error("speed classes must be strictly increasing (class {0})")]
    SpeedsNotIncreasing(usize),
    #[error("class index {index} out of range for {classes} speed classes")]
    ClassIndexOutOfRange { index: usize, classes: usize },
    #[error("task {id}: utilization {utilization} exceeds the fastest speed {alpha_max}")]
    UtilizationExceedsMaxSpeed {
        id: TaskId,
        utilization: Rational,
        alpha_max: Rational,
    },
}

/// An implicit-deadline sporadic task: `exec` workload units per job, jobs
/// at least `period` apart, each due `period` after its release.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTask")]
pub struct SporadicTask {
    id: TaskId,
    exec: Rational,
    period: Rational,
    #[serde(skip_serializing)]
    utilization: Rational,
}

#[derive(Deserialize)]
struct RawTask {
    id: TaskId,
    exec: Rational,
    period: Rational,
}

impl TryFrom<RawTask> for SporadicTask {
    type Error = ModelError;
    fn try_from(raw: RawTask) -> Result<Self, ModelError> {
        SporadicTask::new(raw.id, raw.exec, raw.period)
    }
}

impl SporadicTask {
    pub fn new(id: TaskId, exec: Rational, period: Rational) -> Result<Self, ModelError> {
        if id == 0 {
            return Err(ModelError::ZeroId);
        }
        if !exec.is_positive() {
            return Err(ModelError::NonPositiveExec(id));
        }
        if !period.is_positive() {
            return Err(ModelError::NonPositivePeriod(id));
        }
        let utilization = &exec / &period;
        Ok(SporadicTask {
            id,
            exec,
            period,
            utilization,
        })
    }

    pub fn id(&self) -> TaskId {
        self.id
    }

    pub fn exec(&self) -> &Rational {
        &self.exec
    }

    pub fn period(&self) -> &Rational {
        &self.period
    }

    /// Relative deadline; always the period.
    pub fn deadline(&self) -> &Rational {
        &self.period
    }

    pub fn utilization(&self) -> &Rational {
        &self.utilization
    }
}

impl fmt::Debug for SporadicTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}({}, {})", self.id, self.exec, self.period)
    }
}

/// Tasks ordered by id. Ids are unique and define the EDF tie-break.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<SporadicTask>", into = "Vec<SporadicTask>")]
pub struct TaskSystem {
    tasks: Vec<SporadicTask>,
}

impl TryFrom<Vec<SporadicTask>> for TaskSystem {
    type Error = ModelError;
    fn try_from(tasks: Vec<SporadicTask>) -> Result<Self, ModelError> {
        TaskSystem::new(tasks)
    }
}

impl From<TaskSystem> for Vec<SporadicTask> {
    fn from(ts: TaskSystem) -> Self {
        ts.tasks
    }
}

impl TaskSystem {
    pub fn new(mut tasks: Vec<SporadicTask>) -> Result<Self, ModelError> {
        tasks.sort_by_key(|t| t.id);
        if let Some(w) = tasks.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(ModelError::DuplicateId(w[0].id));
        }
        Ok(TaskSystem { tasks })
    }

    /// Convenience constructor from `(exec, period)` pairs; ids are 1, 2, ...
    pub fn from_pairs(pairs: &[(Rational, Rational)]) -> Result<Self, ModelError> {
        let tasks = pairs
            .iter()
            .enumerate()
            .map(|(i, (e, p))| SporadicTask::new(i as TaskId + 1, e.clone(), p.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        TaskSystem::new(tasks)
    }

    pub fn tasks(&self) -> &[SporadicTask] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn get(&self, id: TaskId) -> Option<&SporadicTask> {
        self.tasks
            .binary_search_by_key(&id, |t| t.id)
            .ok()
            .map(|i| &self.tasks[i])
    }

    pub fn without(&self, id: TaskId) -> TaskSystem {
        TaskSystem {
            tasks: self.tasks.iter().filter(|t| t.id != id).cloned().collect(),
        }
    }

    pub fn max_period(&self) -> Option<&Rational> {
        self.tasks.iter().map(|t| &t.period).max()
    }

    pub fn min_period(&self) -> Option<&Rational> {
        self.tasks.iter().map(|t| &t.period).min()
    }
}

/// `count` identical processors of speed `speed`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeedClass {
    pub speed: Rational,
    pub count: usize,
}

/// A uniform heterogeneous multiprocessor described by its speed classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPlatform")]
pub struct Platform {
    classes: Vec<SpeedClass>,
    #[serde(skip)]
    m: usize,
    #[serde(skip)]
    r_sum: Rational,
}

#[derive(Deserialize)]
struct RawPlatform {
    classes: Vec<SpeedClass>,
}

impl TryFrom<RawPlatform> for Platform {
    type Error = ModelError;
    fn try_from(raw: RawPlatform) -> Result<Self, ModelError> {
        Platform::new(raw.classes)
    }
}

impl Platform {
    pub fn new(classes: Vec<SpeedClass>) -> Result<Self, ModelError> {
        if classes.is_empty() {
            return Err(ModelError::EmptyPlatform);
        }
        for (i, c) in classes.iter().enumerate() {
            if !c.speed.is_positive() {
                return Err(ModelError::NonPositiveSpeed(i + 1));
            }
            if c.count == 0 {
                return Err(ModelError::ZeroCount(i + 1));
            }
            if i > 0 && classes[i - 1].speed >= c.speed {
                return Err(ModelError::SpeedsNotIncreasing(i + 1));
            }
        }
        let m = classes.iter().map(|c| c.count).sum();
        let r_sum = classes
            .iter()
            .map(|c| &c.speed * Rational::from(c.count))
            .sum();
        Ok(Platform { classes, m, r_sum })
    }

    /// Shorthand for `[(speed, count), ...]`.
    pub fn from_pairs(pairs: &[(Rational, usize)]) -> Result<Self, ModelError> {
        Platform::new(
            pairs
                .iter()
                .map(|(speed, count)| SpeedClass {
                    speed: speed.clone(),
                    count: *count,
                })
                .collect(),
        )
    }

    pub fn classes(&self) -> &[SpeedClass] {
        &self.classes
    }

    /// Number of speed classes (`z`).
    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn processor_count(&self) -> usize {
        self.m
    }

    pub fn r_sum(&self) -> &Rational {
        &self.r_sum
    }

    pub fn alpha_max(&self) -> &Rational {
        &self.classes[self.classes.len() - 1].speed
    }

    pub fn alpha_min(&self) -> &Rational {
        &self.classes[0].speed
    }

    /// Speed of every processor, indexed by `ProcId - 1`.
    pub fn speeds(&self) -> Vec<Rational> {
        self.classes
            .iter()
            .flat_map(|c| std::iter::repeat_n(c.speed.clone(), c.count))
            .collect()
    }

    /// The `k` fastest processor speeds, fastest first.
    pub fn fastest_speeds(&self, k: usize) -> Vec<Rational> {
        let mut s = self.speeds();
        s.reverse();
        s.truncate(k);
        s
    }

    /// Processors of every class above `class_index` (classes numbered from
    /// 1, so index 0 selects the whole platform). Returns the processor ids
    /// and their count.
    pub fn psi_set(&self, class_index: usize) -> Result<(Vec<ProcId>, usize), ModelError> {
        if class_index >= self.classes.len() {
            return Err(ModelError::ClassIndexOutOfRange {
                index: class_index,
                classes: self.classes.len(),
            });
        }
        let skip: usize = self.classes[..class_index].iter().map(|c| c.count).sum();
        let ids: Vec<ProcId> = (skip + 1..=self.m).collect();
        let n = ids.len();
        Ok((ids, n))
    }

    /// The slowest class speed that is at least `u`.
    pub fn min_adequate_speed(&self, u: &Rational) -> Option<&Rational> {
        self.classes.iter().map(|c| &c.speed).find(|s| *s >= u)
    }
}

/// Ids of tasks whose utilization strictly exceeds `speed_threshold`.
pub fn phi_set(tasks: &TaskSystem, speed_threshold: &Rational) -> Vec<TaskId> {
    tasks
        .tasks()
        .iter()
        .filter(|t| t.utilization() > speed_threshold)
        .map(|t| t.id())
        .collect()
}

pub fn total_utilization(tasks: &TaskSystem) -> Rational {
    tasks.tasks().iter().map(|t| t.utilization()).sum()
}

pub fn total_capacity(platform: &Platform) -> Rational {
    platform.r_sum().clone()
}

/// The slowest speed a job of `task` may use under GEDF-H; never below the
/// task's utilization.
pub fn min_speed_class(task: &SporadicTask, platform: &Platform) -> Result<Rational, ModelError> {
    platform
        .min_adequate_speed(task.utilization())
        .cloned()
        .ok_or_else(|| ModelError::UtilizationExceedsMaxSpeed {
            id: task.id(),
            utilization: task.utilization().clone(),
            alpha_max: platform.alpha_max().clone(),
        })
}

/// One instance of the per-class condition `|Φ_i| <= |Ψ_i|`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCheck {
    pub class_index: usize,
    pub phi_count: usize,
    pub psi_count: usize,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub accepted: bool,
    pub u_sum: Rational,
    pub r_sum: Rational,
    pub capacity_ok: bool,
    pub per_task_speed_ok: BTreeMap<TaskId, bool>,
    pub class_checks: Vec<ClassCheck>,
}

impl FeasibilityReport {
    /// One line per failed condition.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.capacity_ok {
            out.push(format!(
                "total utilization {} exceeds total capacity {}",
                self.u_sum, self.r_sum
            ));
        }
        for (id, ok) in &self.per_task_speed_ok {
            if !ok {
                out.push(format!("task {id}: utilization exceeds the fastest processor speed"));
            }
        }
        for c in self.class_checks.iter().filter(|c| !c.ok) {
            out.push(format!(
                "class {}: {} tasks need a faster processor but only {} exist (|Phi_{}| = {} > |Psi_{}| = {})",
                c.class_index, c.phi_count, c.psi_count, c.class_index, c.phi_count, c.class_index, c.psi_count
            ));
        }
        out
    }
}

/// Checks `U_sum <= R_sum`, `u_i <= alpha_max` for every task, and
/// `|Φ_i| <= |Ψ_i|` for every class `1 <= i < z`.
pub fn validate_task_system(tasks: &TaskSystem, platform: &Platform) -> FeasibilityReport {
    let u_sum = total_utilization(tasks);
    let r_sum = total_capacity(platform);
    let capacity_ok = u_sum <= r_sum;
    let per_task_speed_ok: BTreeMap<TaskId, bool> = tasks
        .tasks()
        .iter()
        .map(|t| (t.id(), t.utilization() <= platform.alpha_max()))
        .collect();
    let class_checks: Vec<ClassCheck> = (1..platform.class_count())
        .map(|i| {
            let threshold = &platform.classes()[i - 1].speed;
            let phi_count = phi_set(tasks, threshold).len();
            let (_, psi_count) = platform.psi_set(i).expect("index below class count");
            ClassCheck {
                class_index: i,
                phi_count,
                psi_count,
                ok: phi_count <= psi_count,
            }
        })
        .collect();
    let accepted =
        capacity_ok && per_task_speed_ok.values().all(|&ok| ok) && class_checks.iter().all(|c| c.ok);
    FeasibilityReport {
        accepted,
        u_sum,
        r_sum,
        capacity_ok,
        per_task_speed_ok,
        class_checks,
    }
}

/// The task-system file: tasks plus the platform they run on.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemFile {
    pub tasks: TaskSystem,
    pub platform: Platform,
}

impl SystemFile {
    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}
