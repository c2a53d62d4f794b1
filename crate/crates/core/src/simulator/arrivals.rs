use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{SporadicTask, TaskId, TaskSystem};
use crate::rational::Rational;
use crate::seed::derive_seed;

use super::SimError;

/// Where job releases come from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum ArrivalSource {
    /// Job `j` of a task is released at `(j - 1) * period`.
    Periodic,
    /// Explicit release times per task; tasks without an entry never release.
    Trace { releases: BTreeMap<TaskId, Vec<Rational>> },
    /// Inter-arrival time `period * (1 + k / 1000 * max_extra)` with `k`
    /// drawn uniformly from `0..=1000`, one independent stream per task.
    SporadicRandom { max_extra: Rational, seed: u64 },
}

/// Lazily produces one task's release times.
pub(crate) enum ReleaseStream {
    Periodic {
        period: Rational,
        next: Rational,
    },
    Listed {
        times: std::vec::IntoIter<Rational>,
    },
    Random {
        period: Rational,
        max_extra: Rational,
        next: Rational,
        rng: Box<ChaCha8Rng>,
    },
}

impl ReleaseStream {
    pub(crate) fn next_release(&mut self) -> Option<Rational> {
        match self {
            ReleaseStream::Periodic { period, next } => {
                let r = next.clone();
                *next += &*period;
                Some(r)
            }
            ReleaseStream::Listed { times } => times.next(),
            ReleaseStream::Random {
                period,
                max_extra,
                next,
                rng,
            } => {
                let r = next.clone();
                let k: i64 = rng.gen_range(0..=1000);
                let extra = &*max_extra * Rational::new(k as i128, 1000);
                *next += &*period * (Rational::one() + extra);
                Some(r)
            }
        }
    }
}

fn check_separation(task: &SporadicTask, times: &[Rational]) -> Result<(), SimError> {
    for (i, r) in times.iter().enumerate() {
        let ok = if i == 0 {
            !r.is_negative()
        } else {
            r - &times[i - 1] >= *task.period()
        };
        if !ok {
            return Err(SimError::MalformedArrivals {
                task: task.id(),
                index: i as u64 + 1,
            });
        }
    }
    Ok(())
}

impl ArrivalSource {
    /// One stream per task, in task order. Validates explicit traces.
    pub(crate) fn streams(&self, tasks: &TaskSystem) -> Result<Vec<ReleaseStream>, SimError> {
        tasks
            .tasks()
            .iter()
            .map(|t| match self {
                ArrivalSource::Periodic => Ok(ReleaseStream::Periodic {
                    period: t.period().clone(),
                    next: Rational::zero(),
                }),
                ArrivalSource::Trace { releases } => {
                    let times = releases.get(&t.id()).cloned().unwrap_or_default();
                    check_separation(t, &times)?;
                    Ok(ReleaseStream::Listed {
                        times: times.into_iter(),
                    })
                }
                ArrivalSource::SporadicRandom { max_extra, seed } => {
                    if max_extra.is_negative() {
                        return Err(SimError::MalformedArrivals {
                            task: t.id(),
                            index: 1,
                        });
                    }
                    Ok(ReleaseStream::Random {
                        period: t.period().clone(),
                        max_extra: max_extra.clone(),
                        next: Rational::zero(),
                        rng: Box::new(ChaCha8Rng::seed_from_u64(derive_seed(*seed, t.id() as u64))),
                    })
                }
            })
            .collect()
    }

    /// All release times of `task` strictly before `horizon`.
    pub fn releases_before(
        &self,
        tasks: &TaskSystem,
        task: TaskId,
        horizon: &Rational,
    ) -> Result<Vec<Rational>, SimError> {
        let pos = tasks
            .tasks()
            .iter()
            .position(|t| t.id() == task)
            .ok_or(SimError::UnknownTask(task))?;
        let mut stream = self.streams(tasks)?.swap_remove(pos);
        let mut out = Vec::new();
        while let Some(r) = stream.next_release() {
            if &r >= horizon {
                break;
            }
            out.push(r);
        }
        Ok(out)
    }
}
