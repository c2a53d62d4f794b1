//! Random task systems: a few heavy tasks first, then tasks from one
//! utilization class until the total reaches the target, with the last task
//! trimmed so the total is hit exactly.
//!
//! Every sample is an integer multiple of `1 / denominator`, so generated
//! parameters are exact rationals.

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{validate_task_system, Platform, SporadicTask, TaskSystem};
use crate::rational::Rational;
use crate::seed::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UtilClass {
    Light,
    Medium,
    Heavy,
}

impl UtilClass {
    pub const ALL: [UtilClass; 3] = [UtilClass::Light, UtilClass::Medium, UtilClass::Heavy];

    /// Closed utilization range for tasks that fit on the slowest class.
    pub fn range(self) -> (Rational, Rational) {
        let (lo, hi) = match self {
            UtilClass::Light => ((1, 1000), (1, 20)),
            UtilClass::Medium => ((1, 20), (1, 5)),
            UtilClass::Heavy => ((1, 5), (1, 2)),
        };
        (Rational::new(lo.0, lo.1), Rational::new(hi.0, hi.1))
    }

    pub fn name(self) -> &'static str {
        match self {
            UtilClass::Light => "light",
            UtilClass::Medium => "medium",
            UtilClass::Heavy => "heavy",
        }
    }
}

impl std::str::FromStr for UtilClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        UtilClass::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown utilization class `{s}` (expected light, medium or heavy)"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeriodMode {
    /// Uniform over the configured period range.
    Uniform,
    /// Every task gets this period.
    Fixed(Rational),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenConfig {
    pub platform: Platform,
    pub period_range: (Rational, Rational),
    pub period_mode: PeriodMode,
    pub util_class: UtilClass,
    /// Utilizations of the heavy tasks, open below and closed above.
    pub heavy_util_range: (Rational, Rational),
    /// Upper limit on the number of heavy tasks; clamped to the number of
    /// processors faster than the slowest class.
    pub max_phi1_count: usize,
    /// Defaults to the platform capacity when absent.
    pub target_usum: Option<Rational>,
    pub quantization_denominator: u64,
    pub seed: u64,
    pub max_retries: u32,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            platform: Platform::from_pairs(&[(Rational::from(1), 2), (Rational::from(2), 2)])
                .expect("valid default platform"),
            period_range: (Rational::from(10), Rational::from(600)),
            period_mode: PeriodMode::Uniform,
            util_class: UtilClass::Medium,
            heavy_util_range: (Rational::from(1), Rational::from(2)),
            max_phi1_count: 2,
            target_usum: None,
            quantization_denominator: 1_000_000,
            seed: 0,
            max_retries: 1000,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenError {
    #[error("invalid generator configuration: {0}")]
    InvalidConfig(String),
    #[error("no valid task system after {0} attempts")]
    RetriesExhausted(u32),
}

impl GenConfig {
    pub fn target(&self) -> Rational {
        self.target_usum.clone().unwrap_or_else(|| self.platform.r_sum().clone())
    }

    /// Heavy-task limit after clamping to the fast processor count.
    pub fn effective_phi1_limit(&self) -> usize {
        let fast = self.platform.psi_set(1).map(|(_, count)| count).unwrap_or(0);
        self.max_phi1_count.min(fast)
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: &str| Err(GenError::InvalidConfig(m.to_string()));
        let (plo, phi) = &self.period_range;
        if !plo.is_positive() || plo > phi {
            return bad("period range must be positive and non-empty");
        }
        if let PeriodMode::Fixed(p) = &self.period_mode {
            if !p.is_positive() {
                return bad("fixed period must be positive");
            }
        }
        let (ulo, uhi) = self.util_class.range();
        if &uhi > self.platform.alpha_min() || !ulo.is_positive() {
            return bad("utilization class must fit on the slowest processors");
        }
        let (hlo, hhi) = &self.heavy_util_range;
        if self.effective_phi1_limit() > 0 && (hlo >= hhi || hhi > self.platform.alpha_max()) {
            return bad("heavy utilization range must be non-empty and within the fastest speed");
        }
        let target = self.target();
        if !target.is_positive() || &target > self.platform.r_sum() {
            return bad("target utilization must be positive and at most the platform capacity");
        }
        if self.quantization_denominator == 0 {
            return bad("quantization denominator must be positive");
        }
        Ok(())
    }

    fn draw(&self, rng: &mut ChaCha8Rng, lo: &Rational, hi: &Rational, open_below: bool) -> Rational {
        let den = Rational::from(self.quantization_denominator);
        let to_i64 = |b: BigInt| b.to_i64().expect("quantized bound fits in i64");
        let lo_scaled = lo * &den;
        let floor_lo = to_i64(lo_scaled.floor());
        let kmin = if open_below || !lo_scaled.is_integer() {
            floor_lo + 1
        } else {
            floor_lo
        };
        let kmax = to_i64((hi * &den).floor());
        let k = rng.gen_range(kmin..=kmax.max(kmin));
        Rational::new(k as i128, self.quantization_denominator as i128)
    }

    fn period(&self, rng: &mut ChaCha8Rng) -> Rational {
        match &self.period_mode {
            PeriodMode::Fixed(p) => p.clone(),
            PeriodMode::Uniform => self.draw(rng, &self.period_range.0, &self.period_range.1, false),
        }
    }

    fn attempt(&self, rng: &mut ChaCha8Rng) -> Option<TaskSystem> {
        let target = self.target();
        let heavy = rng.gen_range(0..=self.effective_phi1_limit());
        let mut params: Vec<(Rational, Rational)> = Vec::new();
        let mut total = Rational::zero();
        for _ in 0..heavy {
            let (lo, hi) = &self.heavy_util_range;
            let u = self.draw(rng, lo, hi, true);
            total += &u;
            params.push((u, self.period(rng)));
        }
        let (lo, hi) = self.util_class.range();
        while total < target {
            let u = self.draw(rng, &lo, &hi, false);
            total += &u;
            params.push((u, self.period(rng)));
        }
        let last = params.last_mut()?;
        last.0 = &last.0 - (&total - &target);
        if !last.0.is_positive() {
            return None;
        }
        let tasks = params
            .into_iter()
            .enumerate()
            .map(|(i, (u, p))| SporadicTask::new(i as u32 + 1, &u * &p, p))
            .collect::<Result<Vec<_>, _>>()
            .ok()?;
        let system = TaskSystem::new(tasks).ok()?;
        validate_task_system(&system, &self.platform).accepted.then_some(system)
    }
}

/// The `batch_index`-th system for this configuration. Each index draws from
/// its own stream, so any one can be regenerated alone.
pub fn generate(config: &GenConfig, batch_index: u64) -> Result<TaskSystem, GenError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, batch_index));
    for _ in 0..config.max_retries.max(1) {
        if let Some(system) = config.attempt(&mut rng) {
            return Ok(system);
        }
    }
    Err(GenError::RetriesExhausted(config.max_retries.max(1)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{phi_set, total_utilization};
    use crate::rational::rat;

    #[test]
    fn default_config_hits_capacity_exactly() {
        let cfg = GenConfig::default();
        for i in 0..50 {
            let ts = generate(&cfg, i).unwrap();
            assert_eq!(total_utilization(&ts), rat("6"));
            assert!(phi_set(&ts, &rat("1")).len() <= 2);
            assert!(ts.tasks().iter().all(|t| t.utilization() <= &rat("2")));
        }
    }

    #[test]
    fn deterministic_per_index() {
        let cfg = GenConfig {
            seed: 42,
            ..GenConfig::default()
        };
        assert_eq!(generate(&cfg, 0).unwrap(), generate(&cfg, 0).unwrap());
        assert_ne!(generate(&cfg, 0).unwrap(), generate(&cfg, 1).unwrap());
    }

    #[test]
    fn unit_processor_without_heavy_tasks() {
        let cfg = GenConfig {
            platform: Platform::from_pairs(&[(rat("1"), 1)]).unwrap(),
            max_phi1_count: 0,
            target_usum: Some(rat("1")),
            util_class: UtilClass::Heavy,
            ..GenConfig::default()
        };
        for i in 0..20 {
            let ts = generate(&cfg, i).unwrap();
            assert_eq!(total_utilization(&ts), rat("1"));
            assert!(ts.tasks().iter().all(|t| t.utilization() <= &rat("1/2")));
        }
    }

    #[test]
    fn fixed_period_mode() {
        let cfg = GenConfig {
            period_mode: PeriodMode::Fixed(rat("100")),
            util_class: UtilClass::Heavy,
            ..GenConfig::default()
        };
        let ts = generate(&cfg, 3).unwrap();
        assert!(ts.tasks().iter().all(|t| t.period() == &rat("100")));
    }

    #[test]
    fn invalid_configs_rejected() {
        let cfg = GenConfig {
            target_usum: Some(rat("7")),
            ..GenConfig::default()
        };
        assert!(matches!(generate(&cfg, 0), Err(GenError::InvalidConfig(_))));
        let cfg = GenConfig {
            period_range: (rat("5"), rat("1")),
            ..GenConfig::default()
        };
        assert!(matches!(generate(&cfg, 0), Err(GenError::InvalidConfig(_))));
    }

    #[test]
    fn uniform_period_mean() {
        let cfg = GenConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(9, 0));
        let n = 10_000;
        let sum: f64 = (0..n).map(|_| cfg.period(&mut rng).to_f64()).sum();
        let mean = sum / n as f64;
        assert!((mean - 305.0).abs() <= 0.03 * 305.0, "mean {mean}");
    }

    #[test]
    fn quantized_to_denominator() {
        let ts = generate(&GenConfig::default(), 5).unwrap();
        for t in ts.tasks() {
            let scaled = t.period() * Rational::from(1_000_000u64);
            assert!(scaled.is_integer());
        }
    }
}
