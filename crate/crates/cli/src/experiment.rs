//! Bound statistics over batches of generated task systems.
//!
//! Two scenarios. `period-sweep` keeps one utilization class, draws periods
//! from the default range, and groups tasks into period bins whose upper
//! edges are the sweep points. `util-sweep` gives every task one fixed period
//! and sweeps the utilization class.

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use hetsched::bounds::{bound_violations, compute_bounds, Mode};
use hetsched::seed::derive_seed;
use hetsched::simulator::{response_times, simulate, ArrivalSource, Policy};
use hetsched::taskgen::{generate, GenConfig, PeriodMode, UtilClass};
use hetsched::Rational;

use crate::Stop;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    UtilSweep,
    PeriodSweep,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Scenario {
    /// Points are utilization class names.
    UtilSweep { period: Rational },
    /// Points are upper edges of period bins.
    PeriodSweep { class: UtilClass },
}

fn default_sets() -> usize {
    1000
}

fn default_multiplier() -> Rational {
    Rational::from(50)
}

/// Experiment description as read from a spec file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    pub scenario: ScenarioKind,
    /// Fixed period, util-sweep only.
    #[serde(default)]
    pub period: Option<Rational>,
    /// Utilization class, period-sweep only.
    #[serde(default)]
    pub class: Option<UtilClass>,
    #[serde(default)]
    pub points: Vec<String>,
    #[serde(default = "default_sets")]
    pub sets_per_point: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub simulate: bool,
    /// Simulation horizon as a multiple of the largest period.
    #[serde(default = "default_multiplier")]
    pub horizon_multiplier: Rational,
}

pub struct ExperimentSpec {
    pub scenario: Scenario,
    pub points: Vec<String>,
    pub sets_per_point: usize,
    pub seed: u64,
    pub simulate: bool,
    pub horizon_multiplier: Rational,
}

#[derive(Args)]
pub struct ExperimentArgs {
    /// JSON experiment description; flags below override its fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, value_enum)]
    scenario: Option<ScenarioKind>,
    /// Fixed period for util-sweep.
    #[arg(long)]
    period: Option<Rational>,
    /// Utilization class for period-sweep.
    #[arg(long)]
    class: Option<UtilClass>,
    /// Comma-separated sweep points.
    #[arg(long, value_delimiter = ',')]
    points: Option<Vec<String>>,
    #[arg(long)]
    sets: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also simulate each system under GEDF-H and check the bounds.
    #[arg(long)]
    simulate: bool,
    #[arg(long)]
    horizon_multiplier: Option<Rational>,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
}

/// One evaluated sweep point.
enum Point {
    Class(UtilClass),
    /// Tasks with period in `(lo, hi]`, or `[lo, hi]` for the first bin.
    Bin { lo: Rational, hi: Rational, closed_below: bool },
}

impl ExperimentSpec {
    fn from_args(args: &ExperimentArgs) -> Result<Self> {
        let mut file = match &args.spec {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
                let file: SpecFile =
                    serde_json::from_str(&text).map_err(|e| anyhow!("{}: {e}", path.display()))?;
                if args.scenario.is_some_and(|s| s != file.scenario) {
                    bail!("--scenario disagrees with the --spec file");
                }
                file
            }
            None => SpecFile {
                scenario: args.scenario.unwrap_or(ScenarioKind::PeriodSweep),
                period: None,
                class: None,
                points: Vec::new(),
                sets_per_point: default_sets(),
                seed: 0,
                simulate: false,
                horizon_multiplier: default_multiplier(),
            },
        };
        if let Some(p) = &args.period {
            file.period = Some(p.clone());
        }
        if let Some(c) = args.class {
            file.class = Some(c);
        }
        if let Some(points) = &args.points {
            file.points = points.clone();
        }
        if let Some(n) = args.sets {
            file.sets_per_point = n;
        }
        if let Some(s) = args.seed {
            file.seed = s;
        }
        if let Some(h) = &args.horizon_multiplier {
            file.horizon_multiplier = h.clone();
        }
        file.simulate |= args.simulate;
        let scenario = match file.scenario {
            ScenarioKind::UtilSweep => {
                if file.class.is_some() {
                    bail!("util-sweep takes a period, not a utilization class");
                }
                Scenario::UtilSweep {
                    period: file.period.unwrap_or_else(|| Rational::from(100)),
                }
            }
            ScenarioKind::PeriodSweep => {
                if file.period.is_some() {
                    bail!("period-sweep takes a utilization class, not a period");
                }
                Scenario::PeriodSweep {
                    class: file.class.unwrap_or(UtilClass::Medium),
                }
            }
        };
        if file.points.is_empty() {
            file.points = match scenario {
                Scenario::UtilSweep { .. } => UtilClass::ALL.iter().map(|c| c.name().to_string()).collect(),
                Scenario::PeriodSweep { .. } => (1..=6).map(|k| (k * 100).to_string()).collect(),
            };
        }
        Ok(ExperimentSpec {
            scenario,
            points: file.points,
            sets_per_point: file.sets_per_point,
            seed: file.seed,
            simulate: file.simulate,
            horizon_multiplier: file.horizon_multiplier,
        })
    }

    fn validate(&self) -> Result<Vec<Point>> {
        if self.sets_per_point == 0 {
            bail!("sets per point must be at least 1");
        }
        if !self.horizon_multiplier.is_positive() {
            bail!("horizon multiplier must be positive");
        }
        let base = GenConfig::default();
        match &self.scenario {
            Scenario::UtilSweep { period } => {
                if !period.is_positive() {
                    bail!("period must be positive");
                }
                self.points
                    .iter()
                    .map(|p| p.parse::<UtilClass>().map(Point::Class).map_err(|e| anyhow!(e)))
                    .collect()
            }
            Scenario::PeriodSweep { .. } => {
                let (lo, hi) = base.period_range;
                let mut prev = lo.clone();
                let mut out = Vec::new();
                for (i, p) in self.points.iter().enumerate() {
                    let edge: Rational = p.parse().map_err(|e| anyhow!("bad period point `{p}`: {e}"))?;
                    if edge < prev || (i > 0 && edge == prev) || edge > hi {
                        bail!("period points must increase within [{lo}, {hi}], got `{p}`");
                    }
                    out.push(Point::Bin {
                        lo: prev.clone(),
                        hi: edge.clone(),
                        closed_below: i == 0,
                    });
                    prev = edge;
                }
                Ok(out)
            }
        }
    }

    fn label(&self) -> String {
        match &self.scenario {
            Scenario::UtilSweep { period } => format!("util-sweep@{period}"),
            Scenario::PeriodSweep { class } => format!("period-sweep@{}", class.name()),
        }
    }

    fn generator(&self, point: &Point, point_index: usize) -> GenConfig {
        let base = GenConfig {
            seed: derive_seed(self.seed, point_index as u64),
            ..GenConfig::default()
        };
        match (&self.scenario, point) {
            (Scenario::UtilSweep { period }, Point::Class(c)) => GenConfig {
                util_class: *c,
                period_mode: PeriodMode::Fixed(period.clone()),
                ..base
            },
            (Scenario::PeriodSweep { class }, _) => GenConfig {
                util_class: *class,
                ..base
            },
            (Scenario::UtilSweep { .. }, Point::Bin { .. }) => unreachable!("validated points"),
        }
    }
}

impl Point {
    fn contains(&self, period: &Rational) -> bool {
        match self {
            Point::Class(_) => true,
            Point::Bin { lo, hi, closed_below } => period <= hi && (period > lo || (*closed_below && period == lo)),
        }
    }
}

/// Per-set contribution to one row.
#[derive(Default)]
struct SetStats {
    tasks: usize,
    bound_max: Option<Rational>,
    bound_min: Option<Rational>,
    bound_sum: f64,
    ratio_max: Option<Rational>,
    ratio_min: Option<Rational>,
    ratio_sum: f64,
    obs_max: Option<Rational>,
    violations: usize,
}

fn keep_max(slot: &mut Option<Rational>, v: &Rational) {
    if slot.as_ref().is_none_or(|cur| v > cur) {
        *slot = Some(v.clone());
    }
}

fn keep_min(slot: &mut Option<Rational>, v: &Rational) {
    if slot.as_ref().is_none_or(|cur| v < cur) {
        *slot = Some(v.clone());
    }
}

fn evaluate_set(spec: &ExperimentSpec, config: &GenConfig, point: &Point, index: u64) -> Result<SetStats> {
    let tasks = generate(config, index)?;
    let report = compute_bounds(&tasks, &config.platform, Mode::Preemptive)?;
    let mut s = SetStats::default();
    for t in tasks.tasks().iter().filter(|t| point.contains(t.period())) {
        let bound = &report.per_task_bound[&t.id()];
        let ratio = bound / t.period();
        s.tasks += 1;
        s.bound_sum += bound.to_f64();
        s.ratio_sum += ratio.to_f64();
        keep_max(&mut s.bound_max, bound);
        keep_min(&mut s.bound_min, bound);
        keep_max(&mut s.ratio_max, &ratio);
        keep_min(&mut s.ratio_min, &ratio);
    }
    if spec.simulate {
        let horizon = tasks.max_period().map_or_else(Rational::one, |p| p * &spec.horizon_multiplier);
        let trace = simulate(
            &tasks,
            &config.platform,
            &ArrivalSource::Periodic,
            Policy::GedfHPreemptive,
            &horizon,
        )?;
        let in_point = |id| tasks.get(id).is_some_and(|t| point.contains(t.period()));
        for (id, r) in response_times(&trace) {
            if let (true, Some(m)) = (in_point(id), &r.max) {
                keep_max(&mut s.obs_max, m);
            }
        }
        s.violations = bound_violations(&trace, &report)
            .iter()
            .filter(|v| in_point(v.job.task))
            .count();
    }
    Ok(s)
}

fn fmt6(x: f64) -> String {
    format!("{x:.6}")
}

fn fmt_opt(x: &Option<Rational>) -> String {
    x.as_ref().map_or_else(String::new, |v| fmt6(v.to_f64()))
}

fn row(spec: &ExperimentSpec, point: &Point, point_index: usize) -> Result<Vec<String>> {
    let config = spec.generator(point, point_index);
    let sets: Vec<SetStats> = (0..spec.sets_per_point as u64)
        .into_par_iter()
        .map(|i| evaluate_set(spec, &config, point, i))
        .collect::<Result<_>>()?;
    let mut total = SetStats::default();
    for s in &sets {
        total.tasks += s.tasks;
        total.bound_sum += s.bound_sum;
        total.ratio_sum += s.ratio_sum;
        total.violations += s.violations;
        for (slot, v, max) in [
            (&mut total.bound_max, &s.bound_max, true),
            (&mut total.bound_min, &s.bound_min, false),
            (&mut total.ratio_max, &s.ratio_max, true),
            (&mut total.ratio_min, &s.ratio_min, false),
            (&mut total.obs_max, &s.obs_max, true),
        ] {
            if let Some(v) = v {
                if max {
                    keep_max(slot, v)
                } else {
                    keep_min(slot, v)
                }
            }
        }
    }
    let avg = |sum: f64| {
        if total.tasks == 0 {
            String::new()
        } else {
            fmt6(sum / total.tasks as f64)
        }
    };
    let mut fields = vec![
        spec.label(),
        spec.points[point_index].clone(),
        spec.sets_per_point.to_string(),
        fmt_opt(&total.bound_max),
        avg(total.bound_sum),
        fmt_opt(&total.bound_min),
        fmt_opt(&total.ratio_max),
        avg(total.ratio_sum),
        fmt_opt(&total.ratio_min),
    ];
    if spec.simulate {
        fields.push(fmt_opt(&total.obs_max));
        fields.push(total.violations.to_string());
    }
    Ok(fields)
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("HETSCHED_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| anyhow!("HETSCHED_THREADS must be a positive integer, got `{v}`"))?;
        builder = builder.num_threads(n);
    }
    Ok(builder.build()?)
}

pub fn run(args: &ExperimentArgs) -> Result<(), Stop> {
    let spec = ExperimentSpec::from_args(args)?;
    let points = spec.validate()?;
    let pool = thread_pool()?;
    let rows = pool.install(|| {
        points
            .iter()
            .enumerate()
            .map(|(i, p)| row(&spec, p, i))
            .collect::<Result<Vec<_>>>()
    })?;

    let sink: Box<dyn Write> = match &args.csv {
        Some(path) => Box::new(fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec![
        "scenario",
        "point",
        "n_sets",
        "bound_max_ms",
        "bound_avg_ms",
        "bound_min_ms",
        "ratio_max",
        "ratio_avg",
        "ratio_min",
    ];
    if spec.simulate {
        header.extend(["obs_max_ms", "violations"]);
    }
    w.write_record(&header).map_err(anyhow::Error::from)?;
    for r in &rows {
        w.write_record(r).map_err(anyhow::Error::from)?;
    }
    w.flush().map_err(anyhow::Error::from)?;
    if spec.simulate && rows.iter().any(|r| r.last().is_some_and(|v| v != "0")) {
        return Err(Stop::Violation);
    }
    Ok(())
}
