use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use hetsched::bounds::{bound_violations, compute_bounds, BoundReport, BoundViolation, Mode};
use hetsched::model::{validate_task_system, FeasibilityReport};
use hetsched::oracle::{verify_trace, PropertyReport};
use hetsched::seed::GENERATOR_NAME;
use hetsched::simulator::{
    migration_count, read_trace_jsonl, response_times, simulate, write_trace_jsonl, ArrivalSource, Policy,
    ScheduleTrace, Selector,
};
use hetsched::taskgen::{generate, GenConfig, PeriodMode, UtilClass};
use hetsched::{Rational, SystemFile, TaskId};

mod experiment;

const EXIT_PARSE: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_VIOLATION: u8 = 3;

#[derive(Parser)]
#[command(name = "hetsched", version, about = "GEDF-H analysis and simulation on uniform heterogeneous multiprocessors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Feasibility checks and response-time bounds for a task-system file.
    Analyze {
        file: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Simulate a task system and report response times.
    Simulate {
        file: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Write the schedule as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Check the lag properties on a simulated or replayed trace.
    Verify {
        file: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Check this JSON-lines trace instead of simulating.
        #[arg(long)]
        replay: Option<PathBuf>,
        /// Maximum number of pivot jobs.
        #[arg(long, default_value_t = 20)]
        pivots: usize,
        #[arg(long)]
        json: bool,
    },
    /// Bound statistics over random task systems, as CSV.
    Experiment(experiment::ExperimentArgs),
    /// Generate random task systems.
    Generate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "medium")]
        class: UtilClass,
        /// Give every task this period instead of drawing one.
        #[arg(long)]
        period: Option<Rational>,
        /// Index of the single system to emit.
        #[arg(long, default_value_t = 0)]
        index: u64,
        /// Emit this many systems as JSON lines after a metadata header.
        #[arg(long)]
        count: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    #[value(name = "gedf-h")]
    GedfH,
    #[value(name = "np-gedf-h")]
    NpGedfH,
    #[value(name = "gedf-plain")]
    GedfPlain,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArrivalArg {
    Periodic,
    Sporadic,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum, default_value = "gedf-h")]
    policy: PolicyArg,
    /// Processor selection for gedf-plain.
    #[arg(long)]
    selector: Option<Selector>,
    /// Defaults to 50 times the largest period.
    #[arg(long)]
    horizon: Option<Rational>,
    #[arg(long, value_enum, default_value = "periodic")]
    arrivals: ArrivalArg,
    /// Largest extra inter-arrival delay, as a fraction of the period.
    #[arg(long, default_value = "1/2")]
    max_extra: Rational,
    /// Explicit release times, `{"<task id>": ["0", "5/2", ...]}`.
    #[arg(long, conflicts_with = "arrivals")]
    releases: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run gedf-plain even when the feasibility checks fail.
    #[arg(long)]
    allow_infeasible: bool,
}

impl RunArgs {
    fn policy(&self) -> Result<Policy> {
        match (self.policy, self.selector) {
            (PolicyArg::GedfPlain, sel) => Ok(Policy::GedfPlain(sel.unwrap_or(Selector::ArbitraryLowestId))),
            (_, Some(_)) => bail!("--selector only applies to --policy gedf-plain"),
            (PolicyArg::GedfH, None) => Ok(Policy::GedfHPreemptive),
            (PolicyArg::NpGedfH, None) => Ok(Policy::GedfHNonpreemptive),
        }
    }

    fn arrivals(&self) -> Result<ArrivalSource> {
        if let Some(path) = &self.releases {
            let text = read(path)?;
            let releases: BTreeMap<TaskId, Vec<Rational>> =
                serde_json::from_str(&text).with_context(|| format!("{}", path.display()))?;
            return Ok(ArrivalSource::Trace { releases });
        }
        Ok(match self.arrivals {
            ArrivalArg::Periodic => ArrivalSource::Periodic,
            ArrivalArg::Sporadic => ArrivalSource::SporadicRandom {
                max_extra: self.max_extra.clone(),
                seed: self.seed,
            },
        })
    }

    fn horizon(&self, system: &SystemFile) -> Result<Rational> {
        let h = match &self.horizon {
            Some(h) => h.clone(),
            None => system
                .tasks
                .max_period()
                .map(|p| p * Rational::from(50))
                .unwrap_or_else(Rational::one),
        };
        if !h.is_positive() {
            bail!("horizon must be positive, got {h}");
        }
        Ok(h)
    }
}

/// Failure kinds that map to distinct exit codes.
#[derive(Debug)]
enum Stop {
    Error(anyhow::Error),
    Infeasible,
    Violation,
}

impl From<anyhow::Error> for Stop {
    fn from(e: anyhow::Error) -> Self {
        Stop::Error(e)
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_system(path: &Path) -> Result<SystemFile> {
    let text = read(path)?;
    SystemFile::from_json(&text).map_err(|e| anyhow!("{}: {e}", path.display()))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            fs::File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn print_feasibility(system: &SystemFile, report: &FeasibilityReport) {
    let p = &system.platform;
    println!(
        "platform: {} processors in {} speed classes, R_sum = {}",
        p.processor_count(),
        p.class_count(),
        report.r_sum
    );
    println!("tasks: {}, U_sum = {}", system.tasks.len(), report.u_sum);
    let mark = |ok: bool| if ok { "ok" } else { "FAILED" };
    println!("  U_sum <= R_sum: {}", mark(report.capacity_ok));
    println!(
        "  u_i <= alpha_max = {}: {}",
        p.alpha_max(),
        mark(report.per_task_speed_ok.values().all(|&ok| ok))
    );
    for c in &report.class_checks {
        println!(
            "  class {}: |Phi_{}| = {} {} |Psi_{}| = {}: {}",
            c.class_index,
            c.class_index,
            c.phi_count,
            if c.ok { "<=" } else { ">" },
            c.class_index,
            c.psi_count,
            mark(c.ok)
        );
    }
    if report.accepted {
        println!("accepted");
    } else {
        println!("rejected:");
        for f in report.failures() {
            println!("  {f}");
        }
    }
}

#[derive(Serialize)]
struct AnalyzeOutput<'a> {
    feasibility: &'a FeasibilityReport,
    bounds: Vec<BoundReport>,
}

fn cmd_analyze(file: &Path, json: bool) -> Result<(), Stop> {
    let system = load_system(file)?;
    let report = validate_task_system(&system.tasks, &system.platform);
    let bounds = if report.accepted {
        [Mode::Preemptive, Mode::Nonpreemptive]
            .into_iter()
            .map(|m| compute_bounds(&system.tasks, &system.platform, m))
            .collect::<Result<Vec<_>, _>>()
            .map_err(anyhow::Error::from)?
    } else {
        Vec::new()
    };
    if json {
        print_json(&AnalyzeOutput {
            feasibility: &report,
            bounds: bounds.clone(),
        })?;
    } else {
        print_feasibility(&system, &report);
        if !bounds.is_empty() {
            println!();
            println!("{:<14} {:>12} {:>12} {:>12}", "mode", "U_bar", "E", "x");
            for b in &bounds {
                println!("{:<14} {:>12} {:>12} {:>12}", b.mode.to_string(), b.u_bar, b.e_term, b.x);
            }
            println!();
            println!(
                "{:>6} {:>12} {:>12} {:>14} {:>14}",
                "task", "period", "u", "bound (pre)", "bound (np)"
            );
            for t in system.tasks.tasks() {
                println!(
                    "{:>6} {:>12} {:>12} {:>14} {:>14}",
                    t.id(),
                    t.period(),
                    t.utilization(),
                    bounds[0].per_task_bound[&t.id()],
                    bounds[1].per_task_bound[&t.id()]
                );
            }
        }
    }
    if report.accepted {
        Ok(())
    } else {
        Err(Stop::Infeasible)
    }
}

/// Runs the simulation after the feasibility gate. Prints the reasons and
/// stops with the infeasible exit code when the gate refuses the run.
fn run_simulation(system: &SystemFile, run: &RunArgs) -> Result<(ScheduleTrace, Policy, Option<BoundReport>), Stop> {
    let policy = run.policy()?;
    let horizon = run.horizon(system)?;
    let arrivals = run.arrivals()?;
    let report = validate_task_system(&system.tasks, &system.platform);
    if !report.accepted && (policy.is_gedf_h() || !run.allow_infeasible) {
        eprintln!("task system rejected:");
        for f in report.failures() {
            eprintln!("  {f}");
        }
        if policy.is_gedf_h() {
            eprintln!("GEDF-H requires an accepted system");
        } else {
            eprintln!("pass --allow-infeasible to run gedf-plain anyway");
        }
        return Err(Stop::Infeasible);
    }
    let bounds = match policy {
        Policy::GedfHPreemptive => Some(Mode::Preemptive),
        Policy::GedfHNonpreemptive => Some(Mode::Nonpreemptive),
        Policy::GedfPlain(_) => None,
    }
    .map(|m| compute_bounds(&system.tasks, &system.platform, m))
    .transpose()
    .map_err(anyhow::Error::from)?;
    let trace = simulate(&system.tasks, &system.platform, &arrivals, policy, &horizon).map_err(anyhow::Error::from)?;
    Ok((trace, policy, bounds))
}

#[derive(Serialize)]
struct TaskSummary {
    id: TaskId,
    completed: usize,
    censored: usize,
    max_response: Option<Rational>,
    mean_response: Option<Rational>,
    responses: Vec<Rational>,
    migrations: u64,
    bound: Option<Rational>,
}

#[derive(Serialize)]
struct SimulateOutput {
    policy: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    selector: Option<Selector>,
    horizon: Rational,
    tasks: Vec<TaskSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bounds: Option<BoundReport>,
    violations: Vec<BoundViolation>,
}

fn cmd_simulate(file: &Path, run: &RunArgs, trace_out: Option<&Path>, json: bool) -> Result<(), Stop> {
    let system = load_system(file)?;
    let (trace, policy, bounds) = run_simulation(&system, run)?;
    if let Some(path) = trace_out {
        let mut w = output(Some(path))?;
        write_trace_jsonl(&trace, &mut w).with_context(|| format!("cannot write {}", path.display()))?;
        w.flush().map_err(anyhow::Error::from)?;
    }
    let rt = response_times(&trace);
    let mig = migration_count(&trace);
    let tasks: Vec<TaskSummary> = system
        .tasks
        .tasks()
        .iter()
        .map(|t| {
            let r = rt.get(&t.id()).cloned().unwrap_or_default();
            TaskSummary {
                id: t.id(),
                completed: r.jobs.len(),
                censored: r.censored,
                max_response: r.max,
                mean_response: r.mean,
                responses: r.jobs.into_iter().map(|(_, x)| x).collect(),
                migrations: mig.get(&t.id()).copied().unwrap_or(0),
                bound: bounds.as_ref().map(|b| b.per_task_bound[&t.id()].clone()),
            }
        })
        .collect();
    let violations = bounds.as_ref().map(|b| bound_violations(&trace, b)).unwrap_or_default();
    let out = SimulateOutput {
        policy: policy.name(),
        selector: match policy {
            Policy::GedfPlain(s) => Some(s),
            _ => None,
        },
        horizon: trace.horizon.clone(),
        tasks,
        bounds,
        violations,
    };
    if json {
        print_json(&out)?;
    } else {
        println!("policy {} over [0, {})", out.policy, out.horizon);
        println!(
            "{:>6} {:>9} {:>8} {:>14} {:>14} {:>14} {:>10}",
            "task", "completed", "censored", "max response", "mean response", "bound", "migrations"
        );
        let show = |x: &Option<Rational>| x.as_ref().map_or("-".to_string(), |v| v.to_string());
        for t in &out.tasks {
            println!(
                "{:>6} {:>9} {:>8} {:>14} {:>14} {:>14} {:>10}",
                t.id,
                t.completed,
                t.censored,
                show(&t.max_response),
                show(&t.mean_response),
                show(&t.bound),
                t.migrations
            );
        }
        if out.bounds.is_some() {
            if out.violations.is_empty() {
                println!("all response times within the bound");
            } else {
                println!("{} jobs exceed the bound:", out.violations.len());
                for v in &out.violations {
                    println!(
                        "  {} released at {}: response {} > bound {}",
                        v.job,
                        v.release,
                        show(&v.response),
                        v.bound
                    );
                }
            }
        }
    }
    if out.violations.is_empty() {
        Ok(())
    } else {
        Err(Stop::Violation)
    }
}

fn cmd_verify(file: &Path, run: &RunArgs, replay: Option<&Path>, pivots: usize, json: bool) -> Result<(), Stop> {
    let system = load_system(file)?;
    let trace = match replay {
        Some(path) => {
            let f = fs::File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
            read_trace_jsonl(BufReader::new(f), &system).map_err(|e| anyhow!("{}: {e}", path.display()))?
        }
        None => run_simulation(&system, run)?.0,
    };
    let report: PropertyReport = verify_trace(&trace, pivots);
    if json {
        print_json(&report)?;
    } else {
        println!("checked {} pivot jobs over [0, {})", report.pivots_checked, trace.horizon);
        for (name, list) in [("P0", &report.p0), ("P1", &report.p1), ("P2", &report.p2)] {
            if list.is_empty() {
                println!("{name}: pass");
            } else {
                println!("{name}: {} violations", list.len());
                for v in list.iter().take(10) {
                    println!("  at {}: {}", v.time, v.detail);
                }
            }
        }
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Stop::Violation)
    }
}

#[derive(Serialize)]
struct BatchHeader<'a> {
    generator: &'static str,
    seed: u64,
    count: u64,
    config: &'a GenConfig,
}

fn cmd_generate(
    seed: u64,
    class: UtilClass,
    period: Option<Rational>,
    index: u64,
    count: Option<u64>,
    out: Option<&Path>,
) -> Result<(), Stop> {
    let config = GenConfig {
        seed,
        util_class: class,
        period_mode: period.map_or(PeriodMode::Uniform, PeriodMode::Fixed),
        ..GenConfig::default()
    };
    let mut w = output(out)?;
    let emit = |w: &mut Box<dyn Write>, i: u64, pretty: bool| -> Result<()> {
        let system = SystemFile {
            tasks: generate(&config, i)?,
            platform: config.platform.clone(),
        };
        if pretty {
            writeln!(w, "{}", system.to_json())?;
        } else {
            writeln!(w, "{}", serde_json::to_string(&system)?)?;
        }
        Ok(())
    };
    match count {
        None => emit(&mut w, index, true)?,
        Some(n) => {
            let header = BatchHeader {
                generator: GENERATOR_NAME,
                seed,
                count: n,
                config: &config,
            };
            writeln!(w, "{}", serde_json::to_string(&header).map_err(anyhow::Error::from)?)
                .map_err(anyhow::Error::from)?;
            for i in 0..n {
                emit(&mut w, i, false)?;
            }
        }
    }
    w.flush().map_err(anyhow::Error::from)?;
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Stop> {
    match cli.command {
        Command::Analyze { file, json } => cmd_analyze(&file, json),
        Command::Simulate { file, run, trace, json } => cmd_simulate(&file, &run, trace.as_deref(), json),
        Command::Verify {
            file,
            run,
            replay,
            pivots,
            json,
        } => cmd_verify(&file, &run, replay.as_deref(), pivots, json),
        Command::Experiment(args) => experiment::run(&args),
        Command::Generate {
            seed,
            class,
            period,
            index,
            count,
            out,
        } => cmd_generate(seed, class, period, index, count, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_PARSE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Stop::Infeasible) => ExitCode::from(EXIT_INFEASIBLE),
        Err(Stop::Violation) => ExitCode::from(EXIT_VIOLATION),
        Err(Stop::Error(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_PARSE)
        }
    }
}
