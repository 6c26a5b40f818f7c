use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use dispatch_sim::demo::{run_demo, DemoExpectation};
use dispatch_sim::model::AdmissionPolicy;
use dispatch_sim::output::{write_metrics_csv, write_sweep_csv};
use dispatch_sim::scenario::{self, load_scenario, serialize_normalized, Scheduler};
use dispatch_sim::{run_sweep, RunMetrics, ScenarioConfig};

const EXIT_INPUT: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_MISMATCH: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "dispatch-sim", version, about = "Cloud job dispatch simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario and write summary.csv, rejections.csv, jobs.csv and plot series.
    Run(RunArgs),
    /// Run the scenario once per submitted-job level and write an aggregated rejections.csv.
    Sweep(SweepArgs),
    /// Replay the five-job shortest-job-first example and check its schedule.
    Demo(DemoArgs),
    /// Load and validate a scenario, printing it with durations in ms.
    Validate(ScenarioArg),
}

#[derive(Args, Debug)]
struct ScenarioArg {
    /// Scenario file; bundled names (e.g. table6_demo.scn) work without a file on disk.
    #[arg(value_name = "SCENARIO", required_unless_present = "scenario_flag")]
    scenario: Option<PathBuf>,
    #[arg(long = "scenario", value_name = "PATH", conflicts_with = "scenario")]
    scenario_flag: Option<PathBuf>,
}

impl ScenarioArg {
    fn path(&self) -> &Path {
        self.scenario
            .as_deref()
            .or(self.scenario_flag.as_deref())
            .expect("clap enforces one of the two")
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SchedulerArg {
    Rr,
    Sjf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Args, Debug)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    scheduler: Option<SchedulerArg>,
    #[arg(long, value_enum)]
    migration: Option<Toggle>,
    /// Deadline in the scenario's time unit; switches admission to deadline mode.
    #[arg(long)]
    deadline: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also print a JSON summary on stdout.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Submitted job counts, e.g. 5,10,15,20,25,30.
    #[arg(long, value_delimiter = ',', required = true)]
    sweep: Vec<u64>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Debug)]
struct DemoArgs {
    #[arg(long)]
    json: bool,
    /// Alternative expected-values file (`order = ...`, `waits = id:wait ...`).
    #[arg(long, value_name = "PATH")]
    expected: Option<PathBuf>,
}

/// Error tagged with the exit code it maps to.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

fn input(err: anyhow::Error) -> Failure {
    Failure { code: EXIT_INPUT, err }
}

fn runtime(err: anyhow::Error) -> Failure {
    Failure { code: EXIT_RUNTIME, err }
}

fn load(path: &Path) -> Result<ScenarioConfig> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            let builtin = path
                .file_name()
                .and_then(|n| n.to_str())
                .filter(|_| path.components().count() == 1)
                .and_then(scenario::builtin);
            match builtin {
                Some(t) => t.to_string(),
                None => return Err(anyhow!("{}: {e}", path.display())),
            }
        }
    };
    load_scenario(&text).map_err(|e| anyhow!("{}:{e}", path.display()))
}

fn apply(cfg: &mut ScenarioConfig, o: &Overrides) -> Result<()> {
    if let Some(seed) = o.seed {
        cfg.seed = seed;
    }
    if let Some(s) = o.scheduler {
        cfg.policy.scheduler = match s {
            SchedulerArg::Rr => Scheduler::RoundRobin,
            SchedulerArg::Sjf => Scheduler::ShortestJobFirst,
        };
    }
    if let Some(m) = o.migration {
        cfg.policy.migration = matches!(m, Toggle::On);
    }
    if let Some(d) = o.deadline {
        if !(d > 0.0 && d.is_finite()) {
            bail!("--deadline must be positive");
        }
        cfg.policy.admission = AdmissionPolicy::Deadline {
            deadline_ms: cfg.time_unit.to_ms(d),
        };
    }
    Ok(())
}

fn json_summary(m: &RunMetrics) -> serde_json::Value {
    let summaries: serde_json::Map<String, serde_json::Value> = m
        .summaries()
        .into_iter()
        .map(|(name, s)| {
            let u = |v: f64| m.time_unit.from_ms(v);
            (
                name.to_string(),
                serde_json::json!({ "avg": u(s.avg), "min": u(s.min), "max": u(s.max), "count": s.count }),
            )
        })
        .collect();
    serde_json::json!({
        "scenario": m.scenario,
        "time_unit": m.time_unit.as_str(),
        "submitted": m.submitted,
        "completed": m.completed,
        "rejected": m.rejected,
        "percent": m.rejection_percentage(),
        "migrations": m.migrations.len(),
        "summaries": summaries,
    })
}

fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let mut cfg = load(args.scenario.path()).map_err(input)?;
    apply(&mut cfg, &args.overrides).map_err(input)?;
    let m = dispatch_sim::run(&cfg).map_err(|e| runtime(e.into()))?;
    let files = write_metrics_csv(&m, &args.overrides.out).map_err(|e| runtime(e.into()))?;
    eprintln!(
        "{}: {} submitted, {} rejected; wrote {} files to {}",
        m.scenario,
        m.submitted,
        m.rejected,
        files.len(),
        args.overrides.out.display()
    );
    if args.overrides.json {
        println!("{}", json_summary(&m));
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), Failure> {
    let levels = &args.sweep;
    if levels.is_empty() || levels.contains(&0) || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(input(anyhow!("--sweep must be a non-empty, positive, strictly increasing list")));
    }
    let mut cfg = load(args.scenario.path()).map_err(input)?;
    apply(&mut cfg, &args.overrides).map_err(input)?;
    if cfg.user_bases.is_empty() {
        return Err(input(anyhow!("sweeps scale user-base traffic; the scenario has no user bases")));
    }
    let runs = run_sweep(&cfg, levels).map_err(|e| runtime(e.into()))?;
    write_sweep_csv(&runs, &args.overrides.out).map_err(|e| runtime(e.into()))?;
    for m in &runs {
        eprintln!(
            "{} jobs: {} rejected ({}%)",
            m.submitted,
            m.rejected,
            m.rejection_percentage().unwrap_or(0)
        );
    }
    if args.overrides.json {
        let rows: Vec<_> = runs.iter().map(json_summary).collect();
        println!("{}", serde_json::Value::Array(rows));
    }
    Ok(())
}

fn cmd_demo(args: &DemoArgs) -> Result<(), Failure> {
    let expected = match &args.expected {
        None => DemoExpectation::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading {}", p.display()))
                .map_err(input)?;
            DemoExpectation::parse(&text)
                .map_err(|e| input(anyhow!("{}: {e}", p.display())))?
        }
    };
    let result = run_demo(expected).map_err(|e| runtime(e.into()))?;
    if args.json {
        println!("{}", serde_json::to_string(&result).expect("serializable"));
    } else {
        print!("{}", result.render());
    }
    if result.pass {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_MISMATCH,
            err: anyhow!("schedule does not match the expected values"),
        })
    }
}

fn cmd_validate(args: &ScenarioArg) -> Result<(), Failure> {
    let cfg = load(args.path()).map_err(input)?;
    print!("{}", serialize_normalized(&cfg));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Demo(a) => cmd_demo(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}
