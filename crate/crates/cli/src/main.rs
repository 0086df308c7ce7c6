use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mote::harness::{run_comparison, ExperimentConfig, SpeedModeChoice};
use mote::oracle::validate_trace;
use mote::rational::{self, Rational};
use mote::sim::{Arrivals, MoteScope};
use mote::workload::{Interval, SeededAcets};
use mote::{
    edf_min_speed, energy_of_trace, offline_speed, required_processors, simulate, Error, IdlePolicy, Method,
    PlatformSpec, PowerModel, SimConfig, TaskSystem, Trace, WorstCase,
};

/// Environment variable holding the worker-thread count for `experiment`.
const WORKERS_VAR: &str = "MOTE_WORKERS";

#[derive(Parser)]
#[command(
    name = "mote",
    version,
    about = "Energy-aware global EDF scheduling on DVS multiprocessors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print processor count, speed bounds and the privileged set of a task system.
    Analyze(AnalyzeArgs),
    /// Simulate one task system under one method and emit the trace.
    Simulate(SimulateArgs),
    /// Run a batch energy comparison.
    Experiment(ExperimentArgs),
    /// Check a trace against the scheduling contracts.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct PlatformArgs {
    /// Processor count (default: enough for the system at full speed).
    #[arg(long)]
    processors: Option<usize>,
    /// Power model preset (tm5400, sa1100, cubic) or JSON file.
    #[arg(long, default_value = "sa1100")]
    model: String,
    /// Allow any speed in [s_min, 1] instead of the model's operating points.
    #[arg(long)]
    continuous: bool,
    /// Lowest speed in continuous mode.
    #[arg(long, default_value = "1/10", value_parser = parse_rational)]
    s_min: Rational,
    #[arg(long, value_enum, default_value_t = Idle::SMin)]
    idle: Idle,
}

#[derive(Clone, Copy, ValueEnum)]
enum Idle {
    /// Idle processors draw the power of the lowest speed.
    SMin,
    /// Idle processors draw nothing.
    Zero,
}

impl From<Idle> for IdlePolicy {
    fn from(i: Idle) -> IdlePolicy {
        match i {
            Idle::SMin => IdlePolicy::IdleAtSmin,
            Idle::Zero => IdlePolicy::IdleZeroPower,
        }
    }
}

impl PlatformArgs {
    fn model(&self) -> mote::Result<PowerModel> {
        PowerModel::resolve(&self.model)
    }

    fn build(&self, ts: &TaskSystem) -> mote::Result<(PlatformSpec, PowerModel)> {
        let m = match self.processors {
            Some(m) => m,
            None => required_processors(ts)?,
        };
        let model = self.model()?;
        let platform = if self.continuous {
            PlatformSpec::continuous(m, self.s_min.clone())?
        } else {
            PlatformSpec::discrete(m, model.clone())?
        };
        Ok((platform.with_idle(self.idle.into()), model))
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Task-set JSON file.
    tasks: PathBuf,
    #[command(flatten)]
    platform: PlatformArgs,
    /// Emit JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum TraceFormat {
    Csv,
    Json,
}

#[derive(Args)]
struct SimulateArgs {
    tasks: PathBuf,
    #[arg(long, value_parser = parse_method)]
    method: Method,
    #[command(flatten)]
    platform: PlatformArgs,
    /// Simulation end (default: one hyperperiod).
    #[arg(long, value_parser = parse_rational)]
    horizon: Option<Rational>,
    /// Draw per-job execution times with this seed (default: every job takes its WCET).
    #[arg(long)]
    acet_seed: Option<u64>,
    #[arg(long, default_value = "1/4", value_parser = parse_rational)]
    acet_lo: Rational,
    #[arg(long, default_value = "1", value_parser = parse_rational)]
    acet_hi: Rational,
    /// Restrict reclaiming to jobs of non-privileged tasks.
    #[arg(long)]
    non_privileged_only: bool,
    #[arg(long, value_enum, default_value_t = TraceFormat::Csv)]
    format: TraceFormat,
    /// Output file (default: stdout).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    systems: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated power models.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    /// Comma-separated methods; SMAX is always required.
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    methods: Option<Vec<Method>>,
    /// Any speed in [s_min, 1]. Without --config or --models this prices energy with the cubic model.
    #[arg(long)]
    continuous: bool,
    #[arg(long, value_parser = parse_rational)]
    s_min: Option<Rational>,
    #[arg(long, value_enum)]
    idle: Option<Idle>,
    #[arg(long)]
    non_privileged_only: bool,
    #[arg(long, value_parser = parse_rational)]
    transition_inflation: Option<Rational>,
    #[arg(long)]
    no_validate: bool,
    #[arg(long)]
    report_json: Option<PathBuf>,
    #[arg(long)]
    report_csv: Option<PathBuf>,
    #[arg(long)]
    summary_csv: Option<PathBuf>,
    /// Tidy CSV (system, method, model, savings) for plotting.
    #[arg(long)]
    emit_plot_data: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Trace file (.json, or .csv with --horizon).
    trace: PathBuf,
    #[arg(long)]
    tasks: PathBuf,
    #[command(flatten)]
    platform: PlatformArgs,
    /// Priority split; default is the value recorded in a JSON trace, else 1.
    #[arg(long)]
    k_opt: Option<usize>,
    #[arg(long, value_parser = parse_rational)]
    horizon: Option<Rational>,
}

fn parse_rational(s: &str) -> Result<Rational, String> {
    rational::parse(s).map_err(|e| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Exit status for an error: 1 for validation failures, 2 for infeasible
/// configurations, 3 for everything else (I/O, parsing, bad parameters).
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Validation(_) | Error::MalformedTrace(_) => 1,
        Error::Infeasible(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Experiment(a) => experiment(a),
        Command::Validate(a) => validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn write_or_print(out: Option<&Path>, text: &str) -> mote::Result<()> {
    match out {
        Some(p) => Ok(std::fs::write(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn analyze(args: AnalyzeArgs) -> mote::Result<()> {
    let ts = TaskSystem::load(&args.tasks)?;
    let (platform, _) = args.platform.build(&ts)?;
    let m = platform.m;
    let edf = edf_min_speed(&ts, m)?;
    let off = offline_speed(&ts, m, &platform.s_min)?;
    let applied = platform.admissible(&off.speed)?;
    if args.json {
        let value = serde_json::json!({
            "n": ts.len(),
            "lambda_sum": rational::format(&ts.density_sum()),
            "lambda_max": rational::format(&ts.max_density()),
            "m": m,
            "edf_speed": rational::format(&edf),
            "s_ol": rational::format(&off.speed),
            "s_ol_applied": rational::format(&applied),
            "k_opt": off.k_opt,
            "privileged_ranks": off.privileged().collect::<Vec<_>>(),
        });
        println!("{}", serde_json::to_string_pretty(&value)?);
        return Ok(());
    }
    let show = |r: &Rational| format!("{} ({:.4})", rational::format(r), rational::to_f64(r));
    println!("tasks        {}", ts.len());
    println!("lambda_sum   {}", show(&ts.density_sum()));
    println!("lambda_max   {}", show(&ts.max_density()));
    println!("processors   {m}");
    println!("edf speed    {}", show(&edf));
    println!("s_ol         {}", show(&off.speed));
    println!("applied      {}", show(&applied));
    println!("k_opt        {}", off.k_opt);
    let ids: Vec<String> = off.privileged().map(|r| ts.task(r).id.to_string()).collect();
    println!("privileged   [{}]", ids.join(", "));
    Ok(())
}

fn simulate_cmd(args: SimulateArgs) -> mote::Result<()> {
    let ts = TaskSystem::load(&args.tasks)?;
    let (platform, model) = args.platform.build(&ts)?;
    let mut cfg = SimConfig::hyperperiod(&ts, args.method)?;
    if let Some(h) = args.horizon {
        cfg.horizon = h;
    }
    cfg.arrivals = Arrivals::SynchronousPeriodic;
    if args.non_privileged_only {
        cfg.mote_scope = MoteScope::NonPrivileged;
    }
    let trace = match args.acet_seed {
        Some(seed) => {
            let acets = SeededAcets::new(seed, Interval::new(args.acet_lo, args.acet_hi));
            simulate(&ts, &platform, &cfg, &acets)?
        }
        None => simulate(&ts, &platform, &cfg, &WorstCase)?,
    };
    let text = match args.format {
        TraceFormat::Csv => trace.to_csv(),
        TraceFormat::Json => trace.to_json()? + "\n",
    };
    write_or_print(args.out.as_deref(), &text)?;
    if let Ok(energy) = energy_of_trace(&trace, &model, &platform) {
        eprintln!(
            "energy {energy:.3} ({}), deadline misses {}",
            model.name(),
            trace.misses()
        );
    }
    if trace.misses() > 0 {
        return Err(Error::Validation(format!("{} deadline misses", trace.misses())));
    }
    Ok(())
}

fn experiment(args: ExperimentArgs) -> mote::Result<()> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(n) = args.systems {
        cfg.systems = n;
    }
    if let Some(s) = args.seed {
        cfg.gen.seed = s;
    }
    let models_given = args.models.is_some();
    if let Some(m) = args.models {
        cfg.power_models = m;
    }
    if let Some(m) = args.methods {
        cfg.methods = m;
    }
    if args.continuous {
        cfg.speed_mode = SpeedModeChoice::Continuous;
        if args.config.is_none() && !models_given {
            cfg.power_models = vec!["cubic".into()];
        }
    }
    if let Some(s) = args.s_min {
        cfg.s_min = s;
    }
    if let Some(i) = args.idle {
        cfg.idle_policy = i.into();
    }
    if args.non_privileged_only {
        cfg.mote_privileged = false;
    }
    if let Some(d) = args.transition_inflation {
        cfg.transition_inflation = d;
    }
    if args.no_validate {
        cfg.validate = false;
    }
    let out = &mut cfg.output;
    out.report_json = args.report_json.or(out.report_json.take());
    out.report_csv = args.report_csv.or(out.report_csv.take());
    out.summary_csv = args.summary_csv.or(out.summary_csv.take());
    out.plot_data = args.emit_plot_data.or(out.plot_data.take());

    let workers = match std::env::var(WORKERS_VAR) {
        Ok(v) => v
            .parse::<usize>()
            .map_err(|_| Error::InvalidParams(format!("{WORKERS_VAR}={v:?} is not a thread count")))?,
        Err(_) => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParams(e.to_string()))?;
    let report = pool.install(|| run_comparison(&cfg))?;
    report.write_outputs(&cfg.output)?;

    println!(
        "{:<10} {:<14} {:>12} {:>10} {:>8}",
        "model", "method", "savings %", "std", "systems"
    );
    for s in &report.summary {
        println!(
            "{:<10} {:<14} {:>12.2} {:>10.2} {:>8}",
            s.model, s.method, s.mean_savings, s.std_savings, s.systems
        );
    }
    let failed: Vec<_> = report.failures().collect();
    if !failed.is_empty() {
        for row in &failed {
            eprintln!(
                "system {} (seed {}): {}",
                row.system,
                row.seed,
                row.error.as_deref().unwrap_or("")
            );
        }
        return Err(Error::Validation(format!(
            "{} of {} systems failed",
            failed.len(),
            cfg.systems
        )));
    }
    Ok(())
}

fn load_trace(path: &Path, horizon: Option<Rational>, m: usize) -> mote::Result<Trace> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let horizon = horizon.ok_or_else(|| Error::InvalidParams("CSV traces need --horizon".into()))?;
        Trace::from_csv(&std::fs::read_to_string(path)?, horizon, m)
    } else {
        let mut trace = Trace::load_json(path)?;
        if let Some(h) = horizon {
            trace.horizon = h;
        }
        Ok(trace)
    }
}

fn validate(args: ValidateArgs) -> mote::Result<()> {
    let ts = TaskSystem::load(&args.tasks)?;
    let (mut platform, _) = args.platform.build(&ts)?;
    let trace = load_trace(&args.trace, args.horizon, platform.m)?;
    if args.platform.processors.is_none() {
        platform.m = trace.m;
    }
    let k_opt = args.k_opt.unwrap_or(trace.k_opt);
    let report = validate_trace(&trace, &ts, &platform, k_opt)?;
    println!("{}", report.to_json()?);
    if !report.ok {
        return Err(Error::Validation(report.summary()));
    }
    Ok(())
}
