//! `enermod`: benchmark generation, oracle campaigns, model fitting,
//! estimation, validation, sweeps and design space exploration.

mod commands;

use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use enermod::benchgen::CENTER_WINDOW;
use enermod::sysconfig::ClusterCoord;

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  usage error (unknown subcommand or flag, bad flag value)
  3  missing input file
  4  invalid input (syntax error, invariant violation, unusable data)
  5  runtime failure (simulation, no feasible partition, I/O)

On failure the last line on stderr is machine-parsable:
  error: code=<N> kind=<kind> message=\"<text>\"";

#[derive(Parser)]
#[command(name = "enermod", version, about = "Energy modeling for configurable many-core systems", after_help = EXIT_CODES)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Global {
    /// System configuration (JSON); built-in 2x2 mesh when absent
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// ISA description (JSON); built-in ISA when absent
    #[arg(long, global = true)]
    isa: Option<PathBuf>,
    /// Communication API description (JSON); built-in API when absent
    #[arg(long, global = true)]
    api: Option<PathBuf>,
    /// Oracle parameters (JSON); shipped defaults when absent
    #[arg(long, global = true)]
    params: Option<PathBuf>,
    /// Output root holding benchmarks/, traces/, ledgers/, models/, reports/
    #[arg(long, global = true, env = "ENERMOD_OUTDIR", default_value = "out")]
    outdir: PathBuf,
    /// Worker threads for campaigns (0 = one per core)
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Seed for every random choice
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Write benchmark programs and their manifest
    GenBench(GenBench),
    /// Run a benchmark manifest on the oracle; write traces and ledgers
    Oracle(OracleCmd),
    /// Fit model constants on oracle traces and ledgers
    Fit(FitCmd),
    /// Merge NoC keys by hop count and/or replace packet sizes by a fitted function
    Reduce(ReduceCmd),
    /// Estimate the energy of one trace
    Estimate(EstimateCmd),
    /// Compare model estimates with the oracle on held-out programs
    Validate(ValidateCmd),
    /// Packet-size sweep between two clusters with linear and staircase fits
    SweepNoc(SweepNoc),
    /// Instruction-memory position sweep for the 1-slot and 2-slot NOP bundles
    SweepImem(SweepImem),
    /// Map a dataflow graph onto the system with simulated annealing
    Explore(Explore),
    /// Collect every JSON summary under reports/ into reports/summary.json
    Report,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BenchKind {
    /// Full fitting campaign: instructions, calibration, packet sweeps
    Training,
    /// Every instruction group under every data pattern
    Instr,
    /// Idle, prologue-only and sync benchmarks
    Calibration,
    /// Packet-size sweep between two clusters
    Comm,
    /// Packet-size sweep inside the source cluster
    Local,
    /// Packet-size sweep between every ordered cluster pair, plus calibration
    Pairs,
    /// One bundle at every imem word of a range
    Position,
    /// Held-out streaming applications
    Apps,
}

fn parse_coord(s: &str) -> Result<ClusterCoord, String> {
    let (x, y) = s.split_once(',').ok_or("expected X,Y")?;
    let n = |v: &str| v.trim().parse::<u32>().map_err(|e| format!("{v}: {e}"));
    Ok(ClusterCoord::new(n(x)?, n(y)?))
}

#[derive(Args)]
struct GenBench {
    #[arg(long, value_enum, default_value_t = BenchKind::Training)]
    kind: BenchKind,
    /// Repetitions of the measured bundle or packet
    #[arg(long)]
    reps: Option<u32>,
    /// Smallest packet size in bytes (overrides the API range)
    #[arg(long)]
    min: Option<u32>,
    /// Largest packet size in bytes (overrides the API range)
    #[arg(long)]
    max: Option<u32>,
    /// Packet size step in bytes (overrides the API range)
    #[arg(long)]
    step: Option<u32>,
    /// Source cluster X,Y
    #[arg(long, value_parser = parse_coord, default_value = "0,0")]
    src: ClusterCoord,
    /// Destination cluster X,Y
    #[arg(long, value_parser = parse_coord, default_value = "1,1")]
    dst: ClusterCoord,
    /// Instruction group of a position sweep (default: 1-slot NOP)
    #[arg(long)]
    group: Option<u32>,
    /// First imem word of a position sweep
    #[arg(long, default_value_t = 0)]
    lo: u32,
    /// Last imem word of a position sweep
    #[arg(long, default_value_t = 799)]
    hi: u32,
}

#[derive(Args)]
struct OracleCmd {
    /// Benchmark manifest (default: <outdir>/benchmarks/manifest.csv)
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Level {
    /// Instruction group, pattern and imem decoder depth
    FineExact,
    /// Instruction group and pattern; packets by hops and size
    Fine,
    /// Like fine, packets by cluster pair and size
    FinePairs,
    /// Active/idle per component instance
    ActiveIdle,
    /// Active/idle per component class
    ActiveIdleClass,
    /// Used/unused per component instance
    Binary,
    /// Used/unused per component class
    BinaryClass,
    /// Every distinct event
    Identity,
}

#[derive(Args)]
struct FitCmd {
    /// Benchmark manifest (default: <outdir>/benchmarks/manifest.csv)
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Level::Fine)]
    level: Level,
    /// Model function file; overrides --level
    #[arg(long)]
    function: Option<PathBuf>,
    /// Model name (default: the level name)
    #[arg(long)]
    name: Option<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SizeReducer {
    Linear,
    Staircase,
}

#[derive(Args)]
struct ReduceCmd {
    #[arg(long)]
    model: PathBuf,
    /// Merge cluster-pair NoC keys into hop-count keys
    #[arg(long)]
    hops: bool,
    /// Replace packet-size keys by a fitted function
    #[arg(long, value_enum, required_unless_present = "hops")]
    sizes: Option<SizeReducer>,
    /// Fit on this many sizes around the middle of each range
    #[arg(long)]
    window: Option<usize>,
    /// Output model name (default: <input>-reduced)
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args)]
struct EstimateCmd {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    trace: PathBuf,
}

#[derive(Args)]
struct ValidateCmd {
    /// Model to validate (default: fit the simplified model on the training campaign)
    #[arg(long)]
    model: Option<PathBuf>,
    /// Benchmarks to validate on (default: the held-out applications)
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct SweepNoc {
    #[arg(long, value_parser = parse_coord, default_value = "0,0")]
    src: ClusterCoord,
    /// Destination cluster; equal to --src for the cluster-local path
    #[arg(long, value_parser = parse_coord, default_value = "1,1")]
    dst: ClusterCoord,
    /// Sizes around the middle of the range used for the fits
    #[arg(long, default_value_t = CENTER_WINDOW)]
    window: usize,
}

#[derive(Args)]
struct SweepImem {
    #[arg(long, default_value_t = 0)]
    lo: u32,
    #[arg(long, default_value_t = 799)]
    hi: u32,
}

#[derive(Args)]
struct Explore {
    /// Dataflow graph (default: built-in four-stage pipeline)
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Energy model (default: fit the simplified model on the training campaign)
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    steps: u32,
    /// Starting temperature as a fraction of the starting cost
    #[arg(long, default_value_t = 0.05)]
    initial_temp: f64,
    /// Geometric cooling factor per step
    #[arg(long, default_value_t = 0.999)]
    cooling: f64,
    /// Independent annealing chains
    #[arg(long, default_value_t = 8)]
    chains: u32,
    #[arg(long, default_value_t = 1.0)]
    energy_weight: f64,
    #[arg(long, default_value_t = 0.0)]
    time_weight: f64,
    /// Largest granularity multiplier (a power of two)
    #[arg(long, default_value_t = 4)]
    max_granularity: u32,
    /// Largest clone factor of a stateless actor
    #[arg(long, default_value_t = 4)]
    max_clones: u32,
}

/// A failed run: exit code, short kind and message.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl Failure {
    pub fn new(code: u8, kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            kind,
            message: message.into(),
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new(4, "invalid", message)
    }

    /// Prefixes the message with the file it concerns.
    pub fn in_file(mut self, path: &Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self
    }
}

impl From<enermod::Error> for Failure {
    fn from(e: enermod::Error) -> Self {
        use enermod::Error::*;
        let (code, kind) = match &e {
            Io { source, .. } if source.kind() == ErrorKind::NotFound => (3, "missing-file"),
            Io { .. } => (5, "io"),
            Syntax { .. } => (4, "syntax"),
            Invalid { .. } => (4, "invalid"),
            Unmapped(_) => (4, "unmapped"),
            DomainMismatch(_) => (4, "domain-mismatch"),
            Underdetermined(_) => (4, "underdetermined"),
            Simulation(_) => (5, "simulation"),
            Infeasible(_) => (5, "infeasible"),
        };
        Self::new(code, kind, e.to_string())
    }
}

pub type Outcome<T> = Result<T, Failure>;

pub fn read_text(path: &Path) -> Outcome<String> {
    fs::read_to_string(path).map_err(|e| {
        let (code, kind) = if e.kind() == ErrorKind::NotFound {
            (3, "missing-file")
        } else {
            (5, "io")
        };
        Failure::new(code, kind, format!("{}: {e}", path.display()))
    })
}

/// Files produced by a subcommand, relative to the output root. Nothing is
/// written until the whole subcommand has succeeded.
#[derive(Default)]
pub struct Artifacts {
    files: Vec<(PathBuf, String)>,
}

impl Artifacts {
    pub fn add(&mut self, rel: impl Into<PathBuf>, content: String) {
        self.files.push((rel.into(), content));
    }

    fn write(&self, root: &Path) -> Outcome<()> {
        for (rel, content) in &self.files {
            let path = root.join(rel);
            let io = |e: std::io::Error| Failure::new(5, "io", format!("{}: {e}", path.display()));
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir).map_err(io)?;
            }
            fs::write(&path, content).map_err(io)?;
        }
        Ok(())
    }
}

fn dispatch(cli: &Cli, out: &mut Artifacts) -> Outcome<String> {
    let g = &cli.global;
    match &cli.command {
        Command::GenBench(a) => commands::gen_bench(g, a, out),
        Command::Oracle(a) => commands::oracle(g, a, out),
        Command::Fit(a) => commands::fit(g, a, out),
        Command::Reduce(a) => commands::reduce(g, a, out),
        Command::Estimate(a) => commands::estimate(g, a, out),
        Command::Validate(a) => commands::validate(g, a, out),
        Command::SweepNoc(a) => commands::sweep_noc(g, a, out),
        Command::SweepImem(a) => commands::sweep_imem(g, a, out),
        Command::Explore(a) => commands::explore(g, a, out),
        Command::Report => commands::report(g, out),
    }
}

fn run(cli: Cli) -> Outcome<String> {
    let mut out = Artifacts::default();
    let stdout = enermod::campaign::with_workers(cli.global.workers, || dispatch(&cli, &mut out))??;
    out.write(&cli.global.outdir)?;
    Ok(stdout)
}

fn fail(f: Failure) -> ExitCode {
    let message = serde_json::to_string(&f.message).expect("string serializes");
    eprintln!("error: code={} kind={} message={message}", f.code, f.kind);
    ExitCode::from(f.code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind as K;
            let _ = e.print();
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion) {
                return ExitCode::SUCCESS;
            }
            let first = e.to_string().lines().next().unwrap_or("usage error").to_string();
            return fail(Failure::new(2, "usage", first.trim_start_matches("error: ")));
        }
    };
    match run(cli) {
        Ok(stdout) => {
            println!("{stdout}");
            ExitCode::SUCCESS
        }
        Err(f) => fail(f),
    }
}
