use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use bspmr::{Error, JobMode, Result};
use bspmr_cli::bench::{bench, write_report_csv};
use bspmr_cli::spec::{BackendKind, Generator, Job, KMeansOptions, RunSpec, Source};
use bspmr_cli::{exit_code, launch, report, run};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bspmr", version, about = "In-memory MapReduce with eager and delayed reduction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one job.
    Run(RunArgs),
    /// Run a sweep of jobs in-process and write one CSV row per run.
    Bench(BenchArgs),
    /// Start a local multi-process TCP cluster running `run` with the trailing arguments.
    Launch(LaunchArgs),
}

#[derive(Args)]
struct JobKnobs {
    /// Input file; repeat for several. Mutually exclusive with --gen.
    #[arg(long)]
    input: Vec<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = bspmr::engine::DEFAULT_CACHE_CAPACITY)]
    cache_capacity: usize,
    /// Seconds.
    #[arg(long, default_value_t = 30.0)]
    connect_timeout: f64,
    /// Seconds.
    #[arg(long, default_value_t = 120.0)]
    collective_timeout: f64,
    /// Number of k-means clusters.
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum)]
    job: Job,
    #[arg(long, default_value = "eager")]
    mode: JobMode,
    /// Defaults to 1 in-process, or the cluster file's length over tcp.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, value_enum, default_value = "inproc")]
    backend: BackendKind,
    #[arg(long)]
    cluster_file: Option<PathBuf>,
    #[arg(long)]
    rank: Option<usize>,
    /// zipf:bytes=1M,vocab=5000,exponent=1.1 | blobs:points=200,dim=2,centers=3,spread=1 | pi:samples=1000000
    #[arg(long)]
    gen: Option<Generator>,
    /// Result file, `key<TAB>value` per line.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the report as a one-row CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Also write the JSON report here; it always goes to stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    knobs: JobKnobs,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum, value_delimiter = ',', default_value = "pi")]
    job: Vec<Job>,
    #[arg(long, value_delimiter = ',', default_value = "eager")]
    mode: Vec<JobMode>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    workers: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    threads: Vec<usize>,
    /// Repeat to sweep datasets; each applies to the job it feeds.
    #[arg(long)]
    gen: Vec<Generator>,
    /// CSV destination; stdout if omitted.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    knobs: JobKnobs,
}

#[derive(Args)]
struct LaunchArgs {
    #[arg(long)]
    workers: usize,
    /// Arguments for each `run` child, e.g. `-- --job pi --out result.tsv`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    args: Vec<String>,
}

fn secs(s: f64, what: &str) -> Result<Duration> {
    Duration::try_from_secs_f64(s).map_err(|_| Error::Config(format!("bad {what} {s}")))
}

fn base_spec(job: Job, knobs: &JobKnobs) -> Result<RunSpec> {
    let mut spec = RunSpec::new(job);
    spec.seed = knobs.seed;
    spec.cache_capacity = knobs.cache_capacity;
    spec.connect_timeout = secs(knobs.connect_timeout, "--connect-timeout")?;
    spec.collective_timeout = secs(knobs.collective_timeout, "--collective-timeout")?;
    spec.kmeans = KMeansOptions { k: knobs.k, max_iters: knobs.max_iters, tol: knobs.tol };
    if !knobs.input.is_empty() {
        spec.source = Source::Files(knobs.input.clone());
    }
    Ok(spec)
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let mut spec = base_spec(args.job, &args.knobs)?;
    if let Some(gen) = args.gen {
        if !args.knobs.input.is_empty() {
            return Err(Error::Config("--input and --gen are mutually exclusive".into()));
        }
        spec.source = Source::Generated(gen);
    }
    spec.mode = args.mode;
    spec.threads = args.threads;
    spec.backend = args.backend;
    spec.cluster_file = args.cluster_file;
    spec.rank = args.rank;
    spec.out = args.out;
    spec.workers = match (args.workers, &spec.cluster_file, spec.backend) {
        (Some(w), _, _) => w,
        (None, Some(path), BackendKind::Tcp) => std::fs::read_to_string(path)
            .map(|t| t.lines().filter(|l| !l.trim().is_empty()).count())
            .map_err(|e| Error::Config(format!("cluster file {}: {e}", path.display())))?,
        _ => 1,
    };

    let Some(output) = run::run(&spec)? else {
        return Ok(());
    };
    if let Some(path) = &spec.out {
        report::write_result(path, &output.result)?;
    }
    if let Some(path) = &args.csv {
        write_report_csv(&output.report, std::fs::File::create(path)?)?;
    }
    let json = serde_json::to_string_pretty(&output.report).map_err(|e| Error::Io(e.into()))?;
    if let Some(path) = &args.report {
        std::fs::write(path, &json)?;
    }
    let mut stdout = std::io::stdout().lock();
    match writeln!(stdout, "{json}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => other.map_err(Error::from),
    }
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let mut specs = Vec::new();
    for &job in &args.job {
        let base = base_spec(job, &args.knobs)?;
        let mut sources: Vec<Source> =
            args.gen.iter().filter(|g| g.job() == job).cloned().map(Source::Generated).collect();
        if sources.is_empty() {
            sources.push(base.source.clone());
        }
        for source in &sources {
            for &mode in &args.mode {
                for &workers in &args.workers {
                    for &threads in &args.threads {
                        let mut spec = base.clone();
                        spec.source = source.clone();
                        spec.mode = mode;
                        spec.workers = workers;
                        spec.threads = threads;
                        specs.push(spec);
                    }
                }
            }
        }
    }
    let reports = match &args.csv {
        Some(path) => bench(&specs, std::fs::File::create(path)?)?,
        None => bench(&specs, std::io::stdout().lock())?,
    };
    let failed = reports.iter().filter(|r| r.is_err()).count();
    if failed > 0 {
        eprintln!("bspmr: {failed} of {} runs failed", reports.len());
        return Err(Error::Task { at: "bench".into(), message: format!("{failed} runs failed") });
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Launch(a) => std::env::current_exe()
            .map_err(Error::from)
            .and_then(|exe| launch::launch(&exe, a.workers, &a.args))
            .map(|code| {
                if code != 0 {
                    std::process::exit(code);
                }
            }),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bspmr: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
