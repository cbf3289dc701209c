//! Executes one RunSpec on one worker, and drives whole clusters.

use std::collections::BTreeMap;
use std::time::Instant;

use bspmr::codec::Codec;
use bspmr::collections::DistVector;
use bspmr::jobs::datagen::{GaussianBlobs, ZipfCorpus};
use bspmr::jobs::input::{parse_points, read_line_blocks};
use bspmr::jobs::kmeans::{kmeans, wcss, KMeansParams, Point};
use bspmr::jobs::pi::pi_estimate;
use bspmr::jobs::wordcount::wordcount;
use bspmr::transport::{self, ClusterConfig};
use bspmr::{ClusterHandle, Engine, EngineConfig, Error, JobStats, Result, WorkerId};

use crate::report::{peak_rss_bytes, RunReport, WorkerReport};
use crate::spec::{BackendKind, Generator, Job, RunSpec, Source};

const ROOT: WorkerId = WorkerId(0);

/// What rank 0 holds after a job.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub result: Vec<(String, String)>,
    pub report: RunReport,
}

enum Input {
    Lines(DistVector<Vec<u8>>),
    Points(DistVector<Point>),
    Samples(u64),
}

fn load(h: &mut ClusterHandle, spec: &RunSpec) -> Result<(Input, u64)> {
    let local = match &spec.source {
        Source::Files(paths) => read_line_blocks(paths, h.rank(), h.size()).map_err(|e| match e {
            Error::Io(io) => Error::Input(io.to_string()),
            other => other,
        }),
        Source::Generated(_) => Ok(Vec::new()),
    };
    let local = h.agree(local)?;
    Ok(match (&spec.source, spec.job) {
        (Source::Files(paths), Job::Wordcount) => {
            let size = paths.iter().map(|p| std::fs::metadata(p).map_or(0, |m| m.len())).sum();
            (Input::Lines(DistVector::from_local(h, local)?), size)
        }
        (Source::Files(_), Job::Kmeans) => {
            let points = h.agree(parse_points(&local))?;
            let points = DistVector::from_local(h, points)?;
            let n = points.global_len() as u64;
            (Input::Points(points), n)
        }
        (Source::Generated(Generator::Zipf { bytes, vocabulary, exponent }), _) => {
            let corpus = ZipfCorpus { bytes: *bytes, vocabulary: *vocabulary, exponent: *exponent, seed: spec.seed };
            let text = h.agree(corpus.generate())?;
            let lines: Vec<&[u8]> = text.lines().map(str::as_bytes).collect();
            let dv = DistVector::from_fn(h, lines.len(), |i| lines[i].to_vec());
            (Input::Lines(dv), text.len() as u64)
        }
        (Source::Generated(Generator::Blobs { points, dim, centers, spread }), _) => {
            let blobs =
                GaussianBlobs { points: *points, dim: *dim, centers: *centers, spread: *spread, seed: spec.seed };
            let all = h.agree(blobs.generate())?;
            (Input::Points(DistVector::from_fn(h, all.len(), |i| all[i].clone())), all.len() as u64)
        }
        (Source::Generated(Generator::Pi { samples }), _) => (Input::Samples(*samples), *samples),
        (Source::Files(_), Job::Pi) => return Err(Error::Config("pi takes no input files".into())),
    })
}

fn format_coords(p: &[f64]) -> String {
    // nine decimals: stable across topologies, whose float sums differ in the last bits
    p.iter().map(|x| format!("{x:.9}")).collect::<Vec<_>>().join(" ")
}

type Summary = BTreeMap<String, String>;

fn execute(
    h: &mut ClusterHandle,
    engine: &mut Engine,
    spec: &RunSpec,
    input: &Input,
) -> Result<(Vec<(String, String)>, Summary)> {
    let mut summary = Summary::new();
    let result = match input {
        Input::Lines(lines) => {
            let counts = wordcount(h, engine, lines, spec.mode)?.gather(h, ROOT)?;
            summary.insert("distinct_words".into(), counts.len().to_string());
            summary.insert("tokens".into(), counts.values().sum::<u64>().to_string());
            counts.into_iter().map(|(k, v)| (k, v.to_string())).collect()
        }
        Input::Points(points) => {
            let params = KMeansParams {
                k: spec.kmeans.k,
                max_iters: spec.kmeans.max_iters,
                tol: spec.kmeans.tol,
                mode: spec.mode,
                ..KMeansParams::new(spec.kmeans.k)
            };
            let run = kmeans(h, engine, points, &params)?;
            let last = run.final_state();
            summary.insert("iterations".into(), last.iteration.to_string());
            summary.insert("shift".into(), format!("{:e}", last.shift));
            summary.insert("wcss".into(), format!("{:.9}", wcss(h, points, &last.centroids)?));
            let width = (spec.kmeans.k - 1).to_string().len();
            last.centroids.iter().enumerate().map(|(j, c)| (format!("{j:0width$}"), format_coords(c))).collect()
        }
        Input::Samples(n) => {
            let pi = pi_estimate(h, engine, *n, spec.seed, spec.mode)?;
            summary.insert("estimate".into(), pi.estimate.to_string());
            vec![
                ("estimate".into(), pi.estimate.to_string()),
                ("inside".into(), pi.inside.to_string()),
                ("samples".into(), pi.total.to_string()),
            ]
        }
    };
    Ok((result, summary))
}

fn worker_report(rank: usize, s: &JobStats) -> WorkerReport {
    let ms = |d: std::time::Duration| d.as_secs_f64() * 1e3;
    WorkerReport {
        rank,
        map_ms: ms(s.map),
        shuffle_ms: ms(s.shuffle),
        sort_ms: ms(s.sort),
        reduce_ms: ms(s.reduce),
        pairs_emitted: s.pairs_emitted,
        pairs_shuffled: s.pairs_shuffled,
        bytes_shuffled: s.bytes_shuffled,
        cache_evictions: s.cache_evictions,
        peak_rss_bytes: peak_rss_bytes(),
    }
}

fn encode_worker(w: &WorkerReport) -> Vec<u8> {
    let fields: Vec<u64> = vec![
        w.map_ms.to_bits(),
        w.shuffle_ms.to_bits(),
        w.sort_ms.to_bits(),
        w.reduce_ms.to_bits(),
        w.pairs_emitted,
        w.pairs_shuffled,
        w.bytes_shuffled,
        w.cache_evictions,
        w.peak_rss_bytes.unwrap_or(u64::MAX),
    ];
    fields.to_bytes()
}

fn decode_worker(rank: usize, bytes: &[u8]) -> Result<WorkerReport> {
    let f = Vec::<u64>::decode_exact(bytes)?;
    if f.len() != 9 {
        return Err(Error::MalformedFrame("worker report".into()));
    }
    Ok(WorkerReport {
        rank,
        map_ms: f64::from_bits(f[0]),
        shuffle_ms: f64::from_bits(f[1]),
        sort_ms: f64::from_bits(f[2]),
        reduce_ms: f64::from_bits(f[3]),
        pairs_emitted: f[4],
        pairs_shuffled: f[5],
        bytes_shuffled: f[6],
        cache_evictions: f[7],
        peak_rss_bytes: (f[8] != u64::MAX).then_some(f[8]),
    })
}

/// Runs `spec` as this worker. Every worker must call it; rank 0 gets the
/// output, the others `None`.
pub fn run_worker(h: &mut ClusterHandle, spec: &RunSpec) -> Result<Option<RunOutput>> {
    let mut engine =
        h.agree(Engine::new(EngineConfig { threads: spec.threads, cache_capacity: spec.cache_capacity }))?;
    let (input, input_size) = load(h, spec)?;
    h.barrier()?;
    let start = Instant::now();
    let (result, summary) = execute(h, &mut engine, spec, &input)?;
    let total_ms = start.elapsed().as_secs_f64() * 1e3;

    let mine = worker_report(h.rank(), &engine.take_stats());
    let parts = h.gather(ROOT, encode_worker(&mine))?;
    if h.rank() != ROOT.0 {
        return Ok(None);
    }
    let workers = parts.iter().enumerate().map(|(r, b)| decode_worker(r, b)).collect::<Result<Vec<_>>>()?;
    let report = RunReport::new(spec.clone(), input_size, total_ms, workers, &result, summary)?;
    Ok(Some(RunOutput { result, report }))
}

/// Picks the error to report: a worker's own failure beats a peer's abort notice.
fn first_error(errors: Vec<Error>) -> Error {
    let mut errors = errors.into_iter();
    let first = errors.next().expect("at least one error");
    if matches!(first, Error::Aborted { .. }) {
        errors.find(|e| !matches!(e, Error::Aborted { .. })).unwrap_or(first)
    } else {
        first
    }
}

fn to_transport(e: Error) -> Error {
    match e {
        Error::Io(io) => Error::Transport(io.to_string()),
        other => other,
    }
}

/// Runs every worker of an in-process cluster on this process.
pub fn run_in_process(spec: &RunSpec) -> Result<RunOutput> {
    spec.validate()?;
    let config = ClusterConfig::in_process(spec.workers).with_collective_timeout(spec.collective_timeout);
    let handles = transport::cluster_init(&config)?;
    let outcomes = transport::run_workers(handles, |mut h| run_worker(&mut h, spec));
    let mut output = None;
    let mut errors = Vec::new();
    for o in outcomes {
        match o {
            Ok(Some(out)) => output = Some(out),
            Ok(None) => {}
            Err(e) => errors.push(e),
        }
    }
    if !errors.is_empty() {
        return Err(first_error(errors));
    }
    output.ok_or_else(|| Error::Contract("rank 0 produced no output".into()))
}

/// Joins a TCP cluster as `spec.rank` and runs this process's worker.
pub fn run_tcp(spec: &RunSpec) -> Result<Option<RunOutput>> {
    spec.validate()?;
    let path = spec.cluster_file.as_ref().expect("validated");
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cluster file {}: {e}", path.display())))?;
    let endpoints = transport::parse_cluster_file(&text)?;
    if spec.workers != endpoints.len() {
        return Err(Error::Config(format!(
            "--workers {} disagrees with {} endpoints in the cluster file",
            spec.workers,
            endpoints.len()
        )));
    }
    let config = ClusterConfig::tcp(endpoints, spec.rank.expect("validated"))
        .with_connect_timeout(spec.connect_timeout)
        .with_collective_timeout(spec.collective_timeout);
    let mut handles = transport::cluster_init(&config).map_err(to_transport)?;
    let mut h = handles.pop().ok_or_else(|| Error::Transport("no handle".into()))?;
    run_worker(&mut h, spec).map_err(to_transport)
}

pub fn run(spec: &RunSpec) -> Result<Option<RunOutput>> {
    match spec.backend {
        BackendKind::Inproc => run_in_process(spec).map(Some),
        BackendKind::Tcp => run_tcp(spec),
    }
}
