//! What to run: job, topology, input and knobs.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use bspmr::jobs::datagen::{GaussianBlobs, ZipfCorpus};
use bspmr::{Error, JobMode, Result};
use serde::{Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Job {
    Wordcount,
    Kmeans,
    Pi,
}

impl fmt::Display for Job {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Job::Wordcount => "wordcount",
            Job::Kmeans => "kmeans",
            Job::Pi => "pi",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Inproc,
    Tcp,
}

/// Built-in dataset, written `kind:key=value,...` on the command line.
///
/// * `zipf:bytes=1M,vocab=5000,exponent=1.1`
/// * `blobs:points=200,dim=2,centers=3,spread=1.0`
/// * `pi:samples=1000000`
///
/// Sizes accept `k`/`K` and `m`/`M` suffixes (powers of 1024). Omitted
/// keys take the defaults shown.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Generator {
    Zipf { bytes: usize, vocabulary: usize, exponent: f64 },
    Blobs { points: usize, dim: usize, centers: usize, spread: f64 },
    Pi { samples: u64 },
}

pub const DEFAULT_PI_SAMPLES: u64 = 1_000_000;

impl Generator {
    pub fn default_for(job: Job) -> Self {
        match job {
            Job::Wordcount => {
                let z = ZipfCorpus::default();
                Generator::Zipf { bytes: z.bytes, vocabulary: z.vocabulary, exponent: z.exponent }
            }
            Job::Kmeans => {
                let b = GaussianBlobs::default();
                Generator::Blobs { points: b.points, dim: b.dim, centers: b.centers, spread: b.spread }
            }
            Job::Pi => Generator::Pi { samples: DEFAULT_PI_SAMPLES },
        }
    }

    pub fn job(&self) -> Job {
        match self {
            Generator::Zipf { .. } => Job::Wordcount,
            Generator::Blobs { .. } => Job::Kmeans,
            Generator::Pi { .. } => Job::Pi,
        }
    }
}

fn parse_size(s: &str) -> Result<u64> {
    let (digits, scale) = match s.as_bytes().last() {
        Some(b'k' | b'K') => (&s[..s.len() - 1], 1 << 10),
        Some(b'm' | b'M') => (&s[..s.len() - 1], 1 << 20),
        _ => (s, 1),
    };
    digits
        .parse::<u64>()
        .ok()
        .and_then(|n| n.checked_mul(scale))
        .ok_or_else(|| Error::Config(format!("bad size {s:?}")))
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Config(format!("bad number {s:?}")))
}

impl FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, params) = s.split_once(':').unwrap_or((s, ""));
        let mut gen = match kind {
            "zipf" => Generator::default_for(Job::Wordcount),
            "blobs" => Generator::default_for(Job::Kmeans),
            "pi" => Generator::default_for(Job::Pi),
            _ => return Err(Error::Config(format!("unknown generator {kind:?}; expected zipf, blobs or pi"))),
        };
        for param in params.split(',').filter(|p| !p.is_empty()) {
            let (key, value) = param
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("generator parameter {param:?} is not key=value")))?;
            match (&mut gen, key) {
                (Generator::Zipf { bytes, .. }, "bytes") => *bytes = parse_size(value)? as usize,
                (Generator::Zipf { vocabulary, .. }, "vocab") => *vocabulary = parse_size(value)? as usize,
                (Generator::Zipf { exponent, .. }, "exponent") => *exponent = parse_f64(value)?,
                (Generator::Blobs { points, .. }, "points") => *points = parse_size(value)? as usize,
                (Generator::Blobs { dim, .. }, "dim") => *dim = parse_size(value)? as usize,
                (Generator::Blobs { centers, .. }, "centers") => *centers = parse_size(value)? as usize,
                (Generator::Blobs { spread, .. }, "spread") => *spread = parse_f64(value)?,
                (Generator::Pi { samples }, "samples") => *samples = parse_size(value)?,
                _ => return Err(Error::Config(format!("unknown {kind} parameter {key:?}"))),
            }
        }
        Ok(gen)
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Generator::Zipf { bytes, vocabulary, exponent } => {
                write!(f, "zipf:bytes={bytes},vocab={vocabulary},exponent={exponent}")
            }
            Generator::Blobs { points, dim, centers, spread } => {
                write!(f, "blobs:points={points},dim={dim},centers={centers},spread={spread}")
            }
            Generator::Pi { samples } => write!(f, "pi:samples={samples}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Files(Vec<PathBuf>),
    Generated(Generator),
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Generated(g) => g.fmt(f),
            Source::Files(paths) => {
                let names: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
                f.write_str(&names.join(" "))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KMeansOptions {
    pub k: usize,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions { k: 3, max_iters: 100, tol: 1e-6 }
    }
}

fn as_display<T: fmt::Display, S: Serializer>(v: &T, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(v)
}

fn as_secs<S: Serializer>(d: &Duration, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSpec {
    pub job: Job,
    #[serde(serialize_with = "as_display")]
    pub mode: JobMode,
    pub workers: usize,
    pub threads: usize,
    pub backend: BackendKind,
    pub cluster_file: Option<PathBuf>,
    pub rank: Option<usize>,
    pub source: Source,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub cache_capacity: usize,
    #[serde(serialize_with = "as_secs")]
    pub connect_timeout: Duration,
    #[serde(serialize_with = "as_secs")]
    pub collective_timeout: Duration,
    pub kmeans: KMeansOptions,
}

impl RunSpec {
    /// In-process spec on the job's default generated dataset.
    pub fn new(job: Job) -> Self {
        RunSpec {
            job,
            mode: JobMode::Eager,
            workers: 1,
            threads: 1,
            backend: BackendKind::Inproc,
            cluster_file: None,
            rank: None,
            source: Source::Generated(Generator::default_for(job)),
            seed: 1,
            out: None,
            cache_capacity: bspmr::engine::DEFAULT_CACHE_CAPACITY,
            connect_timeout: Duration::from_secs(30),
            collective_timeout: Duration::from_secs(120),
            kmeans: KMeansOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.workers == 0 || self.threads == 0 || self.cache_capacity == 0 {
            return bad("workers, threads and cache capacity must be at least 1".into());
        }
        match &self.source {
            Source::Generated(g) if g.job() != self.job => {
                return bad(format!("generator {g} does not produce input for {}", self.job));
            }
            Source::Files(_) if self.job == Job::Pi => {
                return bad("pi takes no input files; use --gen pi:samples=N".into())
            }
            Source::Files(paths) if paths.is_empty() => return bad("no input files".into()),
            Source::Files(paths) => {
                if let Some(p) = paths.iter().find(|p| !p.is_file()) {
                    return Err(Error::Input(format!("cannot read input {}", p.display())));
                }
            }
            Source::Generated(Generator::Pi { samples: 0 }) => return bad("pi needs at least one sample".into()),
            Source::Generated(_) => {}
        }
        if self.job == Job::Kmeans && (self.kmeans.k == 0 || self.kmeans.tol.is_nan() || self.kmeans.tol < 0.0) {
            return bad("k-means needs k >= 1 and tol >= 0".into());
        }
        if self.backend == BackendKind::Tcp && (self.cluster_file.is_none() || self.rank.is_none()) {
            return bad("the tcp backend needs --cluster-file and --rank".into());
        }
        Ok(())
    }
}
