//! Monte-Carlo estimate of pi.
//!
//! The sample budget is split over 4096 fixed logical streams, each with its
//! own splitmix64 generator, and the streams are block-distributed over the
//! workers. Which worker or thread draws a stream never changes what the
//! stream draws, so the estimate depends only on `(total_samples, seed)`.

use crate::collections::{sum, DistVector};
use crate::engine::{Emitter, Engine, JobMode, TaskError};
use crate::error::{Error, Result};
use crate::transport::ClusterHandle;

pub const STREAMS: usize = 4096;
pub const STREAM_SEED_MULTIPLIER: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64: 64-bit state, golden-ratio increment.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Generator for stream `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u32) -> SplitMix64 {
    SplitMix64::new(seed ^ u64::from(stream).wrapping_mul(STREAM_SEED_MULTIPLIER))
}

/// One logical stream and how many samples it draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PiStream {
    pub id: u32,
    pub samples: u64,
}

/// Stream `s` draws `floor(n / 4096)` samples, plus one if `s < n % 4096`.
pub fn stream_samples(total: u64, stream: usize) -> u64 {
    total / STREAMS as u64 + u64::from((stream as u64) < total % STREAMS as u64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiResult {
    pub estimate: f64,
    pub inside: u64,
    pub total: u64,
}

/// Estimates pi from `total_samples` seeded draws.
pub fn pi_estimate(
    h: &mut ClusterHandle,
    engine: &mut Engine,
    total_samples: u64,
    seed: u64,
    mode: JobMode,
) -> Result<PiResult> {
    pi_estimate_with(h, engine, total_samples, mode, |stream| {
        let mut rng = stream_rng(seed, stream);
        move || {
            let x = rng.next_f64();
            let y = rng.next_f64();
            (x, y)
        }
    })
}

/// Same job with a caller-supplied point source per stream.
pub fn pi_estimate_with<S, G>(
    h: &mut ClusterHandle,
    engine: &mut Engine,
    total_samples: u64,
    mode: JobMode,
    source: S,
) -> Result<PiResult>
where
    S: Fn(u32) -> G + Sync,
    G: FnMut() -> (f64, f64),
{
    if total_samples == 0 {
        return Err(Error::Config("pi needs at least one sample".into()));
    }
    let streams =
        DistVector::from_fn(h, STREAMS, |s| PiStream { id: s as u32, samples: stream_samples(total_samples, s) });
    let mapper = |stream: &PiStream, out: &mut Emitter<'_, u32, u64>| -> Result<(), TaskError> {
        let mut draw = source(stream.id);
        for _ in 0..stream.samples {
            let (x, y) = draw();
            out.emit(0, u64::from(x * x + y * y <= 1.0));
        }
        Ok(())
    };
    let counts = match mode {
        JobMode::Eager => engine.map_reduce_eager(h, &streams, mapper, sum())?,
        JobMode::Delayed => engine.map_reduce_delayed(h, &streams, mapper, |_, hits| Ok(hits.iter().sum::<u64>()))?,
    };
    let inside = counts.get(h, &0)?.unwrap_or(0);
    Ok(PiResult { estimate: 4.0 * inside as f64 / total_samples as f64, inside, total: total_samples })
}
