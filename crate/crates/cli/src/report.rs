//! Run reports, result files and digests.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use bspmr::codec::encode_kv;
use bspmr::{fnv1a64, Result};
use serde::Serialize;

use crate::spec::RunSpec;

/// Counters one worker contributes to the report.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct WorkerReport {
    pub rank: usize,
    pub map_ms: f64,
    pub shuffle_ms: f64,
    pub sort_ms: f64,
    pub reduce_ms: f64,
    pub pairs_emitted: u64,
    pub pairs_shuffled: u64,
    pub bytes_shuffled: u64,
    pub cache_evictions: u64,
    /// Best effort; `None` where the platform does not expose it.
    pub peak_rss_bytes: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub spec: RunSpec,
    /// Bytes of text for wordcount, points for k-means, samples for pi.
    pub input_size: u64,
    /// Phase times are the slowest worker's.
    pub map_ms: f64,
    pub shuffle_ms: f64,
    pub sort_ms: f64,
    pub reduce_ms: f64,
    /// Wall time of the job on rank 0, input loading excluded.
    pub total_ms: f64,
    pub pairs_shuffled: u64,
    pub peak_rss_bytes: Option<u64>,
    pub result_digest: String,
    pub workers: Vec<WorkerReport>,
    pub summary: BTreeMap<String, String>,
}

impl RunReport {
    pub fn new(
        spec: RunSpec,
        input_size: u64,
        total_ms: f64,
        workers: Vec<WorkerReport>,
        result: &[(String, String)],
        summary: BTreeMap<String, String>,
    ) -> Result<Self> {
        let max = |f: fn(&WorkerReport) -> f64| workers.iter().map(f).fold(0.0, f64::max);
        Ok(RunReport {
            spec,
            input_size,
            map_ms: max(|w| w.map_ms),
            shuffle_ms: max(|w| w.shuffle_ms),
            sort_ms: max(|w| w.sort_ms),
            reduce_ms: max(|w| w.reduce_ms),
            total_ms,
            pairs_shuffled: workers.iter().map(|w| w.pairs_shuffled).sum(),
            peak_rss_bytes: workers.iter().filter_map(|w| w.peak_rss_bytes).max(),
            result_digest: result_digest(result)?,
            workers,
            summary,
        })
    }
}

/// FNV-1a 64 over the canonical KV encoding of the key-sorted result, as
/// 16 hex digits.
pub fn result_digest(result: &[(String, String)]) -> Result<String> {
    let mut bytes = Vec::new();
    for (k, v) in result {
        bytes.extend(encode_kv(k.as_bytes(), v.as_bytes())?);
    }
    Ok(format!("{:016x}", fnv1a64(&bytes)))
}

pub fn write_result(path: &Path, result: &[(String, String)]) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for (k, v) in result {
        writeln!(out, "{k}\t{v}")?;
    }
    out.flush()
}

/// VmHWM of this process.
pub fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kib: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kib * 1024)
}

/// Restarts the VmHWM high-water mark where the kernel allows it.
pub fn reset_peak_rss() {
    let _ = std::fs::write("/proc/self/clear_refs", "5");
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_order_and_boundary_sensitive() {
        let a = vec![("ab".to_string(), "c".to_string())];
        let b = vec![("a".to_string(), "bc".to_string())];
        assert_ne!(result_digest(&a).unwrap(), result_digest(&b).unwrap());
        assert_eq!(result_digest(&[]).unwrap(), "cbf29ce484222325");
    }

    #[test]
    fn rss_is_readable_on_linux() {
        if cfg!(target_os = "linux") {
            assert!(peak_rss_bytes().unwrap() > 0);
        }
    }
}
