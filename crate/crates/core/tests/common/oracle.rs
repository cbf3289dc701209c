//! Single-threaded reference implementations, written without the crate's
//! own helpers.

use std::collections::BTreeMap;

/// Lowercased runs of ASCII letters and digits.
pub fn word_counts(text: &str) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    let mut word = String::new();
    for b in text.bytes().chain(std::iter::once(b' ')) {
        if b.is_ascii_alphanumeric() {
            word.push(b.to_ascii_lowercase() as char);
        } else if !word.is_empty() {
            *counts.entry(std::mem::take(&mut word)).or_insert(0) += 1;
        }
    }
    counts
}

/// `key\tvalue\n` lines in key order.
pub fn render<K: std::fmt::Display, V: std::fmt::Display>(m: &BTreeMap<K, V>) -> Vec<u8> {
    let mut out = String::new();
    for (k, v) in m {
        out.push_str(&format!("{k}\t{v}\n"));
    }
    out.into_bytes()
}

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Inside-count of the seeded pi sampler, stream by stream.
pub fn pi_inside(total: u64, seed: u64) -> u64 {
    let streams = 4096u64;
    let mut inside = 0;
    for s in 0..streams {
        let count = total / streams + u64::from(s < total % streams);
        let mut state = seed ^ s.wrapping_mul(0x9E3779B97F4A7C15);
        for _ in 0..count {
            let x = (splitmix(&mut state) >> 11) as f64 / 9007199254740992.0;
            let y = (splitmix(&mut state) >> 11) as f64 / 9007199254740992.0;
            if x * x + y * y <= 1.0 {
                inside += 1;
            }
        }
    }
    inside
}

pub struct LloydStep {
    pub centroids: Vec<Vec<f64>>,
    pub wcss: f64,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn closest(centroids: &[Vec<f64>], p: &[f64]) -> usize {
    let mut best = 0;
    for j in 1..centroids.len() {
        if dist2(p, &centroids[j]) < dist2(p, &centroids[best]) {
            best = j;
        }
    }
    best
}

pub fn wcss(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> f64 {
    points.iter().map(|p| dist2(p, &centroids[closest(centroids, p)])).sum()
}

/// Lloyd's algorithm from the first `k` points. Entry 0 is the initial
/// state; stops once no centroid moves more than `tol`.
pub fn lloyd(points: &[Vec<f64>], k: usize, tol: f64, max_iters: usize) -> Vec<LloydStep> {
    let dim = points[0].len();
    let mut centroids: Vec<Vec<f64>> = points[..k].to_vec();
    let mut steps = vec![LloydStep { wcss: wcss(points, &centroids), centroids: centroids.clone() }];
    for _ in 0..max_iters {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for p in points {
            let j = closest(&centroids, p);
            counts[j] += 1;
            for d in 0..dim {
                sums[j][d] += p[d];
            }
        }
        let mut shift = 0.0f64;
        for j in 0..k {
            if counts[j] > 0 {
                let next: Vec<f64> = sums[j].iter().map(|s| s / counts[j] as f64).collect();
                shift = shift.max(dist2(&next, &centroids[j]).sqrt());
                centroids[j] = next;
            }
        }
        steps.push(LloydStep { wcss: wcss(points, &centroids), centroids: centroids.clone() });
        if shift <= tol {
            break;
        }
    }
    steps
}
