//! Browser demo: a single in-page worker runs the real engine.
//!
//! Every export returns a JSON string, so the page needs no generated
//! TypeScript bindings beyond `wasm-bindgen --target web`.

use bspmr::collections::{sum, DistVector};
use bspmr::jobs::datagen::GaussianBlobs;
use bspmr::jobs::kmeans::{kmeans, wcss, KMeansParams};
use bspmr::jobs::pi::pi_estimate;
use bspmr::transport::run_in_process;
use bspmr::{ClusterHandle, Emitter, Engine, EngineConfig, Error, JobMode, Result};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn single<T>(work: impl Fn(&mut ClusterHandle, &mut Engine) -> Result<T> + Sync) -> Result<T>
where
    T: Send,
{
    run_in_process(1, |mut h| {
        let mut engine = Engine::new(EngineConfig::default())?;
        work(&mut h, &mut engine)
    })?
    .pop()
    .expect("one worker")
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let value = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[derive(Debug, Serialize)]
pub struct PiPoint {
    pub samples: u64,
    pub estimate: f64,
    pub error: f64,
}

/// Pi estimates at `steps` sample counts doubling up to `max_samples`.
pub fn pi_series(seed: u64, max_samples: u64, steps: u32) -> Result<Vec<PiPoint>> {
    if max_samples == 0 || steps == 0 {
        return Err(Error::Config("need at least one sample and one step".into()));
    }
    let mut counts: Vec<u64> = (0..steps).map(|i| (max_samples >> (steps - 1 - i)).max(1)).collect();
    counts.dedup();
    single(|h, e| {
        counts
            .iter()
            .map(|&n| {
                let r = pi_estimate(h, e, n, seed, JobMode::Eager)?;
                Ok(PiPoint { samples: n, estimate: r.estimate, error: (r.estimate - std::f64::consts::PI).abs() })
            })
            .collect()
    })
}

#[wasm_bindgen]
pub fn pi_convergence(seed: u32, max_samples: u32, steps: u32) -> std::result::Result<String, JsError> {
    to_js(pi_series(u64::from(seed), u64::from(max_samples), steps))
}

#[derive(Debug, Serialize)]
pub struct KMeansDemo {
    pub points: Vec<Vec<f64>>,
    /// Centroids per iteration, starting with the initial ones.
    pub steps: Vec<Vec<Vec<f64>>>,
    pub wcss: Vec<f64>,
}

pub fn kmeans_demo(seed: u64, points: usize, k: usize, spread: f64) -> Result<KMeansDemo> {
    let data = GaussianBlobs { points, dim: 2, centers: k, spread, seed }.generate()?;
    single(|h, e| {
        let dv = DistVector::from_fn(h, data.len(), |i| data[i].clone());
        let run = kmeans(h, e, &dv, &KMeansParams::new(k))?;
        let mut scores = Vec::with_capacity(run.trajectory.len());
        for state in &run.trajectory {
            scores.push(wcss(h, &dv, &state.centroids)?);
        }
        Ok(KMeansDemo {
            points: data.clone(),
            steps: run.trajectory.into_iter().map(|s| s.centroids).collect(),
            wcss: scores,
        })
    })
}

#[wasm_bindgen]
pub fn kmeans_trajectory(seed: u32, points: u32, k: u32, spread: f64) -> std::result::Result<String, JsError> {
    to_js(kmeans_demo(u64::from(seed), points as usize, k as usize, spread))
}

#[derive(Debug, Serialize)]
pub struct Traffic {
    pub emissions: u64,
    pub keys: u64,
    pub eager_pairs: u64,
    pub delayed_pairs: u64,
    pub eager_bytes: u64,
    pub delayed_bytes: u64,
    pub same_result: bool,
}

/// Shuffle volume of a counting job under both reduction modes.
pub fn traffic(emissions: u64, keys: u64) -> Result<Traffic> {
    if keys == 0 {
        return Err(Error::Config("need at least one key".into()));
    }
    single(|h, _| {
        let src = DistVector::from_fn(h, emissions as usize, |i| i as u64);
        let mapper = |i: &u64, out: &mut Emitter<'_, u64, u64>| {
            out.emit(i.wrapping_mul(0x9E37_79B9_7F4A_7C15) % keys, 1);
            Ok(())
        };
        let mut eager = Engine::new(EngineConfig::default())?;
        let a = eager.map_reduce_eager(h, &src, mapper, sum())?;
        let mut delayed = Engine::new(EngineConfig::default())?;
        let b = delayed.map_reduce_delayed(h, &src, mapper, |_, vs| Ok(vs.len() as u64))?;
        let same_result = a.gather(h, bspmr::WorkerId(0))? == b.gather(h, bspmr::WorkerId(0))?;
        Ok(Traffic {
            emissions,
            keys,
            eager_pairs: eager.stats().pairs_shuffled,
            delayed_pairs: delayed.stats().pairs_shuffled,
            eager_bytes: eager.stats().bytes_shuffled,
            delayed_bytes: delayed.stats().bytes_shuffled,
            same_result,
        })
    })
}

#[wasm_bindgen]
pub fn traffic_comparison(emissions: u32, keys: u32) -> std::result::Result<String, JsError> {
    to_js(traffic(u64::from(emissions), u64::from(keys)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pi_series_doubles() {
        let s = pi_series(42, 64_000, 4).unwrap();
        let n: Vec<u64> = s.iter().map(|p| p.samples).collect();
        assert_eq!(n, vec![8000, 16_000, 32_000, 64_000]);
        assert!(s.last().unwrap().error < 0.05);
    }

    #[test]
    fn kmeans_wcss_never_rises() {
        let d = kmeans_demo(3, 150, 3, 2.0).unwrap();
        assert_eq!(d.points.len(), 150);
        assert_eq!(d.steps.len(), d.wcss.len());
        assert!(d.wcss.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    }

    #[test]
    fn eager_ships_one_pair_per_key() {
        let t = traffic(10_000, 50).unwrap();
        assert_eq!((t.eager_pairs, t.delayed_pairs), (50, 10_000));
        assert!(t.same_result);
        assert!(t.eager_bytes < t.delayed_bytes);
    }

    #[test]
    fn bad_arguments() {
        assert!(pi_series(1, 0, 3).is_err());
        assert!(traffic(10, 0).is_err());
        assert!(kmeans_demo(1, 2, 3, 1.0).is_err());
    }
}
