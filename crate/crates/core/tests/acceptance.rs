//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use bspmr::collections::{sum, DistVector};
use bspmr::engine::check_combine_laws;
use bspmr::jobs::datagen::{GaussianBlobs, ZipfCorpus};
use bspmr::jobs::kmeans::{kmeans, KMeansParams};
use bspmr::jobs::pi::pi_estimate;
use bspmr::jobs::wordcount::wordcount;
use bspmr::transport::Backend;
use bspmr::{Combiner, Emitter, Engine, EngineConfig, JobMode, WorkerId};
use common::{mix, oracle, run_cluster, BACKENDS};
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

const MODES: [JobMode; 2] = [JobMode::Eager, JobMode::Delayed];

fn topologies(backend: Backend) -> Vec<(usize, usize)> {
    let workers: &[usize] = match backend {
        Backend::InProcess => &[1, 2, 4],
        Backend::Tcp => &[1, 2],
    };
    workers.iter().flat_map(|&w| [(w, 1), (w, 4)]).collect()
}

fn wordcount_equivalence() -> Outcome {
    let start = Instant::now();
    let text = ZipfCorpus::default().generate().map_err(|e| e.to_string())?;
    let expected = oracle::render(&oracle::word_counts(&text));
    let lines: Vec<&str> = text.lines().collect();
    let mut configs = 0;
    for backend in BACKENDS {
        for (workers, threads) in topologies(backend) {
            for mode in MODES {
                let out = run_cluster(backend, workers, |mut h| {
                    let src = DistVector::from_fn(&h, lines.len(), |i| lines[i]);
                    let mut e = Engine::new(EngineConfig::with_threads(threads)).unwrap();
                    let counts = wordcount(&mut h, &mut e, &src, mode).unwrap();
                    counts.gather(&mut h, WorkerId(0)).unwrap()
                });
                let got = oracle::render(&out[0]);
                ensure!(got == expected, "{backend:?} W={workers} T={threads} {mode}: output differs");
                configs += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:.1?}, budget 60s");
    Ok(format!("{configs} configurations byte-identical, {} bytes of output, {elapsed:.1?}", expected.len()))
}

fn median(values: &[u64]) -> u64 {
    let mut v = values.to_vec();
    v.sort_unstable();
    v[(v.len() - 1) / 2]
}

fn median_in_delayed_mode() -> Outcome {
    const N: u64 = 50_000;
    let mut groups: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
    for i in 0..N {
        groups.entry((mix(i) % 300) as u32).or_default().push(mix(i ^ 0xABCD) % 10_000);
    }
    let expected: BTreeMap<u32, u64> = groups.iter().map(|(k, v)| (*k, median(v))).collect();
    for (workers, threads) in topologies(Backend::InProcess) {
        let out = run_cluster(Backend::InProcess, workers, |mut h| {
            let src = DistVector::from_fn(&h, N as usize, |i| i as u64);
            let mut e = Engine::new(EngineConfig::with_threads(threads)).unwrap();
            let m = e
                .map_reduce_delayed(
                    &mut h,
                    &src,
                    |i: &u64, out| {
                        out.emit((mix(*i) % 300) as u32, mix(i ^ 0xABCD) % 10_000);
                        Ok(())
                    },
                    |_, vs| Ok(median(vs)),
                )
                .unwrap();
            m.gather(&mut h, WorkerId(0)).unwrap()
        });
        ensure!(out[0] == expected, "W={workers} T={threads}: medians differ from oracle");
    }
    // eager mode only accepts a binary combine; the closest binary stand-in
    // for a median fails the law check the engine relies on
    let pairwise: Combiner<f64> = Arc::new(|acc: &mut f64, v: f64| *acc = (*acc + v) / 2.0);
    let violation = match check_combine_laws(&pairwise, &[1.0, 4.0, 10.0]) {
        Ok(()) => return Err("pairwise median stand-in passed the combine law check".into()),
        Err(v) => v,
    };
    Ok(format!("{} groups exact; eager rejects it: {violation}", expected.len()))
}

fn kmeans_trajectory() -> Outcome {
    let blobs = GaussianBlobs { spread: 3.0, seed: 1, ..GaussianBlobs::default() };
    let points = blobs.generate().map_err(|e| e.to_string())?;
    let reference = oracle::lloyd(&points, 3, 1e-6, 50);
    let mut worst = 0.0f64;
    let mut iterations = 0;
    for backend in BACKENDS {
        for (workers, threads) in topologies(backend) {
            for mode in MODES {
                let out = run_cluster(backend, workers, |mut h| {
                    let src = DistVector::from_fn(&h, points.len(), |i| points[i].clone());
                    let mut e = Engine::new(EngineConfig::with_threads(threads)).unwrap();
                    let params = KMeansParams { mode, tol: 1e-6, ..KMeansParams::new(3) };
                    kmeans(&mut h, &mut e, &src, &params).unwrap()
                });
                let run = &out[0];
                ensure!(out.iter().all(|r| r == run), "workers disagree on the trajectory");
                ensure!(
                    run.trajectory.len() == reference.len(),
                    "{backend:?} W={workers} T={threads} {mode}: {} states vs oracle {}",
                    run.trajectory.len(),
                    reference.len()
                );
                for (got, want) in run.trajectory.iter().zip(&reference) {
                    for (a, b) in got.centroids.iter().flatten().zip(want.centroids.iter().flatten()) {
                        worst = worst.max((a - b).abs());
                    }
                    let w = oracle::wcss(&points, &got.centroids);
                    ensure!((w - want.wcss).abs() <= 1e-9 * want.wcss.max(1.0), "WCSS differs");
                }
                iterations = run.final_state().iteration;
            }
        }
    }
    ensure!(worst <= 1e-9, "max coordinate deviation {worst:e} > 1e-9");
    for pair in reference.windows(2) {
        ensure!(pair[1].wcss <= pair[0].wcss, "WCSS increased: {} -> {}", pair[0].wcss, pair[1].wcss);
    }
    ensure!(iterations <= 50, "{iterations} iterations");
    let final_wcss = reference.last().map(|s| s.wcss).unwrap_or(0.0);
    Ok(format!("converged in {iterations} iterations, max deviation {worst:e}, final WCSS {final_wcss:.6}"))
}

// Pinned from an independent run of the sampler; a change here means the sample
// stream changed.
const PI_1E7_SEED_42_INSIDE: u64 = 7_854_213;

fn pi_determinism() -> Outcome {
    const N: u64 = 10_000_000;
    let start = Instant::now();
    let inside = oracle::pi_inside(N, 42);
    ensure!(inside == PI_1E7_SEED_42_INSIDE, "oracle inside-count {inside} != pinned {PI_1E7_SEED_42_INSIDE}");
    let expected = 4.0 * inside as f64 / N as f64;
    ensure!((expected - std::f64::consts::PI).abs() <= 2e-3, "estimate {expected} too far from pi");
    let mut runs = 0;
    for backend in BACKENDS {
        for (workers, threads) in topologies(backend) {
            let out = run_cluster(backend, workers, |mut h| {
                let mut e = Engine::new(EngineConfig::with_threads(threads)).unwrap();
                pi_estimate(&mut h, &mut e, N, 42, JobMode::Eager).unwrap()
            });
            for r in &out {
                ensure!(
                    r.estimate.to_bits() == expected.to_bits(),
                    "{backend:?} W={workers} T={threads}: {} != {expected}",
                    r.estimate
                );
            }
            runs += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(30), "took {elapsed:.1?}, budget 30s");
    Ok(format!(
        "estimate {expected} (|err| {:.2e}) identical over {runs} topologies, {elapsed:.1?}",
        (expected - std::f64::consts::PI).abs()
    ))
}

#[derive(Debug, Clone)]
struct SumCase {
    cardinality: u64,
    emissions: usize,
    workers: usize,
    threads: usize,
    seed: u64,
}

fn sum_cases() -> Vec<SumCase> {
    let config = Config { cases: 50, ..Config::default() };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    let strategy = (1u64..=10_000, 0usize..20_000, 1usize..=4, 1usize..=4, proptest::num::u64::ANY).prop_map(
        |(cardinality, emissions, workers, threads, seed)| SumCase { cardinality, emissions, workers, threads, seed },
    );
    (0..50).map(|_| strategy.new_tree(&mut runner).unwrap().current()).collect()
}

fn run_sum_case(case: &SumCase, mode: JobMode, cache_capacity: usize) -> BTreeMap<u64, u64> {
    let out = run_cluster(Backend::InProcess, case.workers, |mut h| {
        let src = DistVector::from_fn(&h, case.emissions, |i| i as u64);
        let config = EngineConfig { threads: case.threads, cache_capacity };
        let mut e = Engine::new(config).unwrap();
        let seed = case.seed;
        let card = case.cardinality;
        let mapper = move |i: &u64, out: &mut Emitter<'_, u64, u64>| {
            let x = mix(seed ^ *i);
            out.emit(x % card, x >> 54);
            Ok(())
        };
        let m = match mode {
            JobMode::Eager => e.map_reduce_eager(&mut h, &src, mapper, sum()).unwrap(),
            JobMode::Delayed => e.map_reduce_delayed(&mut h, &src, mapper, |_, vs| Ok(vs.iter().sum::<u64>())).unwrap(),
        };
        m.gather(&mut h, WorkerId(0)).unwrap()
    });
    out.into_iter().next().unwrap()
}

fn mode_equivalence(cases: &[SumCase]) -> Outcome {
    for (n, case) in cases.iter().enumerate() {
        let eager = run_sum_case(case, JobMode::Eager, bspmr::engine::DEFAULT_CACHE_CAPACITY);
        let delayed = run_sum_case(case, JobMode::Delayed, bspmr::engine::DEFAULT_CACHE_CAPACITY);
        ensure!(eager == delayed, "case {n} {case:?}: modes disagree");
    }
    Ok(format!("{} randomized cases", cases.len()))
}

fn cache_transparency(cases: &[SumCase]) -> Outcome {
    for (n, case) in cases.iter().enumerate() {
        let reference = run_sum_case(case, JobMode::Delayed, 1);
        for cap in [1, 16, 1 << 16] {
            ensure!(run_sum_case(case, JobMode::Eager, cap) == reference, "case {n} capacity {cap}: result differs");
        }
    }
    Ok(format!("capacities 1, 16, 65536 agree on {} cases", cases.len()))
}

fn traffic_reduction() -> Outcome {
    const N: usize = 1_000_000;
    let mut summary = Vec::new();
    for workers in [1, 2, 4] {
        let out = run_cluster(Backend::InProcess, workers, |mut h| {
            let src = DistVector::from_fn(&h, N, |i| i as u32);
            let mapper = |i: &u32, out: &mut Emitter<'_, u32, u64>| {
                out.emit(i % 100, 1);
                Ok(())
            };
            let mut eager = Engine::new(EngineConfig::with_threads(4)).unwrap();
            eager.map_reduce_eager(&mut h, &src, mapper, sum()).unwrap();
            let mut delayed = Engine::new(EngineConfig::with_threads(4)).unwrap();
            delayed.map_reduce_delayed(&mut h, &src, mapper, |_, vs| Ok(vs.len() as u64)).unwrap();
            (eager.stats().pairs_shuffled, delayed.stats().pairs_shuffled)
        });
        let eager: u64 = out.iter().map(|o| o.0).sum();
        let delayed: u64 = out.iter().map(|o| o.1).sum();
        ensure!(eager <= 100 * workers as u64, "W={workers}: eager shuffled {eager} pairs");
        ensure!(delayed == N as u64, "W={workers}: delayed shuffled {delayed} pairs");
        summary.push(format!("W={workers} eager {eager} / delayed {delayed}"));
    }
    Ok(summary.join(", "))
}

fn scaling_smoke() -> Option<Outcome> {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    if cores < 4 {
        return None;
    }
    const N: u64 = 100_000_000;
    let time = |threads| {
        let start = Instant::now();
        run_cluster(Backend::InProcess, 1, |mut h| {
            let mut e = Engine::new(EngineConfig::with_threads(threads)).unwrap();
            pi_estimate(&mut h, &mut e, N, 42, JobMode::Eager).unwrap()
        });
        start.elapsed()
    };
    let one = time(1);
    let four = time(4);
    let speedup = one.as_secs_f64() / four.as_secs_f64();
    Some(if speedup >= 1.5 {
        Ok(format!("speedup {speedup:.2} ({one:.1?} -> {four:.1?})"))
    } else {
        Err(format!("speedup {speedup:.2} < 1.5 ({one:.1?} -> {four:.1?})"))
    })
}

fn transport_algebra() -> Outcome {
    let mut checked = 0;
    for backend in BACKENDS {
        for size in [1, 2, 4] {
            let out = run_cluster(backend, size, |mut h| {
                let r = h.rank();
                let original: Vec<Vec<u8>> =
                    (0..h.size()).map(|d| vec![(r * 16 + d) as u8; 1 + (r * 7 + d * 3) % 50]).collect();
                let once = h.all_to_all(original.clone()).unwrap();
                let transposed = once
                    .iter()
                    .enumerate()
                    .all(|(src, b)| b == &vec![(src * 16 + r) as u8; 1 + (src * 7 + r * 3) % 50]);
                let twice = h.all_to_all(once).unwrap();
                let gathered = h.gather(WorkerId(0), vec![r as u8; r + 1]).unwrap();
                let flat: Vec<u8> = gathered.concat();
                let back = h.broadcast(WorkerId(0), flat).unwrap();
                let expected: Vec<u8> = (0..h.size()).flat_map(|w| vec![w as u8; w + 1]).collect();
                (transposed && twice == original && back == expected, h.stats())
            });
            ensure!(out.iter().all(|o| o.0), "{backend:?} size {size}: algebra violated");
            let sent: u64 = out.iter().map(|o| o.1.bytes_sent).sum();
            let received: u64 = out.iter().map(|o| o.1.bytes_received).sum();
            ensure!(sent == received, "{backend:?} size {size}: sent {sent} != received {received}");
            checked += 1;
        }
    }
    Ok(format!("{checked} cluster shapes"))
}

fn guarded<T>(f: impl FnOnce() -> T) -> Result<T, String> {
    catch_unwind(AssertUnwindSafe(f)).map_err(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        format!("panicked: {msg}")
    })
}

fn check(f: impl FnOnce() -> Outcome) -> Option<Outcome> {
    Some(guarded(f).and_then(|o| o))
}

fn main() {
    let cases = sum_cases();
    let mut failed = 0;
    let mut report = |n: usize, name: &str, outcome: Option<Outcome>| {
        let (status, detail) = match outcome {
            Some(Ok(d)) => ("PASS", d),
            Some(Err(d)) => {
                failed += 1;
                ("FAIL", d)
            }
            None => ("SKIP", "needs at least 4 cores".to_string()),
        };
        println!("{status} {n} {name}: {detail}");
    };
    report(1, "wordcount oracle equivalence", check(wordcount_equivalence));
    report(2, "delayed median reducer", check(median_in_delayed_mode));
    report(3, "k-means trajectory", check(kmeans_trajectory));
    report(4, "pi accuracy and determinism", check(pi_determinism));
    report(5, "eager/delayed equivalence", check(|| mode_equivalence(&cases)));
    report(6, "traffic reduction", check(traffic_reduction));
    report(7, "cache transparency", check(|| cache_transparency(&cases)));
    report(8, "scaling smoke", guarded(scaling_smoke).unwrap_or_else(|e| Some(Err(e))));
    report(9, "transport algebra", check(transport_algebra));
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
