//! The two MapReduce pipelines.
//!
//! **Eager**: map threads fold each emission into a private
//! [`ThreadLocalCache`]; evicted and flushed entries fold into a per-thread
//! map, the per-thread maps fold into one worker-level map (thread order),
//! and only those locally reduced pairs go through `all_to_all`. Owners
//! merge arrivals with the same combine.
//!
//! **Delayed**: map threads buffer raw pairs per destination. After the
//! shuffle each owner merge-sorts what it received by key and coalesces
//! runs into `(key, values)` groups. Values in a group are ordered by
//! (source rank, thread index, emission order). Any reducer over the value
//! list can then be applied, now or later.
//!
//! Each map thread works on a contiguous slice of the worker's block.

pub mod cache;
pub mod sort;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::thread;
use std::time::Duration;

use crate::clock::Stopwatch;
use crate::codec::{self, Key, Value};
use crate::collections::{block_range, Combiner, DistGroupedMap, DistHashMap, DistVector, EmitBuffer};
use crate::error::{Error, Result};
use crate::partition::partition_with;
use crate::transport::ClusterHandle;

pub use cache::{ThreadLocalCache, DEFAULT_CACHE_CAPACITY};
pub use sort::merge_sort_by;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JobMode {
    Eager,
    Delayed,
}

impl fmt::Display for JobMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            JobMode::Eager => "eager",
            JobMode::Delayed => "delayed",
        })
    }
}

impl FromStr for JobMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eager" => Ok(JobMode::Eager),
            "delayed" => Ok(JobMode::Delayed),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

/// Failure reported by a user mapper or reducer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskError(pub String);

impl TaskError {
    pub fn new(msg: impl Into<String>) -> Self {
        TaskError(msg.into())
    }
}

impl fmt::Display for TaskError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for TaskError {}

impl From<String> for TaskError {
    fn from(s: String) -> Self {
        TaskError(s)
    }
}

impl From<&str> for TaskError {
    fn from(s: &str) -> Self {
        TaskError(s.to_string())
    }
}

enum Sink<'a, K, V> {
    Eager {
        cache: &'a mut ThreadLocalCache<K, V>,
        spill: &'a mut HashMap<K, V>,
        combine: &'a (dyn Fn(&mut V, V) + Send + Sync),
    },
    Buffer(&'a mut EmitBuffer<K, V>),
    Collect(&'a mut Vec<(K, V)>),
}

/// Handed to mappers; `emit` records one output pair.
pub struct Emitter<'a, K, V> {
    sink: Sink<'a, K, V>,
    emitted: u64,
}

impl<'a, K: Key, V> Emitter<'a, K, V> {
    /// An emitter that appends to `out`, for running a mapper by hand.
    pub fn collecting(out: &'a mut Vec<(K, V)>) -> Self {
        Emitter { sink: Sink::Collect(out), emitted: 0 }
    }

    pub fn emit(&mut self, key: K, value: V) {
        self.emitted += 1;
        match &mut self.sink {
            Sink::Eager { cache, spill, combine } => {
                if let Some((k, v)) = cache.absorb(key, value, *combine) {
                    fold_into(spill, k, v, *combine);
                }
            }
            Sink::Buffer(buf) => buf.emit(key, value),
            Sink::Collect(out) => out.push((key, value)),
        }
    }

    pub fn emitted(&self) -> u64 {
        self.emitted
    }
}

fn fold_into<K: Key, V>(map: &mut HashMap<K, V>, key: K, value: V, combine: &dyn Fn(&mut V, V)) {
    match map.get_mut(&key) {
        Some(acc) => combine(acc, value),
        None => {
            map.insert(key, value);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngineConfig {
    pub threads: usize,
    pub cache_capacity: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { threads: 1, cache_capacity: DEFAULT_CACHE_CAPACITY }
    }
}

impl EngineConfig {
    pub fn with_threads(threads: usize) -> Self {
        EngineConfig { threads, ..Default::default() }
    }
}

/// Per-worker counters, accumulated over every job the engine runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct JobStats {
    pub map: Duration,
    pub shuffle: Duration,
    pub sort: Duration,
    pub reduce: Duration,
    pub pairs_emitted: u64,
    /// Pairs this worker put into `all_to_all`, its own bucket included.
    pub pairs_shuffled: u64,
    pub bytes_shuffled: u64,
    pub cache_evictions: u64,
}

impl JobStats {
    pub fn total(&self) -> Duration {
        self.map + self.shuffle + self.sort + self.reduce
    }

    pub fn merge(&mut self, other: &JobStats) {
        self.map += other.map;
        self.shuffle += other.shuffle;
        self.sort += other.sort;
        self.reduce += other.reduce;
        self.pairs_emitted += other.pairs_emitted;
        self.pairs_shuffled += other.pairs_shuffled;
        self.bytes_shuffled += other.bytes_shuffled;
        self.cache_evictions += other.cache_evictions;
    }
}

/// Runs jobs for one worker. Not shareable across workers.
#[derive(Debug)]
pub struct Engine {
    config: EngineConfig,
    stats: JobStats,
}

struct ThreadOutput<P> {
    pairs: P,
    emitted: u64,
    evictions: u64,
}

impl Engine {
    pub fn new(config: EngineConfig) -> Result<Self> {
        if config.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        if config.cache_capacity == 0 {
            return Err(Error::Config("cache capacity must be at least 1".into()));
        }
        Ok(Engine { config, stats: JobStats::default() })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn stats(&self) -> &JobStats {
        &self.stats
    }

    pub fn take_stats(&mut self) -> JobStats {
        std::mem::take(&mut self.stats)
    }

    /// Eager reduction. `combine` must be associative and commutative.
    pub fn map_reduce_eager<T, K, V, M>(
        &mut self,
        h: &mut ClusterHandle,
        source: &DistVector<T>,
        mapper: M,
        combine: Combiner<V>,
    ) -> Result<DistHashMap<K, V>>
    where
        T: Sync,
        K: Key,
        V: Value,
        M: Fn(&T, &mut Emitter<'_, K, V>) -> std::result::Result<(), TaskError> + Sync,
    {
        let clock = Stopwatch::start();
        let capacity = self.config.cache_capacity;
        let combine_ref: &(dyn Fn(&mut V, V) + Send + Sync) = &*combine;
        let outputs = run_chunks(source, self.config.threads, |base, chunk| {
            let mut cache = ThreadLocalCache::new(capacity);
            let mut spill = HashMap::new();
            let mut emitted = 0;
            for (i, item) in chunk.iter().enumerate() {
                let mut em = Emitter {
                    sink: Sink::Eager { cache: &mut cache, spill: &mut spill, combine: combine_ref },
                    emitted: 0,
                };
                mapper(item, &mut em).map_err(|e| task_error(base + i, e))?;
                emitted += em.emitted;
            }
            let evictions = cache.evictions();
            for (k, v) in cache.drain() {
                fold_into(&mut spill, k, v, combine_ref);
            }
            Ok(ThreadOutput { pairs: spill, emitted, evictions })
        });

        let local = outputs.into_iter().collect::<Result<Vec<_>>>().map(|outs| {
            let mut worker_map: HashMap<K, V> = HashMap::new();
            for out in outs {
                self.stats.pairs_emitted += out.emitted;
                self.stats.cache_evictions += out.evictions;
                if worker_map.is_empty() {
                    worker_map = out.pairs;
                } else {
                    for (k, v) in out.pairs {
                        fold_into(&mut worker_map, k, v, combine_ref);
                    }
                }
            }
            worker_map
        });
        self.stats.map += clock.elapsed();

        let clock = Stopwatch::start();
        let encoded = local.and_then(|worker_map| {
            let mut buckets: Vec<Vec<(K, V)>> = (0..h.size()).map(|_| Vec::new()).collect();
            let mut scratch = Vec::new();
            for (k, v) in worker_map {
                buckets[partition_with(&k, h.size(), &mut scratch)].push((k, v));
            }
            for b in &mut buckets {
                b.sort_unstable_by(|x, y| x.0.cmp(&y.0));
            }
            self.encode_buckets(&buckets)
        });
        let encoded = h.agree(encoded)?;
        let received = h.all_to_all(encoded)?;
        self.stats.shuffle += clock.elapsed();

        let clock = Stopwatch::start();
        let mut result = DistHashMap::new(h, Some(combine));
        result.merge_received(received)?;
        self.stats.reduce += clock.elapsed();
        Ok(result)
    }

    /// Delayed-reduction grouping: shuffle raw pairs, merge-sort, coalesce.
    pub fn map_group<T, K, V, M>(
        &mut self,
        h: &mut ClusterHandle,
        source: &DistVector<T>,
        mapper: M,
    ) -> Result<DistGroupedMap<K, V>>
    where
        T: Sync,
        K: Key,
        V: Value,
        M: Fn(&T, &mut Emitter<'_, K, V>) -> std::result::Result<(), TaskError> + Sync,
    {
        let clock = Stopwatch::start();
        let size = h.size();
        let outputs = run_chunks(source, self.config.threads, |base, chunk| {
            let mut buffer = EmitBuffer::new(size);
            let mut emitted = 0;
            for (i, item) in chunk.iter().enumerate() {
                let mut em = Emitter { sink: Sink::Buffer(&mut buffer), emitted: 0 };
                mapper(item, &mut em).map_err(|e| task_error(base + i, e))?;
                emitted += em.emitted;
            }
            Ok(ThreadOutput { pairs: buffer, emitted, evictions: 0 })
        });
        let local = outputs.into_iter().collect::<Result<Vec<_>>>().map(|outs| {
            let mut buckets: Vec<Vec<(K, V)>> = (0..size).map(|_| Vec::new()).collect();
            for out in outs {
                self.stats.pairs_emitted += out.emitted;
                for (dest, pairs) in out.pairs.into_buckets().into_iter().enumerate() {
                    buckets[dest].extend(pairs);
                }
            }
            buckets
        });
        self.stats.map += clock.elapsed();

        let clock = Stopwatch::start();
        let encoded = local.and_then(|buckets| self.encode_buckets(&buckets));
        let encoded = h.agree(encoded)?;
        let received = h.all_to_all(encoded)?;
        self.stats.shuffle += clock.elapsed();

        let clock = Stopwatch::start();
        let mut pairs: Vec<(K, V)> = Vec::new();
        for bytes in &received {
            codec::decode_pairs_into(bytes, &mut pairs)?;
        }
        let sorted = merge_sort_by(pairs, |a, b| a.0.cmp(&b.0));
        let mut groups: Vec<(K, Vec<V>)> = Vec::new();
        for (k, v) in sorted {
            match groups.last_mut() {
                Some((last, values)) if *last == k => values.push(v),
                _ => groups.push((k, vec![v])),
            }
        }
        self.stats.sort += clock.elapsed();
        Ok(DistGroupedMap::from_sorted(groups, h.rank(), size))
    }

    /// Applies `reduce` to every group on its owner.
    pub fn reduce_grouped<K, V, R, F>(
        &mut self,
        h: &mut ClusterHandle,
        grouped: &DistGroupedMap<K, V>,
        reduce: F,
    ) -> Result<DistHashMap<K, R>>
    where
        K: Key,
        V: Value,
        R: Value,
        F: Fn(&K, &[V]) -> std::result::Result<R, TaskError>,
    {
        let clock = Stopwatch::start();
        let out = grouped.reduce(h, reduce);
        self.stats.reduce += clock.elapsed();
        out
    }

    /// `map_group` followed by `reduce_grouped`.
    pub fn map_reduce_delayed<T, K, V, R, M, F>(
        &mut self,
        h: &mut ClusterHandle,
        source: &DistVector<T>,
        mapper: M,
        reduce: F,
    ) -> Result<DistHashMap<K, R>>
    where
        T: Sync,
        K: Key,
        V: Value,
        R: Value,
        M: Fn(&T, &mut Emitter<'_, K, V>) -> std::result::Result<(), TaskError> + Sync,
        F: Fn(&K, &[V]) -> std::result::Result<R, TaskError>,
    {
        let grouped = self.map_group(h, source, mapper)?;
        self.reduce_grouped(h, &grouped, reduce)
    }

    fn encode_buckets<K: Key, V: Value>(&mut self, buckets: &[Vec<(K, V)>]) -> Result<Vec<Vec<u8>>> {
        let encoded =
            buckets.iter().map(|b| codec::encode_pairs(b.iter().map(|(k, v)| (k, v)))).collect::<Result<Vec<_>>>()?;
        self.stats.pairs_shuffled += buckets.iter().map(|b| b.len() as u64).sum::<u64>();
        self.stats.bytes_shuffled += encoded.iter().map(|b| b.len() as u64).sum::<u64>();
        Ok(encoded)
    }
}

fn task_error(serial: usize, e: TaskError) -> Error {
    Error::Task { at: format!("element {serial}"), message: e.0 }
}

/// Splits the local block into `threads` contiguous slices and runs `work`
/// on each, returning results in slice order. `work` receives the serial
/// key of its slice's first element.
fn run_chunks<T, R, F>(source: &DistVector<T>, threads: usize, work: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &[T]) -> R + Sync,
{
    let local = source.local();
    let offset = source.offset();
    if threads == 1 {
        return vec![work(offset, local)];
    }
    let work = &work;
    thread::scope(|scope| {
        let joins: Vec<_> = (0..threads)
            .map(|t| {
                let range = block_range(local.len(), threads, t);
                let chunk = &local[range.clone()];
                scope.spawn(move || work(offset + range.start, chunk))
            })
            .collect();
        joins.into_iter().map(|j| j.join().unwrap_or_else(|p| std::panic::resume_unwind(p))).collect()
    })
}

/// Spot-checks that `combine` is commutative and associative on every
/// pair and triple drawn from `samples`. Returns the first violation found.
pub fn check_combine_laws<V>(combine: &Combiner<V>, samples: &[V]) -> std::result::Result<(), String>
where
    V: Clone + PartialEq + fmt::Debug,
{
    let apply = |a: &V, b: &V| {
        let mut acc = a.clone();
        combine(&mut acc, b.clone());
        acc
    };
    for a in samples {
        for b in samples {
            if apply(a, b) != apply(b, a) {
                return Err(format!("not commutative: {a:?}, {b:?}"));
            }
        }
    }
    for a in samples {
        for b in samples {
            for c in samples {
                let left = apply(&apply(a, b), c);
                let right = apply(a, &apply(b, c));
                if left != right {
                    return Err(format!("not associative: ({a:?}, {b:?}, {c:?}) gives {left:?} vs {right:?}"));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collections::sum;
    use crate::partition::WorkerId;
    use crate::transport::run_in_process;
    use std::collections::BTreeMap;

    #[allow(clippy::ptr_arg)] // mappers take `&T` and T is String here
    fn words(line: &String, out: &mut Emitter<'_, String, u64>) -> std::result::Result<(), TaskError> {
        for w in line.split_whitespace() {
            out.emit(w.to_string(), 1);
        }
        Ok(())
    }

    #[test]
    fn eager_hand_fold() {
        let out = run_in_process(1, |mut h| {
            let src = DistVector::from_local(&mut h, vec!["a a b".to_string()]).unwrap();
            let mut engine = Engine::new(EngineConfig::default()).unwrap();
            let m = engine.map_reduce_eager(&mut h, &src, words, sum()).unwrap();
            m.gather(&mut h, WorkerId(0)).unwrap()
        })
        .unwrap();
        assert_eq!(out[0], BTreeMap::from([("a".into(), 2), ("b".into(), 1)]));
    }

    #[test]
    fn empty_source() {
        let out = run_in_process(2, |mut h| {
            let src = DistVector::<String>::from_local(&mut h, vec![]).unwrap();
            let mut engine = Engine::new(EngineConfig::with_threads(4)).unwrap();
            let eager = engine.map_reduce_eager(&mut h, &src, words, sum()).unwrap();
            let grouped = engine.map_group(&mut h, &src, words).unwrap();
            (eager.global_len(&mut h).unwrap(), grouped.groups().len())
        })
        .unwrap();
        assert!(out.iter().all(|&(a, b)| a == 0 && b == 0));
    }

    #[test]
    fn grouping_by_hand() {
        let out = run_in_process(1, |mut h| {
            let src = DistVector::from_local(&mut h, vec!["a".to_string(), "b".into(), "a".into()]).unwrap();
            let mut engine = Engine::new(EngineConfig::default()).unwrap();
            let g = engine.map_group(&mut h, &src, words).unwrap();
            let sums = engine
                .reduce_grouped(&mut h, &g, |_, vs| Ok(vs.iter().sum::<u64>()))
                .unwrap()
                .gather(&mut h, WorkerId(0))
                .unwrap();
            let lens = engine
                .reduce_grouped(&mut h, &g, |_, vs| Ok(vs.len() as u64))
                .unwrap()
                .gather(&mut h, WorkerId(0))
                .unwrap();
            (g.groups().to_vec(), sums, lens)
        })
        .unwrap();
        let (groups, sums, lens) = &out[0];
        assert_eq!(groups, &vec![("a".to_string(), vec![1, 1]), ("b".to_string(), vec![1])]);
        let expected = BTreeMap::from([("a".to_string(), 2u64), ("b".to_string(), 1)]);
        assert_eq!(sums, &expected);
        assert_eq!(lens, &expected);
    }

    #[test]
    fn group_value_order_is_rank_thread_sequence() {
        // Each element emits (0, its serial key), so group order must equal
        // serial-key order: rank-major blocks, thread-major slices.
        let out = run_in_process(3, |mut h| {
            let src = DistVector::from_fn(&h, 50, |i| i as u64);
            let mut engine = Engine::new(EngineConfig::with_threads(4)).unwrap();
            let g = engine
                .map_group(&mut h, &src, |x: &u64, out: &mut Emitter<'_, u8, u64>| {
                    out.emit(0, *x);
                    Ok(())
                })
                .unwrap();
            g.gather(&mut h, WorkerId(0)).unwrap()
        })
        .unwrap();
        assert_eq!(out[0], vec![(0u8, (0..50).collect::<Vec<u64>>())]);
    }

    #[test]
    fn mapper_error_names_element_and_aborts_everyone() {
        let out = run_in_process(2, |mut h| {
            let src = DistVector::from_fn(&h, 10, |i| i as u64);
            let mut engine = Engine::new(EngineConfig::with_threads(2)).unwrap();
            engine
                .map_reduce_eager(
                    &mut h,
                    &src,
                    |x: &u64, out: &mut Emitter<'_, u64, u64>| {
                        if *x == 7 {
                            return Err("boom".into());
                        }
                        out.emit(*x, 1);
                        Ok(())
                    },
                    sum(),
                )
                .unwrap_err()
                .to_string()
        })
        .unwrap();
        assert!(out[1].contains("element 7") && out[1].contains("boom"), "{}", out[1]);
        assert!(out[0].contains("worker 1"), "{}", out[0]);
    }

    #[test]
    fn bad_config() {
        assert!(Engine::new(EngineConfig { threads: 0, cache_capacity: 4 }).is_err());
        assert!(Engine::new(EngineConfig { threads: 1, cache_capacity: 0 }).is_err());
    }

    #[test]
    fn law_checker() {
        assert!(check_combine_laws(&sum::<u64>(), &[0, 1, 5, 99]).is_ok());
        let mean: Combiner<f64> = std::sync::Arc::new(|a: &mut f64, b: f64| *a = (*a + b) / 2.0);
        let err = check_combine_laws(&mean, &[1.0, 2.0, 4.0]).unwrap_err();
        assert!(err.contains("associative"));
        let sub: Combiner<i64> = std::sync::Arc::new(|a: &mut i64, b: i64| *a -= b);
        assert!(check_combine_laws(&sub, &[1, 2]).unwrap_err().contains("commutative"));
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("eager".parse::<JobMode>().unwrap(), JobMode::Eager);
        assert_eq!(JobMode::Delayed.to_string(), "delayed");
        assert!("lazy".parse::<JobMode>().is_err());
    }
}
