//! Distributed containers: [`DistVector`], [`DistHashMap`] and the
//! delayed-reduction intermediate [`DistGroupedMap`].
//!
//! Collections do not own the cluster handle. Every collective method takes
//! the worker's `&mut ClusterHandle`, and all workers must call it together.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{AddAssign, Range};
use std::sync::Arc;

use crate::codec::{self, Codec, Key, Value};
use crate::engine::TaskError;
use crate::error::{Error, Result};
use crate::partition::{partition_with, WorkerId};
use crate::transport::ClusterHandle;

/// Merges a new contribution into an existing value in place.
pub type Combiner<V> = Arc<dyn Fn(&mut V, V) + Send + Sync>;

/// Later contributions overwrite earlier ones. The default combine.
pub fn replace<V: 'static>() -> Combiner<V> {
    Arc::new(|acc: &mut V, v: V| *acc = v)
}

pub fn sum<V: AddAssign + 'static>() -> Combiner<V> {
    Arc::new(|acc: &mut V, v: V| *acc += v)
}

/// Appends list contributions; preserves every emitted value.
pub fn append<T: 'static>() -> Combiner<Vec<T>> {
    Arc::new(|acc: &mut Vec<T>, mut v: Vec<T>| acc.append(&mut v))
}

/// Half-open range of serial keys held by `worker` when `len` elements are
/// spread over `size` workers: the first `len % size` workers hold one extra.
pub fn block_range(len: usize, size: usize, worker: usize) -> Range<usize> {
    let base = len / size;
    let extra = len % size;
    let start = worker * base + worker.min(extra);
    start..start + base + usize::from(worker < extra)
}

/// Inverse of [`block_range`].
pub fn block_owner(index: usize, len: usize, size: usize) -> WorkerId {
    assert!(index < len, "serial key {index} out of range {len}");
    let base = len / size;
    let extra = len % size;
    let cutoff = extra * (base + 1);
    if index < cutoff {
        WorkerId(index / (base + 1))
    } else {
        WorkerId(extra + (index - cutoff) / base)
    }
}

/// A sequence split into contiguous per-worker blocks. Element `i` of the
/// global sequence has serial key `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistVector<T> {
    local: Vec<T>,
    offset: usize,
    global_len: usize,
    rank: usize,
    size: usize,
}

impl<T> DistVector<T> {
    /// Adopts each worker's own block as-is; serial keys follow rank order.
    pub fn from_local(h: &mut ClusterHandle, local: Vec<T>) -> Result<Self> {
        let lens = h.all_gather((local.len() as u64).to_le_bytes().to_vec())?;
        let lens = lens.iter().map(|b| u64::decode_exact(b).map(|n| n as usize)).collect::<Result<Vec<_>>>()?;
        Ok(DistVector {
            offset: lens[..h.rank()].iter().sum(),
            global_len: lens.iter().sum(),
            local,
            rank: h.rank(),
            size: h.size(),
        })
    }

    /// Builds the balanced block of a length-`len` sequence locally on every
    /// worker, without communication. `f` maps a serial key to its element.
    pub fn from_fn(h: &ClusterHandle, len: usize, f: impl Fn(usize) -> T) -> Self {
        let range = block_range(len, h.size(), h.rank());
        DistVector {
            offset: range.start,
            local: range.map(f).collect(),
            global_len: len,
            rank: h.rank(),
            size: h.size(),
        }
    }

    pub fn local(&self) -> &[T] {
        &self.local
    }

    pub fn into_local(self) -> Vec<T> {
        self.local
    }

    /// Serial key of the first local element.
    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn global_len(&self) -> usize {
        self.global_len
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Local elements paired with their serial keys.
    pub fn iter_keyed(&self) -> impl Iterator<Item = (usize, &T)> {
        self.local.iter().enumerate().map(move |(i, x)| (self.offset + i, x))
    }
}

impl<T: Codec> DistVector<T> {
    /// Splits `data` (meaningful at `root` only) into balanced blocks.
    pub fn scatter(h: &mut ClusterHandle, root: WorkerId, data: Vec<T>) -> Result<Self> {
        let size = h.size();
        if root.0 >= size {
            return Err(Error::Contract(format!("root {root} outside cluster of {size}")));
        }
        let mut buckets = vec![Vec::new(); size];
        if h.rank() == root.0 {
            let len = data.len();
            let mut rest = data;
            for w in (0..size).rev() {
                let block = rest.split_off(block_range(len, size, w).start);
                let mut bytes = (len as u64).to_le_bytes().to_vec();
                codec::encode_seq(&block, &mut bytes);
                buckets[w] = bytes;
            }
        }
        let received = h.all_to_all(buckets)?;
        let from_root = &received[root.0];
        if from_root.len() < 8 {
            return Err(Error::MalformedFrame("scatter block without header".into()));
        }
        let global_len = u64::decode_exact(&from_root[..8])? as usize;
        let local = Vec::<T>::decode_exact(&from_root[8..])?;
        Ok(DistVector {
            offset: block_range(global_len, size, h.rank()).start,
            local,
            global_len,
            rank: h.rank(),
            size,
        })
    }

    /// Rank-order concatenation of all blocks at `root`; empty elsewhere.
    pub fn gather(&self, h: &mut ClusterHandle, root: WorkerId) -> Result<Vec<T>> {
        let mut bytes = Vec::new();
        codec::encode_seq(&self.local, &mut bytes);
        let blocks = h.gather(root, bytes)?;
        let mut out = Vec::with_capacity(if blocks.is_empty() { 0 } else { self.global_len });
        for block in blocks {
            out.extend(Vec::<T>::decode_exact(&block)?);
        }
        Ok(out)
    }
}

/// Per-destination pair buffer a map thread fills without touching the map.
pub struct EmitBuffer<K, V> {
    buckets: Vec<Vec<(K, V)>>,
    scratch: Vec<u8>,
}

impl<K: Key, V> EmitBuffer<K, V> {
    pub fn new(num_workers: usize) -> Self {
        EmitBuffer { buckets: (0..num_workers).map(|_| Vec::new()).collect(), scratch: Vec::new() }
    }

    pub fn emit(&mut self, key: K, value: V) {
        let dest = partition_with(&key, self.buckets.len(), &mut self.scratch);
        self.buckets[dest].push((key, value));
    }

    pub fn len(&self) -> usize {
        self.buckets.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.iter().all(Vec::is_empty)
    }

    pub(crate) fn into_buckets(self) -> Vec<Vec<(K, V)>> {
        self.buckets
    }
}

/// Key/value store sharded by [`partition`](crate::partition::partition):
/// worker `w` holds exactly the keys `k` with `partition(k, size) == w`.
pub struct DistHashMap<K, V> {
    shard: HashMap<K, V>,
    pending: EmitBuffer<K, V>,
    combine: Combiner<V>,
    rank: usize,
    size: usize,
}

impl<K: fmt::Debug, V: fmt::Debug> fmt::Debug for DistHashMap<K, V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DistHashMap")
            .field("rank", &self.rank)
            .field("size", &self.size)
            .field("shard", &self.shard)
            .finish()
    }
}

impl<K: Key, V: Value> DistHashMap<K, V> {
    /// An empty map. Without `combine`, a newer value replaces an older one.
    pub fn new(h: &ClusterHandle, combine: Option<Combiner<V>>) -> Self {
        Self::from_shard(h, HashMap::new(), combine)
    }

    /// Adopts a hand-built shard as-is, misplaced keys included; call
    /// [`rebalance`](Self::rebalance) to restore placement.
    pub fn from_shard(h: &ClusterHandle, shard: HashMap<K, V>, combine: Option<Combiner<V>>) -> Self {
        DistHashMap {
            shard,
            pending: EmitBuffer::new(h.size()),
            combine: combine.unwrap_or_else(replace),
            rank: h.rank(),
            size: h.size(),
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn shard(&self) -> &HashMap<K, V> {
        &self.shard
    }

    pub fn into_shard(self) -> HashMap<K, V> {
        self.shard
    }

    pub fn combiner(&self) -> &Combiner<V> {
        &self.combine
    }

    /// Buffers a contribution; it reaches the owner's shard at the next sync.
    pub fn emit(&mut self, key: K, value: V) {
        self.pending.emit(key, value);
    }

    /// A private buffer for a map thread; hand it back with [`extend`](Self::extend).
    pub fn emit_buffer(&self) -> EmitBuffer<K, V> {
        EmitBuffer::new(self.size)
    }

    pub fn extend(&mut self, buffer: EmitBuffer<K, V>) {
        for (dest, pairs) in buffer.into_buckets().into_iter().enumerate() {
            self.pending.buckets[dest].extend(pairs);
        }
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub(crate) fn merge_local(&mut self, key: K, value: V) {
        match self.shard.get_mut(&key) {
            Some(acc) => (self.combine)(acc, value),
            None => {
                self.shard.insert(key, value);
            }
        }
    }

    /// Routes every buffered contribution to its owner and merges it there,
    /// in (source rank, emission order). Returns the pairs this worker sent.
    pub fn sync(&mut self, h: &mut ClusterHandle) -> Result<u64> {
        let pending = std::mem::replace(&mut self.pending, EmitBuffer::new(self.size));
        let buckets = pending.into_buckets();
        let sent = buckets.iter().map(Vec::len).sum::<usize>() as u64;
        let encoded =
            buckets.iter().map(|b| codec::encode_pairs(b.iter().map(|(k, v)| (k, v)))).collect::<Result<Vec<_>>>();
        let encoded = h.agree(encoded)?;
        self.merge_received(h.all_to_all(encoded)?)?;
        Ok(sent)
    }

    pub(crate) fn merge_received(&mut self, received: Vec<Vec<u8>>) -> Result<()> {
        let mut pairs = Vec::new();
        for bytes in received {
            pairs.clear();
            codec::decode_pairs_into::<K, V>(&bytes, &mut pairs)?;
            for (k, v) in pairs.drain(..) {
                self.merge_local(k, v);
            }
        }
        Ok(())
    }

    /// Collective lookup: the owner answers and broadcasts to everyone.
    pub fn get(&self, h: &mut ClusterHandle, key: &K) -> Result<Option<V>> {
        let owner = partition_with(key, self.size, &mut Vec::new());
        let payload = if owner == self.rank {
            match self.shard.get(key) {
                Some(v) => {
                    let mut b = vec![1u8];
                    v.encode_to(&mut b);
                    b
                }
                None => vec![0u8],
            }
        } else {
            Vec::new()
        };
        let answer = h.broadcast(WorkerId(owner), payload)?;
        match answer.split_first() {
            Some((0, _)) => Ok(None),
            Some((1, rest)) => Ok(Some(V::decode_exact(rest)?)),
            _ => Err(Error::MalformedFrame("bad lookup reply".into())),
        }
    }

    /// Union of all shards at `root` (disjoint by construction); empty elsewhere.
    pub fn gather(&self, h: &mut ClusterHandle, root: WorkerId) -> Result<BTreeMap<K, V>> {
        let bytes = codec::encode_pairs(self.shard.iter())?;
        let shards = h.gather(root, bytes)?;
        let mut out = BTreeMap::new();
        let mut pairs = Vec::new();
        for bytes in shards {
            pairs.clear();
            codec::decode_pairs_into::<K, V>(&bytes, &mut pairs)?;
            out.extend(pairs.drain(..));
        }
        Ok(out)
    }

    /// Sum of shard sizes, known to every worker.
    pub fn global_len(&self, h: &mut ClusterHandle) -> Result<usize> {
        let all = h.all_gather((self.shard.len() as u64).to_le_bytes().to_vec())?;
        all.iter().map(|b| u64::decode_exact(b).map(|n| n as usize)).sum()
    }

    /// True when every local key belongs to this worker.
    pub fn is_placed(&self) -> bool {
        let mut scratch = Vec::new();
        self.shard.keys().all(|k| partition_with(k, self.size, &mut scratch) == self.rank)
    }

    /// Moves misplaced entries to their owners, combining on arrival.
    /// Returns how many entries this worker sent away.
    pub fn rebalance(&mut self, h: &mut ClusterHandle) -> Result<usize> {
        let mut scratch = Vec::new();
        let misplaced: Vec<K> =
            self.shard.keys().filter(|k| partition_with(*k, self.size, &mut scratch) != self.rank).cloned().collect();
        let mut buckets: Vec<Vec<(K, V)>> = (0..self.size).map(|_| Vec::new()).collect();
        for k in misplaced {
            let dest = partition_with(&k, self.size, &mut scratch);
            let v = self.shard.remove(&k).expect("key present");
            buckets[dest].push((k, v));
        }
        // Keep the outgoing order independent of hash-map iteration order.
        for b in &mut buckets {
            b.sort_by(|a, b| a.0.cmp(&b.0));
        }
        let moved = buckets.iter().map(Vec::len).sum();
        let encoded =
            buckets.iter().map(|b| codec::encode_pairs(b.iter().map(|(k, v)| (k, v)))).collect::<Result<Vec<_>>>();
        let encoded = h.agree(encoded)?;
        self.merge_received(h.all_to_all(encoded)?)?;
        Ok(moved)
    }
}

/// Delayed-reduction intermediate: per worker, `(key, values)` groups in
/// strictly increasing key order, each key living on its owner.
#[derive(Debug, Clone, PartialEq)]
pub struct DistGroupedMap<K, V> {
    groups: Vec<(K, Vec<V>)>,
    rank: usize,
    size: usize,
}

impl<K: Key, V: Value> DistGroupedMap<K, V> {
    pub(crate) fn from_sorted(groups: Vec<(K, Vec<V>)>, rank: usize, size: usize) -> Self {
        debug_assert!(groups.windows(2).all(|w| w[0].0 < w[1].0));
        DistGroupedMap { groups, rank, size }
    }

    pub fn groups(&self) -> &[(K, Vec<V>)] {
        &self.groups
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Number of local values across all local groups.
    pub fn local_pair_count(&self) -> usize {
        self.groups.iter().map(|(_, vs)| vs.len()).sum()
    }

    pub fn is_strictly_sorted(&self) -> bool {
        self.groups.windows(2).all(|w| w[0].0 < w[1].0)
    }

    /// Applies `reduce` to every local group; no data moves. The grouped map
    /// is left intact, so it can be reduced again later with another reducer.
    pub fn reduce<R, F>(&self, h: &mut ClusterHandle, reduce: F) -> Result<DistHashMap<K, R>>
    where
        R: Value,
        F: Fn(&K, &[V]) -> std::result::Result<R, TaskError>,
    {
        let mut shard = HashMap::with_capacity(self.groups.len());
        let mut local = Ok(());
        for (k, vs) in &self.groups {
            match reduce(k, vs) {
                Ok(r) => {
                    shard.insert(k.clone(), r);
                }
                Err(e) => {
                    local = Err(Error::Task {
                        at: format!("key {:?}", String::from_utf8_lossy(&k.to_bytes())),
                        message: e.to_string(),
                    });
                    break;
                }
            }
        }
        h.agree(local)?;
        Ok(DistHashMap::from_shard(h, shard, None))
    }

    /// All groups at `root`, sorted by key; empty elsewhere.
    pub fn gather(&self, h: &mut ClusterHandle, root: WorkerId) -> Result<Vec<(K, Vec<V>)>> {
        let mut bytes = Vec::new();
        let mut scratch = Vec::new();
        for (k, vs) in &self.groups {
            scratch.clear();
            codec::encode_seq(vs, &mut scratch);
            let mut key = Vec::new();
            k.encode_to(&mut key);
            bytes.extend(codec::encode_kv(&key, &scratch)?);
        }
        let parts = h.gather(root, bytes)?;
        let mut out = Vec::new();
        for part in parts {
            codec::decode_pairs_into::<K, Vec<V>>(&part, &mut out)?;
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(out)
    }
}
