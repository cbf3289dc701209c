//! Direct-mapped, per-thread combining cache.
//!
//! Each key maps to slot `fnv1a64(encode(key)) % capacity`. A hit on the
//! same key combines in place; a different occupant is evicted and handed
//! back to the caller (flush-on-collision).

use crate::codec::Key;
use crate::partition::fnv1a64;

pub const DEFAULT_CACHE_CAPACITY: usize = 1 << 16;

struct Slot<K, V> {
    hash: u64,
    key: K,
    value: V,
}

pub struct ThreadLocalCache<K, V> {
    slots: Vec<Option<Slot<K, V>>>,
    occupied: usize,
    evictions: u64,
    scratch: Vec<u8>,
}

impl<K: Key, V> ThreadLocalCache<K, V> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "cache capacity must be positive");
        ThreadLocalCache {
            slots: (0..capacity).map(|_| None).collect(),
            occupied: 0,
            evictions: 0,
            scratch: Vec::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    pub fn len(&self) -> usize {
        self.occupied
    }

    pub fn is_empty(&self) -> bool {
        self.occupied == 0
    }

    pub fn evictions(&self) -> u64 {
        self.evictions
    }

    fn hash(&mut self, key: &K) -> u64 {
        self.scratch.clear();
        key.encode_to(&mut self.scratch);
        fnv1a64(&self.scratch)
    }

    /// Slot index `key` maps to.
    pub fn slot_of(&mut self, key: &K) -> usize {
        (self.hash(key) % self.slots.len() as u64) as usize
    }

    /// Folds `(key, value)` into the cache, returning the previous occupant
    /// of the slot if it held a different key.
    pub fn absorb(&mut self, key: K, value: V, combine: &dyn Fn(&mut V, V)) -> Option<(K, V)> {
        let hash = self.hash(&key);
        let idx = (hash % self.slots.len() as u64) as usize;
        match &mut self.slots[idx] {
            Some(slot) if slot.hash == hash && slot.key == key => {
                combine(&mut slot.value, value);
                None
            }
            Some(slot) => {
                let old = std::mem::replace(slot, Slot { hash, key, value });
                self.evictions += 1;
                Some((old.key, old.value))
            }
            empty @ None => {
                *empty = Some(Slot { hash, key, value });
                self.occupied += 1;
                None
            }
        }
    }

    /// Empties every occupied slot, in slot order.
    pub fn drain(&mut self) -> impl Iterator<Item = (K, V)> + '_ {
        self.occupied = 0;
        self.slots.iter_mut().filter_map(|s| s.take().map(|s| (s.key, s.value)))
    }
}
