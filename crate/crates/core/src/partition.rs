//! Hash partitioning of keys onto workers.

use std::fmt;

use crate::codec::Codec;

const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Rank of a worker within a cluster, in `[0, size)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct WorkerId(pub usize);

impl WorkerId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl From<usize> for WorkerId {
    fn from(rank: usize) -> Self {
        WorkerId(rank)
    }
}

impl fmt::Display for WorkerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET_BASIS, |hash, &b| (hash ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Owner of a key whose canonical encoding is `bytes`.
pub fn partition_bytes(bytes: &[u8], num_workers: usize) -> WorkerId {
    assert!(num_workers >= 1, "partition over zero workers");
    WorkerId((fnv1a64(bytes) % num_workers as u64) as usize)
}

/// Owner of `key`: FNV-1a 64 of its canonical encoding, modulo `num_workers`.
pub fn partition<K: Codec>(key: &K, num_workers: usize) -> WorkerId {
    partition_bytes(&key.to_bytes(), num_workers)
}

/// Reusable-buffer variant for hot loops.
pub(crate) fn partition_with<K: Codec>(key: &K, num_workers: usize, scratch: &mut Vec<u8>) -> usize {
    if num_workers == 1 {
        return 0;
    }
    scratch.clear();
    key.encode_to(scratch);
    (fnv1a64(scratch) % num_workers as u64) as usize
}
