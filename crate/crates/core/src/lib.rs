//! In-memory, message-passing MapReduce.
//!
//! Workers form a bulk-synchronous cluster ([`transport`]) over either
//! in-process channels or a TCP full mesh. Data lives in distributed
//! collections ([`collections`]) sharded by [`partition`], and the
//! [`engine`] runs jobs in one of two modes:
//!
//! * **eager** reduction combines values while mapping, first in a
//!   per-thread direct-mapped cache, then in a per-worker aggregation map,
//!   and ships only locally reduced pairs;
//! * **delayed** reduction ships raw pairs, merge-sorts them on the owning
//!   worker into `(key, [values])` groups and applies an arbitrary reducer
//!   to each list, immediately or later.
//!
//! The [`jobs`] module carries WordCount, K-means and Monte-Carlo Pi.

pub mod clock;
pub mod codec;
pub mod collections;
pub mod engine;
mod error;
pub mod jobs;
pub mod partition;
pub mod transport;

pub use codec::{Codec, Key, KvPair, Value};
pub use collections::{Combiner, DistGroupedMap, DistHashMap, DistVector};
pub use engine::{Emitter, Engine, EngineConfig, JobMode, JobStats, TaskError};
pub use error::{Error, Result};
pub use partition::{fnv1a64, partition, WorkerId};
pub use transport::{ClusterConfig, ClusterHandle};
