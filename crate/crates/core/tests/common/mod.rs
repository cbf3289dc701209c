#![allow(dead_code)]

use std::time::Duration;

use bspmr::transport::{self, Backend, ClusterHandle};

pub const BACKENDS: [Backend; 2] = [Backend::InProcess, Backend::Tcp];

/// Runs `work` on every worker of a fresh cluster, results in rank order.
pub fn run_cluster<T, F>(backend: Backend, n: usize, work: F) -> Vec<T>
where
    T: Send,
    F: Fn(ClusterHandle) -> T + Sync,
{
    let handles = match backend {
        Backend::InProcess => transport::cluster_init(&transport::ClusterConfig::in_process(n)).unwrap(),
        Backend::Tcp => transport::loopback_tcp(n, Duration::from_secs(60)).unwrap(),
    };
    transport::run_workers(handles, work)
}

/// Deterministic 64-bit mixer for generating test workloads.
pub fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}
pub mod oracle;
