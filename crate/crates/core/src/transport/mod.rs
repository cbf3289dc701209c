//! Bulk-synchronous collectives over in-process channels or a TCP mesh.
//!
//! Both backends reduce to the same shape: every worker owns one ordered
//! outgoing queue and one incoming queue per peer. Collectives are matched
//! purely by call order, so every worker must issue the same sequence of
//! collective calls. Each message carries a tag naming the collective it
//! belongs to, which turns an ordering mistake into an error instead of
//! silently pairing the wrong payloads.

mod frame;
mod tcp;

use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crate::error::{Error, Result};
use crate::partition::WorkerId;

pub use frame::{read_frame, read_handshake, write_frame, write_handshake, Message, HANDSHAKE_MAGIC};
pub use tcp::free_loopback_endpoints;

pub const DEFAULT_CONNECT_TIMEOUT: Duration = Duration::from_secs(30);
pub const DEFAULT_COLLECTIVE_TIMEOUT: Duration = Duration::from_secs(120);

const TAG_BARRIER: u16 = 1;
const TAG_ALL_TO_ALL: u16 = 2;
const TAG_GATHER: u16 = 3;
const TAG_BROADCAST: u16 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    InProcess,
    Tcp,
}

#[derive(Debug, Clone)]
pub struct ClusterConfig {
    pub num_workers: usize,
    pub backend: Backend,
    /// `host:port` per rank; TCP only.
    pub endpoints: Vec<String>,
    /// This process's rank; TCP only.
    pub rank: usize,
    pub connect_timeout: Duration,
    pub collective_timeout: Duration,
}

impl ClusterConfig {
    pub fn in_process(num_workers: usize) -> Self {
        ClusterConfig {
            num_workers,
            backend: Backend::InProcess,
            endpoints: Vec::new(),
            rank: 0,
            connect_timeout: DEFAULT_CONNECT_TIMEOUT,
            collective_timeout: DEFAULT_COLLECTIVE_TIMEOUT,
        }
    }

    pub fn tcp(endpoints: Vec<String>, rank: usize) -> Self {
        ClusterConfig {
            num_workers: endpoints.len(),
            backend: Backend::Tcp,
            endpoints,
            rank,
            connect_timeout: DEFAULT_CONNECT_TIMEOUT,
            collective_timeout: DEFAULT_COLLECTIVE_TIMEOUT,
        }
    }

    pub fn with_connect_timeout(mut self, timeout: Duration) -> Self {
        self.connect_timeout = timeout;
        self
    }

    pub fn with_collective_timeout(mut self, timeout: Duration) -> Self {
        self.collective_timeout = timeout;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_workers == 0 {
            return Err(Error::Config("cluster needs at least one worker".into()));
        }
        if self.backend == Backend::Tcp {
            if self.endpoints.len() != self.num_workers {
                return Err(Error::Config(format!(
                    "{} endpoints for {} workers",
                    self.endpoints.len(),
                    self.num_workers
                )));
            }
            if self.rank >= self.num_workers {
                return Err(Error::Config(format!("rank {} outside cluster of {}", self.rank, self.num_workers)));
            }
            if self.num_workers > usize::from(u16::MAX) {
                return Err(Error::Config("ranks must fit in u16".into()));
            }
            for (i, a) in self.endpoints.iter().enumerate() {
                if self.endpoints[..i].contains(a) {
                    return Err(Error::Config(format!("duplicate endpoint {a}")));
                }
            }
        }
        Ok(())
    }
}

/// Parses a cluster spec file: one `host:port` per line, line number = rank.
pub fn parse_cluster_file(text: &str) -> Result<Vec<String>> {
    let lines: Vec<&str> = text.trim_end().lines().map(str::trim).collect();
    if let Some(i) = lines.iter().position(|l| l.is_empty()) {
        return Err(Error::Config(format!("blank line {} in cluster file", i + 1)));
    }
    if lines.is_empty() {
        return Err(Error::Config("cluster file lists no endpoints".into()));
    }
    for l in &lines {
        if !l.contains(':') {
            return Err(Error::Config(format!("endpoint `{l}` is not host:port")));
        }
    }
    Ok(lines.into_iter().map(String::from).collect())
}

/// Creates the handles for a cluster. In-process configs yield one handle
/// per worker; TCP configs yield this process's single handle once the full
/// mesh is up.
pub fn cluster_init(config: &ClusterConfig) -> Result<Vec<ClusterHandle>> {
    config.validate()?;
    match config.backend {
        Backend::InProcess => Ok(in_process_handles(config)),
        Backend::Tcp => Ok(vec![tcp::connect(config)?]),
    }
}

fn in_process_handles(config: &ClusterConfig) -> Vec<ClusterHandle> {
    let n = config.num_workers;
    let mut outgoing: Vec<Vec<Option<Sender<Message>>>> = (0..n).map(|_| empty_row(n)).collect();
    let mut incoming: Vec<Vec<Option<Receiver<Message>>>> = (0..n).map(|_| empty_row(n)).collect();
    for src in 0..n {
        for dst in (0..n).filter(|&d| d != src) {
            let (tx, rx) = mpsc::channel();
            outgoing[src][dst] = Some(tx);
            incoming[dst][src] = Some(rx);
        }
    }
    outgoing
        .into_iter()
        .zip(incoming)
        .enumerate()
        .map(|(rank, (out, inc))| ClusterHandle {
            rank,
            size: n,
            backend: Backend::InProcess,
            outgoing: out,
            incoming: inc,
            collective_timeout: config.collective_timeout,
            stats: TrafficStats::default(),
            io_threads: Vec::new(),
        })
        .collect()
}

fn empty_row<T>(n: usize) -> Vec<Option<T>> {
    (0..n).map(|_| None).collect()
}

/// Runs `work` once per handle, each on its own thread, and returns the
/// results in rank order. A single handle runs on the calling thread.
pub fn run_workers<T, F>(handles: Vec<ClusterHandle>, work: F) -> Vec<T>
where
    T: Send,
    F: Fn(ClusterHandle) -> T + Sync,
{
    if handles.len() == 1 {
        return handles.into_iter().map(&work).collect();
    }
    let work = &work;
    thread::scope(|scope| {
        let joins: Vec<_> = handles
            .into_iter()
            .map(|h| {
                thread::Builder::new()
                    .name(format!("worker-{}", h.rank))
                    .spawn_scoped(scope, move || work(h))
                    .expect("spawn worker thread")
            })
            .collect();
        joins.into_iter().map(|j| j.join().unwrap_or_else(|p| std::panic::resume_unwind(p))).collect()
    })
}

/// Convenience: start an in-process cluster of `n` workers and run `work`.
pub fn run_in_process<T, F>(n: usize, work: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(ClusterHandle) -> T + Sync,
{
    let handles = cluster_init(&ClusterConfig::in_process(n))?;
    Ok(run_workers(handles, work))
}

/// Starts a TCP cluster of `n` workers on free loopback ports inside this
/// process, one connecting thread per rank, and returns the handles in rank
/// order.
pub fn loopback_tcp(n: usize, collective_timeout: Duration) -> Result<Vec<ClusterHandle>> {
    let endpoints = free_loopback_endpoints(n)?;
    let configs: Vec<ClusterConfig> = (0..n)
        .map(|rank| ClusterConfig::tcp(endpoints.clone(), rank).with_collective_timeout(collective_timeout))
        .collect();
    for c in &configs {
        c.validate()?;
    }
    thread::scope(|scope| {
        let joins: Vec<_> = configs.iter().map(|c| scope.spawn(move || tcp::connect(c))).collect();
        joins.into_iter().map(|j| j.join().unwrap_or_else(|p| std::panic::resume_unwind(p))).collect()
    })
}

/// Cumulative payload traffic through a handle. Loopback deliveries to the
/// worker itself are counted separately and never touch a queue.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrafficStats {
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub messages_sent: u64,
    pub messages_received: u64,
    pub loopback_bytes: u64,
}

/// One worker's endpoint into the cluster.
pub struct ClusterHandle {
    rank: usize,
    size: usize,
    backend: Backend,
    outgoing: Vec<Option<Sender<Message>>>,
    incoming: Vec<Option<Receiver<Message>>>,
    collective_timeout: Duration,
    stats: TrafficStats,
    io_threads: Vec<JoinHandle<()>>,
}

impl std::fmt::Debug for ClusterHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClusterHandle")
            .field("rank", &self.rank)
            .field("size", &self.size)
            .field("backend", &self.backend)
            .finish()
    }
}

impl ClusterHandle {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn worker_id(&self) -> WorkerId {
        WorkerId(self.rank)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn stats(&self) -> TrafficStats {
        self.stats
    }

    pub fn set_collective_timeout(&mut self, timeout: Duration) {
        self.collective_timeout = timeout;
    }

    fn send(&mut self, dest: usize, tag: u16, payload: Vec<u8>) -> Result<()> {
        let len = payload.len() as u64;
        let tx = self.outgoing[dest].as_ref().expect("no queue to self");
        tx.send(Message::new(tag, payload))
            .map_err(|_| Error::Transport(format!("rank {dest} is no longer reachable")))?;
        self.stats.bytes_sent += len;
        self.stats.messages_sent += 1;
        Ok(())
    }

    fn recv(&mut self, src: usize, tag: u16) -> Result<Vec<u8>> {
        let rx = self.incoming[src].as_ref().expect("no queue from self");
        let msg = rx.recv_timeout(self.collective_timeout).map_err(|e| match e {
            RecvTimeoutError::Timeout => Error::Transport(format!(
                "rank {} timed out after {:?} waiting for rank {src}",
                self.rank, self.collective_timeout
            )),
            RecvTimeoutError::Disconnected => Error::Transport(format!("rank {src} disconnected")),
        })?;
        if msg.tag != tag {
            return Err(Error::Transport(format!(
                "collective mismatch: rank {} expected tag {tag} from rank {src}, got {}",
                self.rank, msg.tag
            )));
        }
        self.stats.bytes_received += msg.payload.len() as u64;
        self.stats.messages_received += 1;
        Ok(msg.payload)
    }

    fn check_root(&self, root: WorkerId) -> Result<usize> {
        if root.0 >= self.size {
            return Err(Error::Contract(format!("root {root} outside cluster of {}", self.size)));
        }
        Ok(root.0)
    }

    /// Returns once every worker has entered this barrier.
    pub fn barrier(&mut self) -> Result<()> {
        for peer in self.peers() {
            self.send(peer, TAG_BARRIER, Vec::new())?;
        }
        for peer in self.peers() {
            self.recv(peer, TAG_BARRIER)?;
        }
        Ok(())
    }

    /// `buckets[j]` goes to worker `j`; the result's entry `i` is what worker
    /// `i` addressed to this worker.
    pub fn all_to_all(&mut self, mut buckets: Vec<Vec<u8>>) -> Result<Vec<Vec<u8>>> {
        if buckets.len() != self.size {
            return Err(Error::Contract(format!("all_to_all needs {} buckets, got {}", self.size, buckets.len())));
        }
        let own = std::mem::take(&mut buckets[self.rank]);
        self.stats.loopback_bytes += own.len() as u64;
        for (dest, bucket) in buckets.into_iter().enumerate() {
            if dest != self.rank {
                self.send(dest, TAG_ALL_TO_ALL, bucket)?;
            }
        }
        let mut own = Some(own);
        (0..self.size)
            .map(
                |src| {
                    if src == self.rank {
                        Ok(own.take().expect("own bucket"))
                    } else {
                        self.recv(src, TAG_ALL_TO_ALL)
                    }
                },
            )
            .collect()
    }

    /// Every worker receives every worker's payload, in rank order.
    pub fn all_gather(&mut self, payload: Vec<u8>) -> Result<Vec<Vec<u8>>> {
        let buckets = vec![payload; self.size];
        self.all_to_all(buckets)
    }

    /// At `root`, the payloads of all workers in rank order; elsewhere empty.
    pub fn gather(&mut self, root: WorkerId, payload: Vec<u8>) -> Result<Vec<Vec<u8>>> {
        let root = self.check_root(root)?;
        if self.rank != root {
            self.send(root, TAG_GATHER, payload)?;
            return Ok(Vec::new());
        }
        self.stats.loopback_bytes += payload.len() as u64;
        let mut own = Some(payload);
        (0..self.size)
            .map(|src| if src == root { Ok(own.take().expect("own payload")) } else { self.recv(src, TAG_GATHER) })
            .collect()
    }

    /// Every worker returns `root`'s payload; other workers' arguments are ignored.
    pub fn broadcast(&mut self, root: WorkerId, payload: Vec<u8>) -> Result<Vec<u8>> {
        let root = self.check_root(root)?;
        if self.rank == root {
            for peer in self.peers() {
                self.send(peer, TAG_BROADCAST, payload.clone())?;
            }
            Ok(payload)
        } else {
            self.recv(root, TAG_BROADCAST)
        }
    }

    /// Collective status check: succeeds only if every worker's `local`
    /// is `Ok`. A worker whose own step failed gets its own error back;
    /// the others get [`Error::Aborted`] naming the lowest failing rank.
    pub fn agree<T>(&mut self, local: Result<T>) -> Result<T> {
        let status = match &local {
            Ok(_) => Vec::new(),
            Err(e) => {
                let mut s = vec![1u8];
                s.extend_from_slice(e.to_string().as_bytes());
                s
            }
        };
        let all = self.all_gather(status)?;
        let local = Ok(local?);
        match all.iter().enumerate().find(|(_, s)| !s.is_empty()) {
            Some((rank, s)) => Err(Error::Aborted { rank, message: String::from_utf8_lossy(&s[1..]).into_owned() }),
            None => local,
        }
    }

    fn peers(&self) -> impl Iterator<Item = usize> {
        let rank = self.rank;
        (0..self.size).filter(move |&p| p != rank)
    }
}

impl Drop for ClusterHandle {
    fn drop(&mut self) {
        // Closing the queues lets TCP writer threads drain and shut down.
        self.outgoing.clear();
        for t in self.io_threads.drain(..) {
            let _ = t.join();
        }
    }
}
