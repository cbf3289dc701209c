//! Full-mesh TCP backend. The lower rank of each pair dials the higher one
//! and introduces itself with `FMR1` + its u16 LE rank; the accepting side
//! learns the peer's rank from that handshake.
//!
//! After the mesh is up every peer link gets a reader thread and a writer
//! thread bridging the socket to the handle's queues, so a collective can
//! enqueue all of its sends before blocking on any receive.

use std::io::{self, BufReader, BufWriter, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, Sender};
use std::thread;
use std::time::{Duration, Instant};

use super::frame::{read_frame, read_handshake, write_frame, write_handshake, Message};
use super::{Backend, ClusterConfig, ClusterHandle, TrafficStats};
use crate::error::{Error, Result};

const RETRY_PAUSE: Duration = Duration::from_millis(20);

pub(super) fn connect(config: &ClusterConfig) -> Result<ClusterHandle> {
    let rank = config.rank;
    let n = config.num_workers;
    let endpoints = &config.endpoints;
    let deadline = Instant::now() + config.connect_timeout;

    let listener = TcpListener::bind(&endpoints[rank])
        .map_err(|e| Error::Config(format!("rank {rank} cannot bind {}: {e}", endpoints[rank])))?;
    listener.set_nonblocking(true)?;

    let mut streams: Vec<Option<TcpStream>> = (0..n).map(|_| None).collect();

    let mut unreached: Vec<usize> = (rank + 1..n).collect();
    loop {
        unreached.retain(|&peer| match dial(&endpoints[peer], deadline) {
            Ok(mut stream) => match write_handshake(&mut stream, rank as u16) {
                Ok(()) => {
                    streams[peer] = Some(stream);
                    false
                }
                Err(_) => true,
            },
            Err(_) => true,
        });
        if unreached.is_empty() {
            break;
        }
        if Instant::now() >= deadline {
            return Err(Error::Startup { unreachable: unreached.iter().map(|&p| endpoints[p].clone()).collect() });
        }
        thread::sleep(RETRY_PAUSE);
    }

    let mut accepted = 0;
    while accepted < rank {
        match listener.accept() {
            Ok((mut stream, _)) => {
                stream.set_nonblocking(false)?;
                let remaining = deadline.saturating_duration_since(Instant::now());
                stream.set_read_timeout(Some(remaining.max(Duration::from_millis(100))))?;
                let peer = match read_handshake(&mut stream) {
                    Ok(peer) => usize::from(peer),
                    // Not one of ours (port scanner, stale client): ignore it.
                    Err(_) => continue,
                };
                if peer >= rank {
                    return Err(Error::Config(format!("rank {rank} was dialed by rank {peer}; only lower ranks dial")));
                }
                if streams[peer].is_some() {
                    return Err(Error::Config(format!("rank collision: two peers claim rank {peer}")));
                }
                streams[peer] = Some(stream);
                accepted += 1;
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                if Instant::now() >= deadline {
                    return Err(Error::Startup {
                        unreachable: (0..rank)
                            .filter(|&p| streams[p].is_none())
                            .map(|p| endpoints[p].clone())
                            .collect(),
                    });
                }
                thread::sleep(RETRY_PAUSE);
            }
            Err(e) => return Err(e.into()),
        }
    }
    drop(listener);

    let mut outgoing = Vec::with_capacity(n);
    let mut incoming = Vec::with_capacity(n);
    let mut io_threads = Vec::new();
    for (peer, stream) in streams.into_iter().enumerate() {
        let Some(stream) = stream else {
            outgoing.push(None);
            incoming.push(None);
            continue;
        };
        stream.set_read_timeout(None)?;
        stream.set_nodelay(true)?;
        let read_half = stream.try_clone()?;

        let (in_tx, in_rx) = mpsc::channel();
        thread::Builder::new().name(format!("rank{rank}-read{peer}")).spawn(move || pump_reads(read_half, in_tx))?;

        let (out_tx, out_rx) = mpsc::channel();
        io_threads.push(
            thread::Builder::new()
                .name(format!("rank{rank}-write{peer}"))
                .spawn(move || pump_writes(stream, out_rx))?,
        );
        outgoing.push(Some(out_tx));
        incoming.push(Some(in_rx));
    }

    Ok(ClusterHandle {
        rank,
        size: n,
        backend: Backend::Tcp,
        outgoing,
        incoming,
        collective_timeout: config.collective_timeout,
        stats: TrafficStats::default(),
        io_threads,
    })
}

fn dial(endpoint: &str, deadline: Instant) -> io::Result<TcpStream> {
    let addr: SocketAddr = endpoint
        .to_socket_addrs()?
        .next()
        .ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, "endpoint resolves to nothing"))?;
    let budget =
        deadline.saturating_duration_since(Instant::now()).clamp(Duration::from_millis(10), Duration::from_secs(1));
    TcpStream::connect_timeout(&addr, budget)
}

// Exits on EOF or error; dropping `tx` surfaces as a disconnect to the handle.
fn pump_reads(stream: TcpStream, tx: Sender<Message>) {
    let mut reader = BufReader::with_capacity(1 << 16, stream);
    while let Ok(Some(msg)) = read_frame(&mut reader) {
        if tx.send(msg).is_err() {
            break;
        }
    }
}

fn pump_writes(stream: TcpStream, rx: Receiver<Message>) {
    let mut writer = BufWriter::with_capacity(1 << 16, &stream);
    for msg in rx {
        if write_frame(&mut writer, &msg).and_then(|_| writer.flush()).is_err() {
            return;
        }
    }
    let _ = writer.flush();
    drop(writer);
    let _ = stream.shutdown(Shutdown::Write);
}

/// Reserves `n` distinct loopback endpoints by binding port 0 and releasing.
pub fn free_loopback_endpoints(n: usize) -> Result<Vec<String>> {
    let listeners = (0..n).map(|_| TcpListener::bind("127.0.0.1:0")).collect::<io::Result<Vec<_>>>()?;
    listeners.iter().map(|l| Ok(l.local_addr()?.to_string())).collect()
}
