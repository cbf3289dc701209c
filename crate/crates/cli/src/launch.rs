//! Local multi-process TCP clusters.

use std::io::Write;
use std::path::Path;
use std::process::{Child, Command, ExitStatus};
use std::thread;
use std::time::{Duration, Instant};

use bspmr::transport::free_loopback_endpoints;
use bspmr::{Error, Result};

/// Flags the launcher sets on each child itself.
const RESERVED: [&str; 4] = ["--backend", "--cluster-file", "--rank", "--workers"];

/// How long surviving children get to finish once a sibling has failed.
const FAILURE_GRACE: Duration = Duration::from_secs(10);

fn status_code(status: ExitStatus) -> i32 {
    if let Some(code) = status.code() {
        return code;
    }
    #[cfg(unix)]
    {
        use std::os::unix::process::ExitStatusExt;
        if let Some(sig) = status.signal() {
            return 128 + sig;
        }
    }
    1
}

fn teardown(children: &mut [Child]) {
    for c in children.iter_mut() {
        let _ = c.kill();
    }
    for c in children.iter_mut() {
        let _ = c.wait();
    }
}

/// Starts `workers` copies of `exe run` on a fresh loopback cluster file,
/// passing `args` through, and returns the largest child exit status.
pub fn launch(exe: &Path, workers: usize, args: &[String]) -> Result<i32> {
    if workers == 0 {
        return Err(Error::Config("launch needs at least one worker".into()));
    }
    if let Some(flag) = args.iter().find(|a| RESERVED.iter().any(|r| a.split('=').next() == Some(r))) {
        return Err(Error::Config(format!("{flag} is set by the launcher")));
    }
    let endpoints = free_loopback_endpoints(workers).map_err(|e| Error::Transport(e.to_string()))?;
    let mut cluster_file = tempfile::Builder::new().prefix("bspmr-cluster-").suffix(".txt").tempfile()?;
    for e in &endpoints {
        writeln!(cluster_file, "{e}")?;
    }
    cluster_file.flush()?;

    let mut children = Vec::with_capacity(workers);
    for rank in 0..workers {
        let spawned = Command::new(exe)
            .arg("run")
            .args(["--backend", "tcp", "--workers", &workers.to_string(), "--rank", &rank.to_string()])
            .arg("--cluster-file")
            .arg(cluster_file.path())
            .args(args)
            .spawn();
        match spawned {
            Ok(c) => children.push(c),
            Err(e) => {
                teardown(&mut children);
                return Err(Error::Io(std::io::Error::new(e.kind(), format!("spawning worker {rank}: {e}"))));
            }
        }
    }
    Ok(supervise(children))
}

fn supervise(mut children: Vec<Child>) -> i32 {
    let mut codes: Vec<Option<i32>> = vec![None; children.len()];
    let mut failed_at: Option<Instant> = None;
    loop {
        for (i, c) in children.iter_mut().enumerate() {
            if codes[i].is_none() {
                if let Ok(Some(status)) = c.try_wait() {
                    let code = status_code(status);
                    if code != 0 && failed_at.is_none() {
                        failed_at = Some(Instant::now());
                    }
                    codes[i] = Some(code);
                }
            }
        }
        if codes.iter().all(Option::is_some) {
            break;
        }
        if failed_at.is_some_and(|t| t.elapsed() > FAILURE_GRACE) {
            // stragglers count as failed, not by their kill signal
            for (i, c) in children.iter_mut().enumerate() {
                if codes[i].is_none() {
                    let _ = c.kill();
                    let _ = c.wait();
                    codes[i] = Some(1);
                }
            }
            break;
        }
        thread::sleep(Duration::from_millis(20));
    }
    codes.into_iter().flatten().max().unwrap_or(0)
}
