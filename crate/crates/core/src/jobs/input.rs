//! File readers that split work by byte range.
//!
//! Worker `w` of `W` takes bytes `[w*S/W, (w+1)*S/W)` of a file of size `S`
//! and owns every line whose first byte falls in that range. Together the
//! workers read each line exactly once without coordinating.

use std::fs::File;
use std::io::{BufRead, BufReader, Seek, SeekFrom};
use std::path::Path;

use super::kmeans::Point;
use crate::error::{Error, Result};

/// The lines of `path` owned by `rank`, without their line terminators.
pub fn read_line_block(path: &Path, rank: usize, size: usize) -> Result<Vec<Vec<u8>>> {
    let file = File::open(path).map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))?;
    let len = file.metadata()?.len();
    let start = len * rank as u64 / size as u64;
    let end = len * (rank as u64 + 1) / size as u64;
    let mut reader = BufReader::new(file);

    let mut pos = start;
    if start > 0 {
        // Skip the tail of a line that began before our range.
        reader.seek(SeekFrom::Start(start - 1))?;
        let skipped = reader.skip_until(b'\n')?;
        pos = start - 1 + skipped as u64;
    }
    let mut lines = Vec::new();
    while pos < end {
        let mut line = Vec::new();
        let n = reader.read_until(b'\n', &mut line)?;
        if n == 0 {
            break;
        }
        pos += n as u64;
        if line.last() == Some(&b'\n') {
            line.pop();
            if line.last() == Some(&b'\r') {
                line.pop();
            }
        }
        lines.push(line);
    }
    Ok(lines)
}

/// Lines of several files, each file split independently, in file order.
pub fn read_line_blocks<P: AsRef<Path>>(paths: &[P], rank: usize, size: usize) -> Result<Vec<Vec<u8>>> {
    let mut out = Vec::new();
    for p in paths {
        out.extend(read_line_block(p.as_ref(), rank, size)?);
    }
    Ok(out)
}

/// Parses points written one per line, coordinates separated by single
/// spaces. Blank lines are skipped.
pub fn parse_points(lines: &[Vec<u8>]) -> Result<Vec<Point>> {
    lines
        .iter()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let text = std::str::from_utf8(l).map_err(|_| Error::Input(format!("point line {i} is not UTF-8")))?;
            text.split(' ')
                .map(|c| c.parse::<f64>().map_err(|e| Error::Input(format!("point line {i}: `{c}`: {e}"))))
                .collect()
        })
        .collect()
}

pub fn format_point(p: &[f64]) -> String {
    p.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ")
}
