//! WordCount. A token is a maximal run of ASCII letters and digits,
//! lowercased; every other character separates tokens.

use crate::collections::{sum, DistHashMap, DistVector};
use crate::engine::{Emitter, Engine, JobMode, TaskError};
use crate::error::Result;
use crate::transport::ClusterHandle;

pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_ascii_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_ascii_lowercase)
}

fn map_line<L: AsRef<[u8]>>(line: &L, out: &mut Emitter<'_, String, u64>) -> Result<(), TaskError> {
    let text =
        std::str::from_utf8(line.as_ref()).map_err(|e| TaskError::new(format!("line is not valid UTF-8: {e}")))?;
    for token in tokens(text) {
        out.emit(token, 1);
    }
    Ok(())
}

/// Counts tokens over a distributed collection of lines.
pub fn wordcount<L>(
    h: &mut ClusterHandle,
    engine: &mut Engine,
    lines: &DistVector<L>,
    mode: JobMode,
) -> Result<DistHashMap<String, u64>>
where
    L: AsRef<[u8]> + Sync,
{
    match mode {
        JobMode::Eager => engine.map_reduce_eager(h, lines, map_line, sum()),
        JobMode::Delayed => engine.map_reduce_delayed(h, lines, map_line, |_, counts| Ok(counts.iter().sum::<u64>())),
    }
}
