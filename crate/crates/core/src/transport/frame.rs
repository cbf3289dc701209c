//! Wire framing: `[u32 LE length][u16 LE tag][payload]`, where the length
//! counts the tag and payload bytes that follow it.

use std::io::{self, Read, Write};

pub const HANDSHAKE_MAGIC: &[u8; 4] = b"FMR1";

/// One framed unit of collective traffic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub tag: u16,
    pub payload: Vec<u8>,
}

impl Message {
    pub fn new(tag: u16, payload: Vec<u8>) -> Self {
        Message { tag, payload }
    }
}

pub fn write_frame<W: Write>(w: &mut W, msg: &Message) -> io::Result<()> {
    let len = u32::try_from(msg.payload.len() + 2)
        .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "frame exceeds u32 length"))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(&msg.tag.to_le_bytes())?;
    w.write_all(&msg.payload)
}

/// Reads one frame; `Ok(None)` on a clean EOF before the first byte.
pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Option<Message>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_le_bytes(len) as usize;
    if len < 2 {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "frame shorter than its tag"));
    }
    let mut tag = [0u8; 2];
    r.read_exact(&mut tag)?;
    let mut payload = vec![0u8; len - 2];
    r.read_exact(&mut payload)?;
    Ok(Some(Message::new(u16::from_le_bytes(tag), payload)))
}

pub fn write_handshake<W: Write>(w: &mut W, rank: u16) -> io::Result<()> {
    w.write_all(HANDSHAKE_MAGIC)?;
    w.write_all(&rank.to_le_bytes())?;
    w.flush()
}

pub fn read_handshake<R: Read>(r: &mut R) -> io::Result<u16> {
    let mut buf = [0u8; 6];
    r.read_exact(&mut buf)?;
    if &buf[..4] != HANDSHAKE_MAGIC {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "bad handshake magic"));
    }
    Ok(u16::from_le_bytes([buf[4], buf[5]]))
}
