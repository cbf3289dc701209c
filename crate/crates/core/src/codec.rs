//! Canonical byte encodings and the key/value wire layout.
//!
//! A pair is framed as
//!
//! ```text
//! [u32 LE key length][key bytes][u32 LE value length][value bytes]
//! ```
//!
//! Built-in encodings: text is its UTF-8 bytes, integers and floats are
//! little-endian fixed width, and a `Vec<T>` is a u32 LE element count
//! followed by the elements (each element additionally length-prefixed
//! when `T` has no fixed width).

use std::hash::Hash;

use crate::error::{Error, Result};

/// Deterministic, injective byte encoding.
pub trait Codec: Sized {
    /// Set when every value of the type encodes to exactly this many bytes.
    const FIXED_WIDTH: Option<usize> = None;

    fn encode_to(&self, out: &mut Vec<u8>);

    /// Decodes from a slice holding exactly one encoded value.
    fn decode_exact(bytes: &[u8]) -> Result<Self>;

    fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::FIXED_WIDTH.unwrap_or(16));
        self.encode_to(&mut out);
        out
    }
}

/// Keys need a total order and an encoding; `Hash` is for local hash maps.
pub trait Key: Codec + Ord + Hash + Clone + Send + Sync + 'static {}
impl<T: Codec + Ord + Hash + Clone + Send + Sync + 'static> Key for T {}

pub trait Value: Codec + Clone + Send + Sync + 'static {}
impl<T: Codec + Clone + Send + Sync + 'static> Value for T {}

pub(crate) fn checked_len(len: usize) -> Result<u32> {
    u32::try_from(len).map_err(|_| Error::Oversize { len })
}

fn fixed<const N: usize>(bytes: &[u8], what: &str) -> Result<[u8; N]> {
    bytes.try_into().map_err(|_| Error::MalformedFrame(format!("{what} needs {N} bytes, got {}", bytes.len())))
}

macro_rules! le_codec {
    ($($t:ty),*) => {$(
        impl Codec for $t {
            const FIXED_WIDTH: Option<usize> = Some(std::mem::size_of::<$t>());

            fn encode_to(&self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }

            fn decode_exact(bytes: &[u8]) -> Result<Self> {
                Ok(<$t>::from_le_bytes(fixed(bytes, stringify!($t))?))
            }
        }
    )*};
}

le_codec!(u8, u16, u32, u64, i32, i64, f64);

impl Codec for () {
    const FIXED_WIDTH: Option<usize> = Some(0);

    fn encode_to(&self, _out: &mut Vec<u8>) {}

    fn decode_exact(bytes: &[u8]) -> Result<Self> {
        if bytes.is_empty() {
            Ok(())
        } else {
            Err(Error::MalformedFrame("unit takes no bytes".into()))
        }
    }
}

impl Codec for String {
    fn encode_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(self.as_bytes());
    }

    fn decode_exact(bytes: &[u8]) -> Result<Self> {
        String::from_utf8(bytes.to_vec()).map_err(|e| Error::MalformedFrame(format!("string is not UTF-8: {e}")))
    }
}

/// Appends `bytes` with a u32 LE length prefix.
pub(crate) fn put_prefixed(out: &mut Vec<u8>, bytes: &[u8]) -> Result<()> {
    out.extend_from_slice(&checked_len(bytes.len())?.to_le_bytes());
    out.extend_from_slice(bytes);
    Ok(())
}

/// Reads one u32-prefixed chunk starting at `*pos`, advancing it.
pub(crate) fn take_prefixed<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    let len = take_u32(bytes, pos)? as usize;
    take(bytes, pos, len)
}

pub(crate) fn take_u32(bytes: &[u8], pos: &mut usize) -> Result<u32> {
    let raw = take(bytes, pos, 4)?;
    Ok(u32::from_le_bytes(raw.try_into().expect("4 bytes")))
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, len: usize) -> Result<&'a [u8]> {
    let end = pos.checked_add(len).filter(|&end| end <= bytes.len()).ok_or_else(|| {
        Error::MalformedFrame(format!("need {len} bytes at offset {}, buffer holds {}", pos, bytes.len()))
    })?;
    let out = &bytes[*pos..end];
    *pos = end;
    Ok(out)
}

fn encode_element<T: Codec>(item: &T, out: &mut Vec<u8>, scratch: &mut Vec<u8>) {
    if T::FIXED_WIDTH.is_some() {
        item.encode_to(out);
    } else {
        scratch.clear();
        item.encode_to(scratch);
        put_prefixed(out, scratch).expect("element larger than 4 GiB");
    }
}

fn decode_element<T: Codec>(bytes: &[u8], pos: &mut usize) -> Result<T> {
    match T::FIXED_WIDTH {
        Some(width) => T::decode_exact(take(bytes, pos, width)?),
        None => T::decode_exact(take_prefixed(bytes, pos)?),
    }
}

/// Encodes a slice exactly as the equivalent `Vec<T>` would be encoded.
pub fn encode_seq<T: Codec>(items: &[T], out: &mut Vec<u8>) {
    let count = checked_len(items.len()).expect("more than u32::MAX elements");
    out.extend_from_slice(&count.to_le_bytes());
    let mut scratch = Vec::new();
    for item in items {
        encode_element(item, out, &mut scratch);
    }
}

impl<T: Codec> Codec for Vec<T> {
    fn encode_to(&self, out: &mut Vec<u8>) {
        encode_seq(self, out);
    }

    fn decode_exact(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let count = take_u32(bytes, &mut pos)? as usize;
        // Cap the reservation so a corrupt count cannot trigger a huge allocation.
        let mut items = Vec::with_capacity(count.min(bytes.len()));
        for _ in 0..count {
            items.push(decode_element(bytes, &mut pos)?);
        }
        if pos != bytes.len() {
            return Err(Error::MalformedFrame(format!("{} trailing bytes after vector", bytes.len() - pos)));
        }
        Ok(items)
    }
}

impl<A: Codec, B: Codec> Codec for (A, B) {
    const FIXED_WIDTH: Option<usize> = match (A::FIXED_WIDTH, B::FIXED_WIDTH) {
        (Some(a), Some(b)) => Some(a + b),
        _ => None,
    };

    fn encode_to(&self, out: &mut Vec<u8>) {
        let mut scratch = Vec::new();
        encode_element(&self.0, out, &mut scratch);
        encode_element(&self.1, out, &mut scratch);
    }

    fn decode_exact(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let a = decode_element(bytes, &mut pos)?;
        let b = decode_element(bytes, &mut pos)?;
        if pos != bytes.len() {
            return Err(Error::MalformedFrame("trailing bytes after pair".into()));
        }
        Ok((a, b))
    }
}

/// A key plus a value: the unit of map output and shuffle traffic.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KvPair<K, V> {
    pub key: K,
    pub value: V,
}

impl<K, V> KvPair<K, V> {
    pub fn new(key: K, value: V) -> Self {
        KvPair { key, value }
    }
}

impl<K: Codec, V: Codec> KvPair<K, V> {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        write_pair(&mut out, &self.key, &self.value, &mut Vec::new())?;
        Ok(out)
    }

    /// Decodes one pair from the front of `bytes`, returning it with the
    /// number of bytes consumed. Trailing bytes are left alone.
    pub fn decode(bytes: &[u8]) -> Result<(Self, usize)> {
        let ((k, v), used) = decode_kv_ref(bytes)?;
        Ok((KvPair::new(K::decode_exact(k)?, V::decode_exact(v)?), used))
    }
}

/// Frames already-encoded key and value bytes.
pub fn encode_kv(key: &[u8], value: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + key.len() + value.len());
    put_prefixed(&mut out, key)?;
    put_prefixed(&mut out, value)?;
    Ok(out)
}

pub type RawPair = KvPair<Vec<u8>, Vec<u8>>;

/// Inverse of [`encode_kv`]: returns the raw pair and the bytes consumed.
pub fn decode_kv(bytes: &[u8]) -> Result<(RawPair, usize)> {
    let ((k, v), used) = decode_kv_ref(bytes)?;
    Ok((KvPair::new(k.to_vec(), v.to_vec()), used))
}

type PairRef<'a> = (&'a [u8], &'a [u8]);

pub(crate) fn decode_kv_ref(bytes: &[u8]) -> Result<(PairRef<'_>, usize)> {
    let mut pos = 0;
    let key = take_prefixed(bytes, &mut pos)?;
    let value = take_prefixed(bytes, &mut pos)?;
    Ok(((key, value), pos))
}

/// Appends one framed pair, using `scratch` for the intermediate encodings.
pub(crate) fn write_pair<K: Codec, V: Codec>(
    out: &mut Vec<u8>,
    key: &K,
    value: &V,
    scratch: &mut Vec<u8>,
) -> Result<()> {
    scratch.clear();
    key.encode_to(scratch);
    put_prefixed(out, scratch)?;
    scratch.clear();
    value.encode_to(scratch);
    put_prefixed(out, scratch)
}

/// Encodes a run of pairs back to back.
pub(crate) fn encode_pairs<'a, K, V, I>(pairs: I) -> Result<Vec<u8>>
where
    K: Codec + 'a,
    V: Codec + 'a,
    I: IntoIterator<Item = (&'a K, &'a V)>,
{
    let mut out = Vec::new();
    let mut scratch = Vec::new();
    for (k, v) in pairs {
        write_pair(&mut out, k, v, &mut scratch)?;
    }
    Ok(out)
}

/// Decodes a buffer of back-to-back pairs, appending them to `into`.
pub(crate) fn decode_pairs_into<K: Codec, V: Codec>(mut bytes: &[u8], into: &mut Vec<(K, V)>) -> Result<usize> {
    let mut count = 0;
    while !bytes.is_empty() {
        let ((k, v), used) = decode_kv_ref(bytes)?;
        into.push((K::decode_exact(k)?, V::decode_exact(v)?));
        bytes = &bytes[used..];
        count += 1;
    }
    Ok(count)
}
