//! Versioned binary envelope for trained models.
//!
//! Layout (all scalars little-endian):
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `CSEG`                            |
//! | 4      | 2    | format version (currently 1)            |
//! | 6      | 1    | payload kind (see [`Kind`])             |
//! | 7      | 1    | reserved, 0                             |
//! | 8      | 8    | payload length in bytes                 |
//! | 16     | n    | payload                                 |
//!
//! Payloads are sequences of `u8`, `u32`, `u64`, `i8`, `f32` and `f64`
//! scalars; variable-length sequences are prefixed by a `u64` count and
//! strings are UTF-8 with a `u64` byte count.

use std::fs;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CSEG";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Kind {
    Forest = 1,
    Recognizer = 2,
    Ilp = 3,
    Location = 4,
}

impl Kind {
    fn from_u8(v: u8) -> Option<Kind> {
        match v {
            1 => Some(Kind::Forest),
            2 => Some(Kind::Recognizer),
            3 => Some(Kind::Ilp),
            4 => Some(Kind::Location),
            _ => None,
        }
    }
}

#[derive(Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

// Writes into a Vec<u8> cannot fail.
impl Encoder {
    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn i8(&mut self, v: i8) {
        self.buf.write_i8(v).unwrap();
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.write_u32::<LittleEndian>(v).unwrap();
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.write_u64::<LittleEndian>(v).unwrap();
    }

    pub fn len(&mut self, v: usize) {
        self.u64(v as u64);
    }

    pub fn f32(&mut self, v: f32) {
        self.buf.write_f32::<LittleEndian>(v).unwrap();
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.write_f64::<LittleEndian>(v).unwrap();
    }

    pub fn f64s(&mut self, v: &[f64]) {
        self.len(v.len());
        for &x in v {
            self.f64(x);
        }
    }

    pub fn str(&mut self, s: &str) {
        self.len(s.len());
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn finish(self, kind: Kind) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.buf.len());
        out.extend_from_slice(MAGIC);
        let mut v = [0u8; 2];
        LittleEndian::write_u16(&mut v, VERSION);
        out.extend_from_slice(&v);
        out.push(kind as u8);
        out.push(0);
        let mut n = [0u8; 8];
        LittleEndian::write_u64(&mut n, self.buf.len() as u64);
        out.extend_from_slice(&n);
        out.extend_from_slice(&self.buf);
        out
    }
}

pub struct Decoder<'a> {
    buf: &'a [u8],
}

fn eof(_: std::io::Error) -> Error {
    Error::Model("unexpected end of payload".into())
}

impl<'a> Decoder<'a> {
    /// Validates the envelope and positions the decoder at the payload.
    pub fn open(bytes: &'a [u8], expected: Kind) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(Error::Model("missing CSEG header".into()));
        }
        let version = LittleEndian::read_u16(&bytes[4..6]);
        if version != VERSION {
            return Err(Error::Model(format!(
                "unsupported format version {version}"
            )));
        }
        match Kind::from_u8(bytes[6]) {
            Some(k) if k == expected => {}
            other => {
                return Err(Error::Model(format!(
                    "expected a {expected:?} payload, found {other:?}"
                )))
            }
        }
        let len = LittleEndian::read_u64(&bytes[8..16]) as usize;
        let payload = bytes
            .get(HEADER_LEN..HEADER_LEN.saturating_add(len))
            .filter(|p| p.len() == len)
            .ok_or_else(|| Error::Model("truncated payload".into()))?;
        if bytes.len() != HEADER_LEN + len {
            return Err(Error::Model("trailing bytes after payload".into()));
        }
        Ok(Decoder { buf: payload })
    }

    pub fn u8(&mut self) -> Result<u8> {
        self.buf.read_u8().map_err(eof)
    }

    pub fn i8(&mut self) -> Result<i8> {
        self.buf.read_i8().map_err(eof)
    }

    pub fn u32(&mut self) -> Result<u32> {
        self.buf.read_u32::<LittleEndian>().map_err(eof)
    }

    pub fn u64(&mut self) -> Result<u64> {
        self.buf.read_u64::<LittleEndian>().map_err(eof)
    }

    /// Reads a count, rejecting values that cannot fit in the remaining bytes
    /// at `min_item` bytes per element.
    pub fn len(&mut self, min_item: usize) -> Result<usize> {
        let n = self.u64()? as usize;
        if n.saturating_mul(min_item.max(1)) > self.buf.len() && min_item > 0 {
            return Err(Error::Model(format!("implausible length {n}")));
        }
        Ok(n)
    }

    pub fn f32(&mut self) -> Result<f32> {
        self.buf.read_f32::<LittleEndian>().map_err(eof)
    }

    pub fn f64(&mut self) -> Result<f64> {
        self.buf.read_f64::<LittleEndian>().map_err(eof)
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.len(1)?;
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        String::from_utf8(head.to_vec()).map_err(|_| Error::Model("invalid utf-8".into()))
    }

    pub fn finish(self) -> Result<()> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(Error::Model(format!(
                "{} unread payload bytes",
                self.buf.len()
            )))
        }
    }
}

/// Types stored in the binary envelope.
pub trait Codec: Sized {
    const KIND: Kind;

    fn encode(&self, enc: &mut Encoder);

    fn decode(dec: &mut Decoder<'_>) -> Result<Self>;

    fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::default();
        self.encode(&mut enc);
        enc.finish(Self::KIND)
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut dec = Decoder::open(bytes, Self::KIND)?;
        let v = Self::decode(&mut dec)?;
        dec.finish()?;
        Ok(v)
    }

    fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let mut e = Encoder::default();
        e.u32(0xDEADBEEF);
        let bytes = e.finish(Kind::Location);
        assert_eq!(&bytes[..4], b"CSEG");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(bytes[6], 4);
        assert_eq!(&bytes[8..16], &[4, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&bytes[16..], &[0xEF, 0xBE, 0xAD, 0xDE]);
    }

    #[test]
    fn kind_and_truncation_checked() {
        let mut e = Encoder::default();
        e.f64(1.5);
        e.str("hi");
        let bytes = e.finish(Kind::Forest);
        assert!(Decoder::open(&bytes, Kind::Ilp).is_err());
        assert!(Decoder::open(&bytes[..bytes.len() - 1], Kind::Forest).is_err());
        let mut d = Decoder::open(&bytes, Kind::Forest).unwrap();
        assert_eq!(d.f64().unwrap(), 1.5);
        assert_eq!(d.str().unwrap(), "hi");
        d.finish().unwrap();
    }

    #[test]
    fn absurd_lengths_rejected() {
        let mut e = Encoder::default();
        e.u64(u64::MAX / 2);
        let bytes = e.finish(Kind::Forest);
        let mut d = Decoder::open(&bytes, Kind::Forest).unwrap();
        assert!(d.f64s().is_err());
    }
}
