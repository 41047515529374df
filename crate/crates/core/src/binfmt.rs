//! Versioned binary artifact container: an 8-byte magic, a little-endian
//! `u32` format version, a length-prefixed JSON header and an opaque payload.

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

pub fn write_artifact<H: Serialize>(path: &Path, magic: &[u8; 8], header: &H, payload: &[u8]) -> Result<()> {
    let header = serde_json::to_vec(header)?;
    let mut buf = Vec::with_capacity(16 + header.len() + payload.len());
    buf.extend_from_slice(magic);
    buf.write_u32::<LittleEndian>(FORMAT_VERSION).expect("vec write");
    buf.write_u32::<LittleEndian>(header.len() as u32).expect("vec write");
    buf.extend_from_slice(&header);
    buf.extend_from_slice(payload);
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_artifact<H: DeserializeOwned>(path: &Path, magic: &[u8; 8]) -> Result<(H, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_artifact(&bytes, magic)
}

pub fn decode_artifact<H: DeserializeOwned>(bytes: &[u8], magic: &[u8; 8]) -> Result<(H, Vec<u8>)> {
    let mut cur = Cursor::new(bytes);
    let mut found = [0u8; 8];
    cur.read_exact(&mut found)
        .map_err(|_| Error::Format("file too short".into()))?;
    if &found != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&found),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = cur.read_u32::<LittleEndian>().map_err(truncated)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format version {version}")));
    }
    let len = cur.read_u32::<LittleEndian>().map_err(truncated)? as usize;
    let start = cur.position() as usize;
    let header_bytes = bytes
        .get(start..start + len)
        .ok_or_else(|| Error::Format("truncated header".into()))?;
    let header = serde_json::from_slice(header_bytes)?;
    Ok((header, bytes[start + len..].to_vec()))
}

fn truncated(_: std::io::Error) -> Error {
    Error::Format("truncated file".into())
}

/// Little-endian payload writer.
#[derive(Default)]
pub struct PayloadWriter(Vec<u8>);

impl PayloadWriter {
    pub fn u32(&mut self, v: u32) {
        self.0.write_u32::<LittleEndian>(v).expect("vec write");
    }
    pub fn f64(&mut self, v: f64) {
        self.0.write_f64::<LittleEndian>(v).expect("vec write");
    }
    pub fn f64s(&mut self, vs: &[f64]) {
        self.u32(vs.len() as u32);
        for &v in vs {
            self.f64(v);
        }
    }
    pub fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
    pub fn finish(self) -> Vec<u8> {
        self.0
    }
}

pub struct PayloadReader<'a>(Cursor<&'a [u8]>);

impl<'a> PayloadReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        PayloadReader(Cursor::new(bytes))
    }
    pub fn u32(&mut self) -> Result<u32> {
        self.0.read_u32::<LittleEndian>().map_err(truncated)
    }
    pub fn f64(&mut self) -> Result<f64> {
        self.0.read_f64::<LittleEndian>().map_err(truncated)
    }
    pub fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.u32()? as usize;
        (0..n).map(|_| self.f64()).collect()
    }
    pub fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let mut buf = vec![0u8; n];
        self.0.read_exact(&mut buf).map_err(truncated)?;
        String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
    }
    pub fn is_empty(&self) -> bool {
        self.0.position() as usize == self.0.get_ref().len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.bin");
        let mut w = PayloadWriter::default();
        w.f64s(&[1.5, -2.0]);
        w.str("héllo");
        write_artifact(&p, b"TESTMAG1", &serde_json::json!({"k": 1}), &w.finish()).unwrap();

        let (h, payload): (serde_json::Value, _) = read_artifact(&p, b"TESTMAG1").unwrap();
        assert_eq!(h["k"], 1);
        let mut r = PayloadReader::new(&payload);
        assert_eq!(r.f64s().unwrap(), vec![1.5, -2.0]);
        assert_eq!(r.str().unwrap(), "héllo");
        assert!(r.is_empty());

        assert!(matches!(read_artifact::<serde_json::Value>(&p, b"OTHERMAG"), Err(Error::Format(_))));
        let bytes = std::fs::read(&p).unwrap();
        assert!(decode_artifact::<serde_json::Value>(&bytes[..14], b"TESTMAG1").is_err());
    }
}
