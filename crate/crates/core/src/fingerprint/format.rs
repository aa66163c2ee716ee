//! `CLFP` binary records, little-endian:
//!
//! | field          | type        |
//! |----------------|-------------|
//! | magic          | `b"CLFP"`   |
//! | version        | u16         |
//! | id length      | u16         |
//! | id             | UTF-8 bytes |
//! | landmark count | u32         |
//! | per landmark   | f1 u16, f2 u16, t1 u32, dt u16 |

use std::io::{ErrorKind, Read, Write};
use std::path::Path;

use super::{Fingerprint, FingerprintError, Landmark};

pub const FINGERPRINT_MAGIC: &[u8; 4] = b"CLFP";
pub const FINGERPRINT_VERSION: u16 = 1;

pub fn write_fingerprint<W: Write>(w: &mut W, fp: &Fingerprint) -> Result<(), FingerprintError> {
    let id = fp.sample_id.as_bytes();
    let id_len = u16::try_from(id.len())
        .map_err(|_| FingerprintError::Format(format!("sample id of {} bytes is too long", id.len())))?;
    let count = u32::try_from(fp.landmarks.len()).map_err(|_| FingerprintError::Format("too many landmarks".into()))?;
    let mut buf = Vec::with_capacity(16 + id.len() + fp.landmarks.len() * 10);
    buf.extend_from_slice(FINGERPRINT_MAGIC);
    buf.extend_from_slice(&FINGERPRINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&id_len.to_le_bytes());
    buf.extend_from_slice(id);
    buf.extend_from_slice(&count.to_le_bytes());
    for lm in &fp.landmarks {
        buf.extend_from_slice(&lm.f1.to_le_bytes());
        buf.extend_from_slice(&lm.f2.to_le_bytes());
        buf.extend_from_slice(&lm.t1.to_le_bytes());
        buf.extend_from_slice(&lm.dt.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_exact<R: Read, const N: usize>(r: &mut R, what: &str) -> Result<[u8; N], FingerprintError> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => FingerprintError::Format(format!("truncated record at {what}")),
        _ => FingerprintError::Io(e),
    })?;
    Ok(b)
}

/// Read one record. Returns `Ok(None)` on a clean end of stream, so
/// concatenated records can be read in a loop.
pub fn read_fingerprint<R: Read>(r: &mut R) -> Result<Option<Fingerprint>, FingerprintError> {
    let mut magic = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut magic[got..])? {
            0 if got == 0 => return Ok(None),
            0 => return Err(FingerprintError::Format("truncated record at magic".into())),
            n => got += n,
        }
    }
    if &magic != FINGERPRINT_MAGIC {
        return Err(FingerprintError::Format(format!("bad magic {magic:?}")));
    }
    let version = u16::from_le_bytes(read_exact(r, "version")?);
    if version != FINGERPRINT_VERSION {
        return Err(FingerprintError::Format(format!("unsupported version {version}")));
    }
    let id_len = u16::from_le_bytes(read_exact(r, "id length")?) as usize;
    let mut id = vec![0u8; id_len];
    r.read_exact(&mut id)
        .map_err(|_| FingerprintError::Format("truncated record at sample id".into()))?;
    let sample_id = String::from_utf8(id).map_err(|_| FingerprintError::Format("sample id is not UTF-8".into()))?;
    let count = u32::from_le_bytes(read_exact(r, "landmark count")?) as usize;
    let mut landmarks = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let b: [u8; 10] = read_exact(r, "landmark")?;
        landmarks.push(Landmark {
            f1: u16::from_le_bytes([b[0], b[1]]),
            f2: u16::from_le_bytes([b[2], b[3]]),
            t1: u32::from_le_bytes([b[4], b[5], b[6], b[7]]),
            dt: u16::from_le_bytes([b[8], b[9]]),
        });
    }
    Ok(Some(Fingerprint { sample_id, landmarks }))
}

pub fn write_fingerprint_file(path: &Path, fp: &Fingerprint) -> Result<(), FingerprintError> {
    let mut buf = Vec::new();
    write_fingerprint(&mut buf, fp)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn read_fingerprint_file(path: &Path) -> Result<Fingerprint, FingerprintError> {
    let bytes = std::fs::read(path)?;
    read_fingerprint(&mut bytes.as_slice())?.ok_or_else(|| FingerprintError::Format("empty file".into()))
}
