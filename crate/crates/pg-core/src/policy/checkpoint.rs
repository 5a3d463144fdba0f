//! Binary checkpoint codec.
//!
//! ```text
//! magic "PGCK" | u32 version=1 | u32 obs_dim | u32 act_dim
//! | u32 n_hidden | u32 widths[n_hidden]
//! | f64 params[total]          (little-endian, layout order)
//! | u32 crc32                  (over everything after the magic)
//! ```

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use super::{Architecture, PolicyParams};

pub const MAGIC: [u8; 4] = *b"PGCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum CheckpointError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("checksum mismatch")]
    CrcMismatch,
    #[error("bad dimensions: {0}")]
    BadDimensions(String),
}

pub fn encode_checkpoint(params: &PolicyParams) -> Vec<u8> {
    let arch = params.arch();
    let mut buf = Vec::with_capacity(24 + 4 * arch.hidden.len() + 8 * params.data().len());
    buf.extend_from_slice(&MAGIC);
    for v in [
        VERSION,
        arch.obs_dim as u32,
        arch.act_dim as u32,
        arch.hidden.len() as u32,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for &h in &arch.hidden {
        buf.extend_from_slice(&(h as u32).to_le_bytes());
    }
    for &x in params.data() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    let crc = crc32fast::hash(&buf[4..]);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<PolicyParams, CheckpointError> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        return Err(if bytes.len() < 4 {
            CheckpointError::Truncated
        } else {
            CheckpointError::BadMagic
        });
    }
    if bytes.len() < 8 {
        return Err(CheckpointError::Truncated);
    }
    let stored_crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    if crc32fast::hash(&bytes[4..bytes.len() - 4]) != stored_crc {
        return Err(CheckpointError::CrcMismatch);
    }
    let mut cursor = Reader {
        bytes,
        // Payload ends before the CRC.
        end: bytes.len() - 4,
        pos: 4,
    };
    let version = cursor.u32()?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let obs_dim = cursor.u32()? as usize;
    let act_dim = cursor.u32()? as usize;
    let n_hidden = cursor.u32()? as usize;
    if n_hidden > 64 {
        return Err(CheckpointError::BadDimensions(format!(
            "implausible hidden layer count {n_hidden}"
        )));
    }
    let mut hidden = Vec::with_capacity(n_hidden);
    for _ in 0..n_hidden {
        hidden.push(cursor.u32()? as usize);
    }
    let arch = Architecture::with_hidden(obs_dim, act_dim, hidden);
    arch.validate()
        .map_err(|e| CheckpointError::BadDimensions(format!("{e}")))?;
    let expected = arch.param_count();
    let remaining = cursor.end - cursor.pos;
    if remaining != expected * 8 {
        return Err(CheckpointError::BadDimensions(format!(
            "parameter payload holds {} values, architecture needs {expected}",
            remaining / 8
        )));
    }
    let mut params = PolicyParams::zeros(&arch)
        .map_err(|e| CheckpointError::BadDimensions(format!("{e}")))?;
    for slot in params.data_mut() {
        *slot = cursor.f64()?;
    }
    Ok(params)
}

struct Reader<'a> {
    bytes: &'a [u8],
    end: usize,
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], CheckpointError> {
        if self.pos + n > self.end {
            return Err(CheckpointError::Truncated);
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
