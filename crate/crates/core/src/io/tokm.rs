//! TOKM: a minimal binary container for one token matrix.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "TOKM"
//! 4       4     version (u32, = 1)
//! 8       8     T, token count (u64)
//! 16      8     D, embedding dim (u64)
//! 24      4     dtype (u32, 1 = f32)
//! 28      4*T*D payload, row-major f32
//! ```
//!
//! All integers and floats are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::TokenMatrix;

pub const MAGIC: [u8; 4] = *b"TOKM";
pub const VERSION: u32 = 1;
pub const DTYPE_F32: u32 = 1;
pub const HEADER_LEN: u64 = 28;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TokenFileHeader {
    pub version: u32,
    pub tokens: u64,
    pub dim: u64,
    pub dtype: u32,
}

impl TokenFileHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN as usize] {
        let mut out = [0u8; HEADER_LEN as usize];
        out[0..4].copy_from_slice(&MAGIC);
        out[4..8].copy_from_slice(&self.version.to_le_bytes());
        out[8..16].copy_from_slice(&self.tokens.to_le_bytes());
        out[16..24].copy_from_slice(&self.dim.to_le_bytes());
        out[24..28].copy_from_slice(&self.dtype.to_le_bytes());
        out
    }

    /// Parses and validates magic, version and dtype.
    pub fn parse(bytes: &[u8; HEADER_LEN as usize], path: &Path) -> Result<Self> {
        let fail = |msg: String| Error::Format {
            path: path.to_path_buf(),
            msg,
        };
        if bytes[0..4] != MAGIC {
            return Err(fail(format!("bad magic {:?}", &bytes[0..4])));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let header = Self {
            version: u32_at(4),
            tokens: u64_at(8),
            dim: u64_at(16),
            dtype: u32_at(24),
        };
        if header.version != VERSION {
            return Err(fail(format!("unsupported version {}", header.version)));
        }
        if header.dtype != DTYPE_F32 {
            return Err(fail(format!("unsupported dtype code {}", header.dtype)));
        }
        Ok(header)
    }

    pub fn payload_len(&self) -> Option<u64> {
        self.tokens.checked_mul(self.dim)?.checked_mul(4)
    }
}

/// Header of a TOKM file, checked against the file size.
pub fn read_header(path: &Path) -> Result<TokenFileHeader> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let size = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let header = read_header_from(&mut file, size, path)?;
    Ok(header)
}

fn read_header_from(r: &mut impl Read, size: u64, path: &Path) -> Result<TokenFileHeader> {
    if size < HEADER_LEN {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!("file is {size} bytes, shorter than the {HEADER_LEN}-byte header"),
        });
    }
    let mut buf = [0u8; HEADER_LEN as usize];
    r.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
    let header = TokenFileHeader::parse(&buf, path)?;
    let expected = header
        .payload_len()
        .and_then(|p| p.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            msg: "declared shape overflows".into(),
        })?;
    if expected != size {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!(
                "size mismatch: {}x{} f32 needs {expected} bytes, file has {size}",
                header.tokens, header.dim
            ),
        });
    }
    Ok(header)
}

pub fn read_tokm(path: &Path) -> Result<TokenMatrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let size = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let mut r = BufReader::new(file);
    let header = read_header_from(&mut r, size, path)?;
    if header.tokens == 0 || header.dim == 0 {
        return Err(Error::InvalidInput(format!(
            "{} holds an empty {}x{} matrix",
            path.display(),
            header.tokens,
            header.dim
        )));
    }
    let mut payload = vec![0u8; header.payload_len().unwrap() as usize];
    r.read_exact(&mut payload).map_err(|e| Error::io(path, e))?;
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    TokenMatrix::from_f32(header.tokens as usize, header.dim as usize, &values)
}

/// Writes the matrix as f32; values are rounded to the nearest f32.
pub fn write_tokm(x: &TokenMatrix, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = TokenFileHeader {
        version: VERSION,
        tokens: x.tokens() as u64,
        dim: x.dim() as u64,
        dtype: DTYPE_F32,
    };
    let mut buf = Vec::with_capacity(HEADER_LEN as usize + 4 * x.tokens() * x.dim());
    buf.extend_from_slice(&header.to_bytes());
    for &v in x.matrix().as_slice() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&buf).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
