//! Binary embedding archive.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! header   magic "ZECO" (4 bytes) | version u32 = 1 | dim u32 | record_count u64
//! record   id_len u16 | id (UTF-8)
//!          token_count u32
//!          token_count × (tok_len u16 | token (UTF-8) | role u8)
//!          token_count × dim × f32, row-major
//! ```
//!
//! Role codes: 0 CLS, 1 query marker, 2 expansion, 3 SEP, 4 context,
//! 5 last turn, 6 document.
//!
//! Reading checks the structure of the whole file before looking at any
//! embedding values, so a wrong header dimension surfaces as corruption rather
//! than as a norm violation.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use zeco_core::encoder::{EmbeddingArchive, ARCHIVE_MAGIC, ARCHIVE_VERSION};
use zeco_core::types::NORM_TOLERANCE;
use zeco_core::{Role, Token, TokenMatrix};

#[derive(Debug, thiserror::Error)]
pub enum ArchiveError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("archive stream: {0}")]
    Stream(#[from] io::Error),

    /// Not an archive this reader understands.
    #[error("archive format error: {0}")]
    Format(String),

    /// Structurally inconsistent payload.
    #[error("archive is corrupt: {0}")]
    Corruption(String),

    /// Well-formed record whose embeddings break the unit-norm contract.
    #[error("archive record '{record}' failed validation: {reason}")]
    Validation { record: String, reason: String },
}

type Result<T> = std::result::Result<T, ArchiveError>;

const HEADER_LEN: usize = 4 + 4 + 4 + 8;

/// Serializes an archive.
pub fn encode_archive(archive: &EmbeddingArchive) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(&ARCHIVE_MAGIC);
    out.extend_from_slice(&ARCHIVE_VERSION.to_le_bytes());
    let dim = u32::try_from(archive.dim())
        .map_err(|_| ArchiveError::Format("dimension exceeds u32".into()))?;
    out.extend_from_slice(&dim.to_le_bytes());
    out.extend_from_slice(&(archive.len() as u64).to_le_bytes());
    for record in archive.records() {
        put_str(&mut out, &record.id)?;
        let m = &record.matrix;
        let count = u32::try_from(m.len()).map_err(|_| {
            ArchiveError::Format(format!("record {} has too many tokens", record.id))
        })?;
        out.extend_from_slice(&count.to_le_bytes());
        for t in m.tokens() {
            put_str(&mut out, t.text())?;
            out.push(t.role().code());
        }
        for x in m.as_slice() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<()> {
    let len = u16::try_from(s.len()).map_err(|_| {
        ArchiveError::Format(format!("string of {} bytes exceeds u16 length", s.len()))
    })?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(ArchiveError::Corruption(format!(
                "truncated while reading {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(
            self.take(2, what)?.try_into().expect("2 bytes"),
        ))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = usize::from(self.u16(what)?);
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| ArchiveError::Corruption(format!("{what} is not valid UTF-8")))
    }
}

struct RawRecord {
    id: String,
    tokens: Vec<Token>,
    data: Vec<f32>,
}

/// Parses and validates a serialized archive.
pub fn decode_archive(bytes: &[u8]) -> Result<EmbeddingArchive> {
    if bytes.len() < 4 || bytes[..4] != ARCHIVE_MAGIC {
        return Err(ArchiveError::Format("bad magic, expected \"ZECO\"".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(ArchiveError::Format("truncated header".into()));
    }
    let mut cur = Cursor { bytes, pos: 4 };
    let version = cur.u32("version")?;
    if version != ARCHIVE_VERSION {
        return Err(ArchiveError::Format(format!(
            "unsupported version {version}"
        )));
    }
    let dim = cur.u32("dim")? as usize;
    if dim == 0 {
        return Err(ArchiveError::Format("dimension is zero".into()));
    }
    let count = cur.u64("record count")?;

    let mut raw = Vec::new();
    for r in 0..count {
        let id = cur.string("record id")?;
        let n = cur.u32("token count")? as usize;
        if n == 0 {
            return Err(ArchiveError::Corruption(format!(
                "record {r} ('{id}') has no tokens"
            )));
        }
        // Every token needs at least 3 header bytes plus its row.
        if n.saturating_mul(3 + 4 * dim) > cur.remaining() {
            return Err(ArchiveError::Corruption(format!(
                "record {r} ('{id}') claims {n} tokens of dim {dim}, more than the remaining bytes"
            )));
        }
        let mut tokens = Vec::with_capacity(n);
        for _ in 0..n {
            let text = cur.string("token text")?;
            let code = cur.u8("role")?;
            let role = Role::from_code(code).ok_or_else(|| {
                ArchiveError::Corruption(format!("record '{id}': unknown role code {code}"))
            })?;
            let token = Token::new(text, role)
                .map_err(|e| ArchiveError::Corruption(format!("record '{id}': {e}")))?;
            tokens.push(token);
        }
        let payload = cur.take(n * dim * 4, "embeddings")?;
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        raw.push(RawRecord { id, tokens, data });
    }
    if cur.remaining() != 0 {
        return Err(ArchiveError::Corruption(format!(
            "{} trailing bytes after {count} records; record sizes disagree with dim {dim}",
            cur.remaining()
        )));
    }

    let mut archive =
        EmbeddingArchive::new(dim).map_err(|e| ArchiveError::Format(e.to_string()))?;
    for rec in raw {
        for (i, row) in rec.data.chunks_exact(dim).enumerate() {
            let norm = row
                .iter()
                .map(|&x| f64::from(x) * f64::from(x))
                .sum::<f64>()
                .sqrt();
            if !((1.0 - NORM_TOLERANCE)..=(1.0 + NORM_TOLERANCE)).contains(&norm) {
                return Err(ArchiveError::Validation {
                    record: rec.id,
                    reason: format!("row {i} has norm {norm}"),
                });
            }
        }
        let matrix =
            TokenMatrix::new(rec.tokens, rec.data, dim).map_err(|e| ArchiveError::Validation {
                record: rec.id.clone(),
                reason: e.to_string(),
            })?;
        archive
            .push(rec.id, matrix)
            .map_err(|e| ArchiveError::Corruption(e.to_string()))?;
    }
    Ok(archive)
}

pub fn write_archive_to<W: Write>(archive: &EmbeddingArchive, mut writer: W) -> Result<()> {
    writer.write_all(&encode_archive(archive)?)?;
    writer.flush()?;
    Ok(())
}

pub fn read_archive_from<R: Read>(mut reader: R) -> Result<EmbeddingArchive> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    decode_archive(&bytes)
}

pub fn write_archive(archive: &EmbeddingArchive, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_archive(archive)?;
    fs::write(path, bytes).map_err(|source| ArchiveError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_archive(path: impl AsRef<Path>) -> Result<EmbeddingArchive> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| ArchiveError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_archive(&bytes)
}
