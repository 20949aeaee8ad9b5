//! Embedding corpus and interaction log file formats.
//!
//! Corpus layout (all little-endian):
//!
//! ```text
//! magic   b"LARM"
//! version u16      (currently 1)
//! dim     u16
//! count   u64
//! rows    count * dim * f32
//! ```
//!
//! The interaction log is newline-delimited text, one
//! [`InteractionEvent`] per line, columns separated by tabs.

use std::io::{BufRead, Read, Write};

use crate::{CoreError, InteractionEvent, Result};

pub const CORPUS_MAGIC: &[u8; 4] = b"LARM";
pub const CORPUS_VERSION: u16 = 1;

/// Writes rows as f32. Values are rounded to the nearest f32.
pub fn write_corpus<W: Write, V: AsRef<[f64]>>(mut w: W, dim: usize, rows: &[V]) -> Result<()> {
    let dim16 = u16::try_from(dim).map_err(|_| CoreError::Format(format!("dim {dim} exceeds u16")))?;
    w.write_all(CORPUS_MAGIC)?;
    w.write_all(&CORPUS_VERSION.to_le_bytes())?;
    w.write_all(&dim16.to_le_bytes())?;
    w.write_all(&(rows.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(dim * 4);
    for (index, row) in rows.iter().enumerate() {
        let row = row.as_ref();
        if row.len() != dim {
            return Err(CoreError::DimensionMismatch {
                index,
                expected: dim,
                found: row.len(),
            });
        }
        buf.clear();
        for &v in row {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a corpus, returning `(dim, rows)`. Rows are widened to f64.
pub fn read_corpus<R: Read>(mut r: R) -> Result<(usize, Vec<Vec<f64>>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CORPUS_MAGIC {
        return Err(CoreError::Format("bad corpus magic".into()));
    }
    let version = read_u16(&mut r)?;
    if version != CORPUS_VERSION {
        return Err(CoreError::Format(format!("unsupported corpus version {version}")));
    }
    let dim = read_u16(&mut r)? as usize;
    let mut count = [0u8; 8];
    r.read_exact(&mut count)?;
    let count = u64::from_le_bytes(count) as usize;
    let mut rows = Vec::with_capacity(count.min(1 << 20));
    let mut buf = vec![0u8; dim * 4];
    for index in 0..count {
        r.read_exact(&mut buf)?;
        let row: Vec<f64> = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        if row.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFiniteValue { index });
        }
        rows.push(row);
    }
    Ok((dim, rows))
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

pub fn write_log<W: Write>(mut w: W, events: &[InteractionEvent]) -> Result<()> {
    for e in events {
        writeln!(w, "{}", e.to_tsv())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_log<R: BufRead>(r: R) -> Result<Vec<InteractionEvent>> {
    let mut events = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let (event, rest) = InteractionEvent::parse_tsv_prefix(&line)
            .map_err(|message| CoreError::Parse { line: i + 1, message })?;
        if !rest.is_empty() {
            return Err(CoreError::Parse {
                line: i + 1,
                message: format!("{} unexpected trailing columns", rest.len()),
            });
        }
        events.push(event);
    }
    Ok(events)
}
