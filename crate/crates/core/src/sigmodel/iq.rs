//! `CIQ1` complex IQ record files.
//!
//! Layout (little endian): the magic `CIQ1`, `u32` profile length `m`,
//! `u64` record count, then `count` records of `m` interleaved `(re, im)`
//! `f32` pairs. Nothing follows the last record.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{Label, SampleBatch};
use crate::clx::{ComplexVector, C64};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CIQ1";
const HEADER_LEN: usize = 16;

pub fn encode_iq(m: usize, signals: &[ComplexVector]) -> Result<Vec<u8>> {
    let m32 = u32::try_from(m).map_err(|_| Error::InvalidArgument(format!("m={m} too large")))?;
    let mut out = Vec::with_capacity(HEADER_LEN + signals.len() * m * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&m32.to_le_bytes());
    out.extend_from_slice(&(signals.len() as u64).to_le_bytes());
    for (i, s) in signals.iter().enumerate() {
        if s.len() != m {
            return Err(Error::InvalidArgument(format!(
                "record {i} has length {}, expected {m}",
                s.len()
            )));
        }
        for z in s {
            out.extend_from_slice(&(z.re as f32).to_le_bytes());
            out.extend_from_slice(&(z.im as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_iq<W: Write>(mut w: W, m: usize, signals: &[ComplexVector]) -> Result<()> {
    w.write_all(&encode_iq(m, signals)?)?;
    Ok(())
}

/// Parses a `CIQ1` buffer. Returns `(m, records)`.
pub fn decode_iq(bytes: &[u8], expected_m: Option<usize>) -> Result<(usize, Vec<ComplexVector>)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::MalformedHeader(format!(
            "{} bytes is shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::MalformedHeader(format!("bad magic {:?}", &bytes[..4])));
    }
    let m = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    if m == 0 {
        return Err(Error::MalformedHeader("profile length m is zero".into()));
    }
    if let Some(e) = expected_m {
        if e != m {
            return Err(Error::DimensionMismatch { expected: e, found: m });
        }
    }
    let expected = usize::try_from(count)
        .ok()
        .and_then(|c| c.checked_mul(m * 8))
        .ok_or_else(|| Error::MalformedHeader(format!("record count {count} overflows")))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < expected {
        return Err(Error::Truncated { expected, found: payload.len() });
    }
    if payload.len() > expected {
        return Err(Error::MalformedHeader(format!(
            "{} trailing bytes after {count} records",
            payload.len() - expected
        )));
    }
    let records = payload
        .chunks_exact(m * 8)
        .map(|rec| {
            rec.chunks_exact(8)
                .map(|p| {
                    let re = f32::from_le_bytes(p[..4].try_into().unwrap());
                    let im = f32::from_le_bytes(p[4..].try_into().unwrap());
                    C64::new(re as f64, im as f64)
                })
                .collect()
        })
        .collect();
    Ok((m, records))
}

pub fn read_iq<R: Read>(mut r: R, expected_m: Option<usize>) -> Result<(usize, Vec<ComplexVector>)> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    decode_iq(&buf, expected_m)
}

/// Loads a recording as an unlabeled clutter batch (label `H0`, no scenario).
pub fn load_iq(path: impl AsRef<Path>, expected_m: Option<usize>) -> Result<SampleBatch> {
    let (_, signals) = decode_iq(&fs::read(path)?, expected_m)?;
    Ok(SampleBatch { signals, label: Label::H0, scenario: None })
}

pub fn save_iq(path: impl AsRef<Path>, batch: &SampleBatch) -> Result<()> {
    let m = batch
        .dim()
        .or(batch.scenario.as_ref().map(|s| s.m))
        .ok_or_else(|| Error::InvalidArgument("cannot infer m for an empty batch".into()))?;
    fs::write(path, encode_iq(m, &batch.signals)?)?;
    Ok(())
}
