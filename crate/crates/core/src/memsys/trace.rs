//! Request traces, one record per line:
//!
//! ```text
//! <R|W|P> <page> <offset-hex> <payload-hex>
//! ```
//!
//! The payload of `R` and `W` is the 64-byte line read or written; the
//! payload of `P` is the request data word, followed by the extension word
//! when present. Blank lines and lines starting with `#` are ignored.

use std::fmt;

use crate::error::{Error, Result};

use super::codec::PimRequest;
use super::module::LINE_BYTES;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceRecord {
    Read {
        page: u32,
        offset: u64,
        data: [u8; LINE_BYTES],
    },
    Write {
        page: u32,
        offset: u64,
        data: [u8; LINE_BYTES],
    },
    Pim(PimRequest),
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceRecord::Read { page, offset, data } => {
                write!(f, "R {page} {offset:x} {}", hex(data))
            }
            TraceRecord::Write { page, offset, data } => {
                write!(f, "W {page} {offset:x} {}", hex(data))
            }
            TraceRecord::Pim(r) => write!(f, "P {} {:x} {}", r.page, r.offset, r.payload_hex()),
        }
    }
}

fn parse_line(line: &str, lineno: usize) -> Result<Option<TraceRecord>> {
    let err = |col: usize, msg: String| Error::Parse {
        line: lineno,
        col,
        msg,
    };
    let trimmed = line.trim_start();
    if trimmed.is_empty() || trimmed.starts_with('#') {
        return Ok(None);
    }
    // Token start columns (1-based) for diagnostics.
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, ch) in line
        .char_indices()
        .chain(std::iter::once((line.len(), ' ')))
    {
        match (ch.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                tokens.push((s + 1, &line[s..i]));
                start = None;
            }
            _ => {}
        }
    }
    if tokens.len() != 4 {
        return Err(err(1, format!("expected 4 fields, found {}", tokens.len())));
    }
    let (kcol, kind) = tokens[0];
    let (pcol, page) = tokens[1];
    let (ocol, offset) = tokens[2];
    let (dcol, payload) = tokens[3];
    let page: u32 = page.parse().map_err(|e| err(pcol, format!("page: {e}")))?;
    let offset = u64::from_str_radix(offset, 16).map_err(|e| err(ocol, format!("offset: {e}")))?;
    let line_bytes = || -> Result<[u8; LINE_BYTES]> {
        if payload.len() != 2 * LINE_BYTES || !payload.is_ascii() {
            return Err(err(
                dcol,
                format!("line payload must be {} hex digits", 2 * LINE_BYTES),
            ));
        }
        let mut out = [0u8; LINE_BYTES];
        for (i, b) in out.iter_mut().enumerate() {
            *b = u8::from_str_radix(&payload[2 * i..2 * i + 2], 16)
                .map_err(|e| err(dcol + 2 * i, format!("payload: {e}")))?;
        }
        Ok(out)
    };
    Ok(Some(match kind {
        "R" => TraceRecord::Read {
            page,
            offset,
            data: line_bytes()?,
        },
        "W" => TraceRecord::Write {
            page,
            offset,
            data: line_bytes()?,
        },
        "P" => TraceRecord::Pim(
            PimRequest::from_payload_hex(page, offset, payload)
                .map_err(|e| err(dcol, e.to_string()))?,
        ),
        other => return Err(err(kcol, format!("unknown record kind {other:?}"))),
    }))
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(r) = parse_line(line, i + 1)? {
            out.push(r);
        }
    }
    Ok(out)
}

pub fn format_trace(records: &[TraceRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&r.to_string());
        s.push('\n');
    }
    s
}
