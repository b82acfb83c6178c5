//! Plain-text matrix format.
//!
//! ```text
//! l=3 kind=ordinal
//! 1 1 1
//! 0 1 1
//! 0 0 1
//! ```
//!
//! Rows are groups, columns are widths `1..=l`. Bilateral mappings write the
//! left block, a blank line, then the right block.

use std::fmt::Write;

use super::{BetaMatrix, ChannelMapping, MappingKind};
use crate::error::{Error, Result};

pub fn write_mapping(mapping: &ChannelMapping) -> String {
    let l = mapping.l();
    let mut out = format!("l={l} kind={}\n", mapping.kind());
    for (b, block) in mapping.blocks().iter().enumerate() {
        if b > 0 {
            out.push('\n');
        }
        for i in 0..l {
            let row: Vec<&str> = block.row(i).iter().map(|&v| if v { "1" } else { "0" }).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
    }
    out
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

pub fn parse_mapping(text: &str) -> Result<ChannelMapping> {
    let mut lines = text.lines().enumerate().map(|(n, s)| (n + 1, s.trim())).filter(|(_, s)| !s.is_empty());
    let (hline, header) = lines.next().ok_or_else(|| parse_err(1, "empty document"))?;
    let mut l = None;
    let mut kind = None;
    for field in header.split_whitespace() {
        match field.split_once('=') {
            Some(("l", v)) => {
                l = Some(v.parse::<usize>().map_err(|_| parse_err(hline, format!("bad group count `{v}`")))?)
            }
            Some(("kind", v)) => kind = Some(v.parse::<MappingKind>().map_err(|e| parse_err(hline, e.to_string()))?),
            _ => return Err(parse_err(hline, format!("unexpected header field `{field}`"))),
        }
    }
    let l = l.ok_or_else(|| parse_err(hline, "missing l="))?;
    let kind = kind.ok_or_else(|| parse_err(hline, "missing kind="))?;
    if l == 0 {
        return Err(parse_err(hline, "l must be at least 1"));
    }
    let nblocks = if kind == MappingKind::Bilateral { 2 } else { 1 };
    let mut blocks = Vec::with_capacity(nblocks);
    for _ in 0..nblocks {
        let mut rows = Vec::with_capacity(l);
        for _ in 0..l {
            let (n, line) = lines.next().ok_or_else(|| parse_err(text.lines().count() + 1, "missing matrix rows"))?;
            let row = line
                .split_whitespace()
                .map(|tok| match tok {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    other => Err(parse_err(n, format!("expected 0 or 1, got `{other}`"))),
                })
                .collect::<Result<Vec<bool>>>()?;
            if row.len() != l {
                return Err(parse_err(n, format!("expected {l} entries, got {}", row.len())));
            }
            rows.push(row);
        }
        blocks.push(BetaMatrix::from_rows(&rows)?);
    }
    if let Some((n, _)) = lines.next() {
        return Err(parse_err(n, "trailing content"));
    }
    ChannelMapping::new(kind, blocks)
}
