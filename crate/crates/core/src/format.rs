//! Flat binary files: a plain-text header of `key value` lines terminated by
//! `end`, followed by a payload of little-endian `f64`s.

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};

use crate::{Error, Result};

pub(crate) struct Header {
    pub fields: BTreeMap<String, String>,
}

pub(crate) fn write_header(
    w: &mut impl Write,
    magic: &str,
    fields: &[(&str, String)],
) -> Result<()> {
    writeln!(w, "{magic}")?;
    for (k, v) in fields {
        writeln!(w, "{k} {v}")?;
    }
    writeln!(w, "end")?;
    Ok(())
}

pub(crate) fn read_header(r: &mut impl BufRead, magic: &str, what: &'static str) -> Result<Header> {
    let bad = |reason: String| Error::Format { what, reason };
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end() != magic {
        return Err(bad(format!(
            "expected magic {magic:?}, found {:?}",
            line.trim_end()
        )));
    }
    let mut fields = BTreeMap::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(bad("header not terminated by `end`".into()));
        }
        let text = line.trim_end_matches('\n');
        if text == "end" {
            break;
        }
        let (k, v) = text
            .split_once(' ')
            .ok_or_else(|| bad(format!("header line {text:?} is not `key value`")))?;
        fields.insert(k.to_string(), v.to_string());
    }
    Ok(Header { fields })
}

impl Header {
    pub fn get(&self, key: &str, what: &'static str) -> Result<&str> {
        self.fields
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Format {
                what,
                reason: format!("missing header key {key:?}"),
            })
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str, what: &'static str) -> Result<T> {
        let raw = self.get(key, what)?;
        raw.parse().map_err(|_| Error::Format {
            what,
            reason: format!("bad value {raw:?} for {key:?}"),
        })
    }
}

pub(crate) fn write_f64s(w: &mut impl Write, values: &[f64]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_f64s(r: &mut impl Read, n: usize, what: &'static str) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf).map_err(|e| Error::Format {
        what,
        reason: format!("payload shorter than {n} values: {e}"),
    })?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format {
            what,
            reason: format!("{} trailing bytes after payload", rest.len()),
        });
    }
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

/// Shortest round-tripping decimal representation.
pub(crate) fn float(v: f64) -> String {
    format!("{v:?}")
}
