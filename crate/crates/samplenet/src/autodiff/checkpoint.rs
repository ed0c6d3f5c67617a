//! Flat-text model checkpoints.
//!
//! Format (stable, version-tagged):
//!
//! ```text
//! tensor-checkpoint v1
//! meta <key> <value>          # zero or more; value runs to end of line
//! params <count>
//! <name> <rank> <dim0> <dim1> ...
//! <value0> <value1> ...       # row-major, one line per parameter
//! ```
//!
//! Values are written with Rust's shortest round-trip f64 formatting, so a
//! save/load cycle reproduces every parameter bit-exactly. Names must be
//! whitespace-free.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{Error, Parameter, Result};

const MAGIC: &str = "tensor-checkpoint v1";

pub fn save(
    path: &Path,
    meta: &BTreeMap<String, String>,
    params: &[Parameter],
) -> Result<()> {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    for (k, v) in meta {
        if k.contains(char::is_whitespace) {
            return Err(Error::Checkpoint(format!("meta key {k:?} contains whitespace")));
        }
        writeln!(out, "meta {k} {v}").unwrap();
    }
    writeln!(out, "params {}", params.len()).unwrap();
    for p in params {
        if p.name.contains(char::is_whitespace) {
            return Err(Error::Checkpoint(format!(
                "parameter name {:?} contains whitespace",
                p.name
            )));
        }
        write!(out, "{} {}", p.name, p.shape.len()).unwrap();
        for d in &p.shape {
            write!(out, " {d}").unwrap();
        }
        out.push('\n');
        let mut first = true;
        for v in &p.data {
            if !first {
                out.push(' ');
            }
            write!(out, "{v}").unwrap();
            first = false;
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(BTreeMap<String, String>, Vec<Parameter>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let err = |line: usize, msg: String| Error::Checkpoint(format!("line {}: {msg}", line + 1));

    let (_, magic) = lines
        .next()
        .ok_or_else(|| Error::Checkpoint("empty file".into()))?;
    if magic.trim_end() != MAGIC {
        return Err(Error::Checkpoint(format!(
            "bad header {magic:?}, expected {MAGIC:?}"
        )));
    }

    let mut meta = BTreeMap::new();
    let mut count: Option<usize> = None;
    for (ln, line) in lines.by_ref() {
        if let Some(rest) = line.strip_prefix("meta ") {
            let (key, value) = rest
                .split_once(' ')
                .ok_or_else(|| err(ln, "malformed meta line".into()))?;
            meta.insert(key.to_string(), value.to_string());
        } else if let Some(rest) = line.strip_prefix("params ") {
            count = Some(
                rest.trim()
                    .parse()
                    .map_err(|_| err(ln, format!("bad parameter count {rest:?}")))?,
            );
            break;
        } else {
            return Err(err(ln, format!("unexpected line {line:?}")));
        }
    }
    let count = count.ok_or_else(|| Error::Checkpoint("missing params line".into()))?;

    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let (ln, header) = lines
            .next()
            .ok_or_else(|| Error::Checkpoint("truncated: missing parameter header".into()))?;
        let mut tok = header.split_whitespace();
        let name = tok
            .next()
            .ok_or_else(|| err(ln, "empty parameter header".into()))?;
        let rank: usize = tok
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err(ln, "bad rank".into()))?;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(
                tok.next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| err(ln, "bad dimension".into()))?,
            );
        }
        if tok.next().is_some() {
            return Err(err(ln, "trailing tokens after shape".into()));
        }
        let expected: usize = shape.iter().product();

        let (vln, values) = lines
            .next()
            .ok_or_else(|| Error::Checkpoint(format!("truncated: missing values for {name}")))?;
        let mut data = Vec::with_capacity(expected);
        for t in values.split_whitespace() {
            data.push(
                t.parse::<f64>()
                    .map_err(|_| err(vln, format!("non-float token {t:?}")))?,
            );
        }
        if data.len() != expected {
            return Err(err(
                vln,
                format!("{name}: expected {expected} values, got {}", data.len()),
            ));
        }
        params.push(Parameter::new(name, shape, data)?);
    }
    Ok((meta, params))
}
