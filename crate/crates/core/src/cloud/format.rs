//! `hexpc` ASCII and binary point-cloud files.
//!
//! ASCII: a header line `hexpc ascii N C_in has_labels`, then one record per
//! line: `C_in` whitespace-separated floats (`x y z` first) and, when
//! `has_labels` is 1, an integer label (`-1` = unlabeled). `#` starts a
//! comment that runs to the end of the line.
//!
//! Binary (little-endian): magic `HEXPC\0`, version `u16 = 1`, `N: u64`,
//! `C_in: u16`, `has_labels: u8`, then `N` records of `C_in` `f32` values
//! followed by an `i32` label when present.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::{Features, Label, PointCloud};
use crate::error::{Error, Result};

pub const BINARY_MAGIC: &[u8; 6] = b"HEXPC\0";
pub const BINARY_VERSION: u16 = 1;
const BINARY_HEADER_LEN: usize = 6 + 2 + 8 + 2 + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    Ascii,
    Binary,
}

impl FromStr for CloudFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ascii" => Ok(CloudFormat::Ascii),
            "binary" => Ok(CloudFormat::Binary),
            other => Err(Error::invalid(format!("unknown cloud format `{other}`"))),
        }
    }
}

impl CloudFormat {
    /// Binary when the bytes start with the binary magic, ASCII otherwise.
    pub fn sniff(bytes: &[u8]) -> Self {
        if bytes.starts_with(BINARY_MAGIC) {
            CloudFormat::Binary
        } else {
            CloudFormat::Ascii
        }
    }
}

/// Load with the format inferred from the file contents.
pub fn load_pointcloud_auto(path: &Path) -> Result<PointCloud> {
    let bytes = fs::read(path)?;
    decode_bytes(&bytes, CloudFormat::sniff(&bytes))
}

pub fn load_pointcloud(path: &Path, format: CloudFormat) -> Result<PointCloud> {
    decode_bytes(&fs::read(path)?, format)
}

fn decode_bytes(bytes: &[u8], format: CloudFormat) -> Result<PointCloud> {
    match format {
        CloudFormat::Binary => decode_binary(bytes),
        CloudFormat::Ascii => {
            let text = std::str::from_utf8(bytes)
                .map_err(|e| Error::format(format!("not UTF-8: {e}")))?;
            decode_ascii(text)
        }
    }
}

pub fn save_pointcloud(cloud: &PointCloud, path: &Path, format: CloudFormat) -> Result<()> {
    let bytes = match format {
        CloudFormat::Binary => encode_binary(cloud),
        CloudFormat::Ascii => encode_ascii(cloud).into_bytes(),
    };
    fs::write(path, bytes)?;
    Ok(())
}

fn parse_label(record: usize, raw: i64) -> Result<Label> {
    match raw {
        -1 => Ok(None),
        l if (0..=i64::from(i32::MAX)).contains(&l) => Ok(Some(l as u32)),
        l => Err(Error::record(record, format!("label {l} out of range"))),
    }
}

fn finish(
    columns: usize,
    positions: Vec<[f64; 3]>,
    extra: Vec<f64>,
    labels: Option<Vec<Label>>,
) -> Result<PointCloud> {
    let features = if columns > 3 {
        Some(Features::new(columns - 3, extra)?)
    } else {
        None
    };
    PointCloud::new(positions, features, labels)
}

pub fn decode_ascii(text: &str) -> Result<PointCloud> {
    let mut lines = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty());

    let header = lines.next().ok_or_else(|| Error::format("no records"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != "hexpc" || fields[1] != "ascii" {
        return Err(Error::format(format!("malformed header `{header}`")));
    }
    let n: usize = fields[2]
        .parse()
        .map_err(|_| Error::format(format!("bad record count `{}`", fields[2])))?;
    let columns: usize = fields[3]
        .parse()
        .map_err(|_| Error::format(format!("bad column count `{}`", fields[3])))?;
    let has_labels = match fields[4] {
        "0" => false,
        "1" => true,
        other => return Err(Error::format(format!("bad has_labels flag `{other}`"))),
    };
    if columns < 3 || columns > usize::from(u16::MAX) {
        return Err(Error::format(format!("column count {columns} outside [3, 65535]")));
    }
    if n == 0 {
        return Err(Error::format("no records"));
    }

    let mut positions = Vec::new();
    let mut extra = Vec::new();
    let mut labels = has_labels.then(Vec::new);
    let per_line = columns + usize::from(has_labels);
    for (record, line) in lines.enumerate() {
        if record >= n {
            return Err(Error::record(record, format!("more records than the {n} declared")));
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != per_line {
            return Err(Error::record(
                record,
                format!("expected {per_line} fields, found {}", tokens.len()),
            ));
        }
        let mut p = [0.0; 3];
        for (c, tok) in tokens[..columns].iter().enumerate() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::record(record, format!("bad number `{tok}`")))?;
            if !v.is_finite() {
                return Err(Error::record(record, "non-finite coordinate"));
            }
            if c < 3 {
                p[c] = v;
            } else {
                extra.push(v);
            }
        }
        positions.push(p);
        if let Some(labels) = labels.as_mut() {
            let tok = tokens[columns];
            let raw: i64 = tok
                .parse()
                .map_err(|_| Error::record(record, format!("bad label `{tok}`")))?;
            labels.push(parse_label(record, raw)?);
        }
    }
    if positions.len() != n {
        return Err(Error::record(
            positions.len(),
            format!("truncated: {n} records declared, {} found", positions.len()),
        ));
    }
    finish(columns, positions, extra, labels)
}

/// Canonical ASCII form. Numbers use the shortest representation that parses
/// back to the same `f64`.
pub fn encode_ascii(cloud: &PointCloud) -> String {
    let columns = cloud.file_columns();
    let has_labels = cloud.labels().is_some();
    let mut out = format!(
        "hexpc ascii {} {} {}\n",
        cloud.len(),
        columns,
        u8::from(has_labels)
    );
    for (i, p) in cloud.positions().iter().enumerate() {
        let _ = write!(out, "{} {} {}", p[0], p[1], p[2]);
        if let Some(f) = cloud.features() {
            for v in f.row(i) {
                let _ = write!(out, " {v}");
            }
        }
        if let Some(labels) = cloud.labels() {
            let _ = write!(out, " {}", labels[i].map_or(-1, |l| l as i64));
        }
        out.push('\n');
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<PointCloud> {
    if bytes.len() < BINARY_HEADER_LEN {
        return Err(if bytes.is_empty() {
            Error::format("no records")
        } else {
            Error::format("truncated header")
        });
    }
    if &bytes[..6] != BINARY_MAGIC {
        return Err(Error::format("bad magic"));
    }
    let version = u16::from_le_bytes([bytes[6], bytes[7]]);
    if version != BINARY_VERSION {
        return Err(Error::format(format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let columns = usize::from(u16::from_le_bytes([bytes[16], bytes[17]]));
    let has_labels = match bytes[18] {
        0 => false,
        1 => true,
        other => return Err(Error::format(format!("bad has_labels flag {other}"))),
    };
    if columns < 3 {
        return Err(Error::format(format!("column count {columns} below 3")));
    }
    if n == 0 {
        return Err(Error::format("no records"));
    }

    let record_len = columns * 4 + if has_labels { 4 } else { 0 };
    let body = &bytes[BINARY_HEADER_LEN..];
    let available = body.len() / record_len;
    let n_usize = usize::try_from(n).unwrap_or(usize::MAX);
    if available < n_usize {
        return Err(Error::record(
            available,
            format!("truncated binary record ({n} declared)"),
        ));
    }
    if body.len() != n_usize * record_len {
        return Err(Error::format("trailing bytes after last record"));
    }

    let mut positions = Vec::with_capacity(n_usize);
    let mut extra = Vec::with_capacity(n_usize * (columns - 3));
    let mut labels = has_labels.then(|| Vec::with_capacity(n_usize));
    for (record, chunk) in body.chunks_exact(record_len).enumerate() {
        let mut p = [0.0; 3];
        for c in 0..columns {
            let v = f32::from_le_bytes(chunk[c * 4..c * 4 + 4].try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::record(record, "non-finite coordinate"));
            }
            if c < 3 {
                p[c] = f64::from(v);
            } else {
                extra.push(f64::from(v));
            }
        }
        positions.push(p);
        if let Some(labels) = labels.as_mut() {
            let raw = i32::from_le_bytes(chunk[columns * 4..].try_into().unwrap());
            labels.push(parse_label(record, i64::from(raw))?);
        }
    }
    finish(columns, positions, extra, labels)
}

/// Canonical binary form. Values are narrowed to `f32`.
pub fn encode_binary(cloud: &PointCloud) -> Vec<u8> {
    let columns = cloud.file_columns();
    let has_labels = cloud.labels().is_some();
    let record_len = columns * 4 + if has_labels { 4 } else { 0 };
    let mut out = Vec::with_capacity(BINARY_HEADER_LEN + cloud.len() * record_len);
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&BINARY_VERSION.to_le_bytes());
    out.extend_from_slice(&(cloud.len() as u64).to_le_bytes());
    out.extend_from_slice(&(columns as u16).to_le_bytes());
    out.push(u8::from(has_labels));
    for (i, p) in cloud.positions().iter().enumerate() {
        for v in p {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        if let Some(f) = cloud.features() {
            for v in f.row(i) {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        if let Some(labels) = cloud.labels() {
            let raw = labels[i].map_or(-1i32, |l| l as i32);
            out.extend_from_slice(&raw.to_le_bytes());
        }
    }
    out
}
