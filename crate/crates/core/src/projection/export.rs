//! PGM/PPM plane images and the binary projection-index sidecar.
//!
//! Sidecar layout (little-endian): magic `HEXIDX\0\0`, version `u16 = 1`,
//! `num_points: u64`, `num_planes: u8`, then per plane: `kind: u8`,
//! `rows: u32`, `cols: u32`, `rows*cols` winners as `u32` (`u32::MAX` =
//! empty), `rows*cols` depths as `f64`, and `num_points` `(row, col)` pairs
//! of `u32` (`u32::MAX` = out of view).

use std::fs;
use std::path::{Path, PathBuf};

use super::{HexPlaneSet, LabelImage, PlaneKind, ProjectionIndex};
use crate::error::{Error, Result};

pub const INDEX_MAGIC: &[u8; 8] = b"HEXIDX\0\0";
pub const INDEX_VERSION: u16 = 1;
const NONE: u32 = u32::MAX;

/// 16-bit PGM of the depth buffer. Occupied pixels map linearly from the
/// nearest (65535) to the farthest (1) depth on the plane; empty pixels are 0.
pub fn depth_pgm(index: &ProjectionIndex) -> Vec<u8> {
    let (lo, hi) = index
        .zbuffer
        .iter()
        .filter(|d| d.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    let mut out = format!("P5\n{} {}\n65535\n", index.cols, index.rows).into_bytes();
    for &d in &index.zbuffer {
        let q: u16 = if !d.is_finite() {
            0
        } else if hi > lo {
            1 + ((hi - d) / (hi - lo) * 65534.0).round() as u16
        } else {
            65535
        };
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

/// 8-bit PGM of class ids shifted by one; ignored pixels are 0.
pub fn label_pgm(image: &LabelImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.cols, image.rows).into_bytes();
    out.extend(image.labels.iter().map(|l| l.map_or(0, |c| (c + 1).min(255) as u8)));
    out
}

const PALETTE: [[u8; 3]; 12] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [170, 110, 40],
];

/// False-color class map; ignored pixels are black.
pub fn label_ppm(image: &LabelImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.cols, image.rows).into_bytes();
    for l in &image.labels {
        let rgb = l.map_or([0, 0, 0], |c| PALETTE[c as usize % PALETTE.len()]);
        out.extend_from_slice(&rgb);
    }
    out
}

/// Write `<stem>.<plane>.depth.pgm` for every plane, plus
/// `<stem>.<plane>.label.pgm` / `.label.ppm` when label images are given.
pub fn export_planes(hex: &HexPlaneSet, labels: Option<&[LabelImage]>, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (m, plane) in hex.planes.iter().enumerate() {
        let name = plane.spec.kind().name();
        let path = dir.join(format!("{stem}.{name}.depth.pgm"));
        fs::write(&path, depth_pgm(&plane.index))?;
        written.push(path);
        if let Some(images) = labels {
            let path = dir.join(format!("{stem}.{name}.label.pgm"));
            fs::write(&path, label_pgm(&images[m]))?;
            written.push(path);
            let path = dir.join(format!("{stem}.{name}.label.ppm"));
            fs::write(&path, label_ppm(&images[m]))?;
            written.push(path);
        }
    }
    Ok(written)
}

pub fn encode_index_sidecar(hex: &HexPlaneSet) -> Vec<u8> {
    let mut out = INDEX_MAGIC.to_vec();
    out.extend_from_slice(&INDEX_VERSION.to_le_bytes());
    out.extend_from_slice(&(hex.num_points as u64).to_le_bytes());
    out.push(hex.planes.len() as u8);
    for plane in &hex.planes {
        let idx = &plane.index;
        out.push(plane.spec.kind().index() as u8);
        out.extend_from_slice(&(idx.rows as u32).to_le_bytes());
        out.extend_from_slice(&(idx.cols as u32).to_le_bytes());
        for w in &idx.winner {
            out.extend_from_slice(&w.unwrap_or(NONE).to_le_bytes());
        }
        for d in &idx.zbuffer {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for p in &idx.point_pixel {
            let (r, c) = p.unwrap_or((NONE, NONE));
            out.extend_from_slice(&r.to_le_bytes());
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format("truncated index sidecar"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Decode a sidecar into `(kind, index)` pairs, checking internal consistency.
pub fn decode_index_sidecar(bytes: &[u8]) -> Result<Vec<(PlaneKind, ProjectionIndex)>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != INDEX_MAGIC {
        return Err(Error::format("bad index magic"));
    }
    let version = r.u16()?;
    if version != INDEX_VERSION {
        return Err(Error::format(format!("unsupported index version {version}")));
    }
    let num_points = usize::try_from(r.u64()?).map_err(|_| Error::format("point count overflow"))?;
    let num_planes = r.u8()?;
    let mut out = Vec::with_capacity(usize::from(num_planes));
    for m in 0..num_planes {
        let kind = PlaneKind::from_index(usize::from(r.u8()?))
            .ok_or_else(|| Error::format(format!("plane {m}: unknown kind")))?;
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let pixels = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::format("plane size overflow"))?;
        let need = pixels
            .checked_mul(12)
            .and_then(|b| num_points.checked_mul(8).and_then(|p| b.checked_add(p)))
            .ok_or_else(|| Error::format("plane size overflow"))?;
        if need > r.remaining() {
            return Err(Error::format("truncated index sidecar"));
        }
        let mut winner = Vec::with_capacity(pixels);
        for _ in 0..pixels {
            let w = r.u32()?;
            if w != NONE && w as usize >= num_points {
                return Err(Error::format(format!("plane {m}: winner {w} out of range")));
            }
            winner.push((w != NONE).then_some(w));
        }
        let mut zbuffer = Vec::with_capacity(pixels);
        for (px, w) in winner.iter().enumerate() {
            let d = r.f64()?;
            let ok = match w {
                Some(_) => d.is_finite(),
                None => d == f64::INFINITY,
            };
            if !ok {
                return Err(Error::format(format!("plane {m}: depth at pixel {px} inconsistent with winner")));
            }
            zbuffer.push(d);
        }
        let mut point_pixel = Vec::with_capacity(num_points);
        for n in 0..num_points {
            let (row, col) = (r.u32()?, r.u32()?);
            let pp = if row == NONE && col == NONE {
                None
            } else if (row as usize) < rows && (col as usize) < cols {
                Some((row, col))
            } else {
                return Err(Error::record(n, format!("plane {m}: pixel out of grid")));
            };
            point_pixel.push(pp);
        }
        for (px, w) in winner.iter().enumerate() {
            if let Some(w) = w {
                let expect = ((px / cols) as u32, (px % cols) as u32);
                if point_pixel[*w as usize] != Some(expect) {
                    return Err(Error::format(format!("plane {m}: winner of pixel {px} maps elsewhere")));
                }
            }
        }
        out.push((
            kind,
            ProjectionIndex {
                rows,
                cols,
                winner,
                zbuffer,
                point_pixel,
            },
        ));
    }
    if r.remaining() != 0 {
        return Err(Error::format("trailing bytes in index sidecar"));
    }
    Ok(out)
}
