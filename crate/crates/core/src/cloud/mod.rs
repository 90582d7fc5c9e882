//! Point-cloud data model, file formats, synthetic scenes and augmentation.

mod augment;
mod format;
mod synth;

pub use augment::augment;
pub use format::{
    decode_ascii, decode_binary, encode_ascii, encode_binary, load_pointcloud, load_pointcloud_auto, save_pointcloud,
    CloudFormat, BINARY_MAGIC, BINARY_VERSION,
};
pub use synth::{sampling_plan, synth_scene, Primitive, SceneSpec, Shape, Surface};

use crate::error::{Error, Result};

/// Per-point class label. `None` marks an unlabeled or ignored point
/// (written as `-1` in files).
pub type Label = Option<u32>;

/// Extra per-point feature columns, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    channels: usize,
    data: Vec<f64>,
}

impl Features {
    pub fn new(channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || !data.len().is_multiple_of(channels) {
            return Err(Error::shape("features", format!("multiple of {channels}"), data.len()));
        }
        Ok(Features { channels, data })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.channels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.channels..(i + 1) * self.channels]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// A point cloud with positions in meters and optional extra feature columns
/// and class labels.
///
/// The file layouts store `x y z` followed by the extra columns, so a file
/// with `C_in` float columns yields `C_in - 3` extra features.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    positions: Vec<[f64; 3]>,
    features: Option<Features>,
    labels: Option<Vec<Label>>,
}

impl PointCloud {
    pub fn new(
        positions: Vec<[f64; 3]>,
        features: Option<Features>,
        labels: Option<Vec<Label>>,
    ) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::invalid("point cloud has no points"));
        }
        if let Some(i) = positions.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::record(i, "non-finite coordinate"));
        }
        if let Some(f) = &features {
            if f.rows() != positions.len() {
                return Err(Error::shape("feature rows", positions.len(), f.rows()));
            }
        }
        if let Some(l) = &labels {
            if l.len() != positions.len() {
                return Err(Error::shape("label rows", positions.len(), l.len()));
            }
        }
        Ok(PointCloud {
            positions,
            features,
            labels,
        })
    }

    pub fn from_positions(positions: Vec<[f64; 3]>) -> Result<Self> {
        Self::new(positions, None, None)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn features(&self) -> Option<&Features> {
        self.features.as_ref()
    }

    pub fn labels(&self) -> Option<&[Label]> {
        self.labels.as_deref()
    }

    pub fn with_labels(mut self, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::shape("label rows", self.len(), labels.len()));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Number of float columns a file of this cloud carries (`x y z` + extras).
    pub fn file_columns(&self) -> usize {
        3 + self.features.as_ref().map_or(0, |f| f.channels())
    }

    /// Fails with the offending record index if any label is `>= num_classes`.
    pub fn check_labels(&self, num_classes: u32) -> Result<()> {
        if let Some(labels) = &self.labels {
            for (i, l) in labels.iter().enumerate() {
                if let Some(c) = l {
                    if *c >= num_classes {
                        return Err(Error::record(
                            i,
                            format!("label {c} out of range for {num_classes} classes"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Per-point network input: `x y z` followed by the extra columns, or
    /// `x y z depth` (distance to the origin) when the cloud has none.
    pub fn input_features(&self) -> (usize, Vec<f64>) {
        match &self.features {
            Some(f) => {
                let c = 3 + f.channels();
                let mut out = Vec::with_capacity(self.len() * c);
                for (i, p) in self.positions.iter().enumerate() {
                    out.extend_from_slice(p);
                    out.extend_from_slice(f.row(i));
                }
                (c, out)
            }
            None => {
                let mut out = Vec::with_capacity(self.len() * 4);
                for p in &self.positions {
                    out.extend_from_slice(p);
                    out.push(norm(*p));
                }
                (4, out)
            }
        }
    }

    /// Axis-aligned bounds as `(min, max)`.
    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.positions {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        (lo, hi)
    }

    pub(crate) fn with_positions(&self, positions: Vec<[f64; 3]>) -> Self {
        debug_assert_eq!(positions.len(), self.positions.len());
        PointCloud {
            positions,
            features: self.features.clone(),
            labels: self.labels.clone(),
        }
    }
}

pub(crate) fn norm(p: [f64; 3]) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}
