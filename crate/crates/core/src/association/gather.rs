use crate::encoder::{bilinear_taps, FeatureMap};
use crate::error::{Error, Result};
use crate::projection::{HexPlaneSet, NUM_PLANES};

/// Per point and plane, the fused plane feature sampled at the point's
/// projected position.
#[derive(Debug, Clone, PartialEq)]
pub struct Gathered {
    pub num_points: usize,
    pub channels: usize,
    /// `N x 6 x C_f`, zero where invalid.
    pub data: Vec<f64>,
    /// `N x 6`.
    pub valid: Vec<bool>,
    taps: Vec<[(usize, f64); 4]>,
    map_shapes: Vec<(usize, usize, usize)>,
}

impl Gathered {
    pub fn feature(&self, n: usize, plane: usize) -> &[f64] {
        let o = (n * NUM_PLANES + plane) * self.channels;
        &self.data[o..o + self.channels]
    }
}

fn feature_dim(n: usize) -> usize {
    n.div_ceil(2).div_ceil(2)
}

/// Bilinear sample of each plane's fused map at the point's `(u, v)`, scaled
/// from raster to feature resolution. Out-of-view pairs are zero and masked.
pub fn gather_plane_features(features: &[FeatureMap], hex: &HexPlaneSet) -> Result<Gathered> {
    if features.len() != NUM_PLANES {
        return Err(Error::shape("plane feature maps", NUM_PLANES, features.len()));
    }
    let channels = features[0].channels;
    for (m, (f, plane)) in features.iter().zip(&hex.planes).enumerate() {
        let want = (feature_dim(plane.spec.rows()), feature_dim(plane.spec.cols()), channels);
        if f.shape() != want {
            return Err(Error::shape("plane feature map", format!("{want:?} for plane {m}"), format!("{:?}", f.shape())));
        }
    }
    let n = hex.num_points;
    let mut data = vec![0.0; n * NUM_PLANES * channels];
    let mut valid = vec![false; n * NUM_PLANES];
    let mut taps = vec![[(0, 0.0); 4]; n * NUM_PLANES];
    for (m, (f, plane)) in features.iter().zip(&hex.planes).enumerate() {
        let sy = f.rows as f64 / plane.spec.rows() as f64;
        let sx = f.cols as f64 / plane.spec.cols() as f64;
        for (i, gc) in plane.coords.coords.iter().enumerate() {
            if !gc.in_fov() {
                continue;
            }
            let slot = i * NUM_PLANES + m;
            let t = bilinear_taps(gc.v * sy, gc.u * sx, f.rows, f.cols);
            let dst = &mut data[slot * channels..(slot + 1) * channels];
            for (px, w) in t {
                if w == 0.0 {
                    continue;
                }
                for (d, s) in dst.iter_mut().zip(&f.data[px * channels..(px + 1) * channels]) {
                    *d += w * s;
                }
            }
            valid[slot] = true;
            taps[slot] = t;
        }
    }
    Ok(Gathered {
        num_points: n,
        channels,
        data,
        valid,
        taps,
        map_shapes: features.iter().map(|f| f.shape()).collect(),
    })
}

/// Scatter gathered-feature gradients back onto the six plane maps.
pub fn gather_backward(gathered: &Gathered, dgathered: &[f64]) -> Result<Vec<FeatureMap>> {
    if dgathered.len() != gathered.data.len() {
        return Err(Error::shape("gathered gradient", gathered.data.len(), dgathered.len()));
    }
    let c = gathered.channels;
    let mut out: Vec<FeatureMap> = gathered
        .map_shapes
        .iter()
        .map(|&(r, cols, ch)| FeatureMap::zeros(r, cols, ch))
        .collect();
    for slot in 0..gathered.num_points * NUM_PLANES {
        if !gathered.valid[slot] {
            continue;
        }
        let g = &dgathered[slot * c..(slot + 1) * c];
        let map = &mut out[slot % NUM_PLANES];
        for (px, w) in gathered.taps[slot] {
            if w == 0.0 {
                continue;
            }
            for (d, gi) in map.data[px * c..(px + 1) * c].iter_mut().zip(g) {
                *d += w * gi;
            }
        }
    }
    Ok(out)
}
