//! Per-point feature branch: a shared two-layer map over the point's input
//! features with mean pooling over its k nearest neighbours in between.
//!
//! ```text
//! h = leaky(x W1 + b1)
//! s = mean_{j in knn(i)} h_j
//! f = leaky([h, s] W2 + b2)
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{mat_vec_acc, outer_acc, vec_mat_acc, ParamSet, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointEncoderConfig {
    pub hidden: usize,
    pub channels: usize,
    pub neighbors: usize,
    pub leaky_slope: f64,
}

impl Default for PointEncoderConfig {
    fn default() -> Self {
        PointEncoderConfig {
            hidden: 32,
            channels: 32,
            neighbors: 8,
            leaky_slope: 0.1,
        }
    }
}

/// `k` nearest neighbours of every point (itself included), ties broken by index.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhoods {
    pub k: usize,
    pub indices: Vec<u32>,
}

impl Neighborhoods {
    pub fn of(&self, n: usize) -> &[u32] {
        &self.indices[n * self.k..(n + 1) * self.k]
    }

    /// Brute force, `O(N^2)`; fine for desk-scale clouds.
    pub fn build(positions: &[[f64; 3]], k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("neighbour count must be positive".into()));
        }
        let k = k.min(positions.len());
        let indices = positions
            .par_iter()
            .flat_map_iter(|p| {
                let mut d: Vec<(f64, u32)> = positions
                    .iter()
                    .enumerate()
                    .map(|(j, q)| {
                        let dx = p[0] - q[0];
                        let dy = p[1] - q[1];
                        let dz = p[2] - q[2];
                        (dx * dx + dy * dy + dz * dz, j as u32)
                    })
                    .collect();
                let cmp = |a: &(f64, u32), b: &(f64, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
                if k < d.len() {
                    d.select_nth_unstable_by(k - 1, cmp);
                    d.truncate(k);
                }
                d.sort_by(cmp);
                d.into_iter().map(|(_, j)| j)
            })
            .collect();
        Ok(Neighborhoods { k, indices })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointEncoderParams {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    pub leaky_slope: f64,
}

impl PointEncoderParams {
    pub fn init(in_channels: usize, config: &PointEncoderConfig, seed: u64) -> Result<Self> {
        if config.hidden == 0 || config.channels == 0 || in_channels == 0 {
            return Err(Error::Config("point encoder sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&config.leaky_slope) {
            return Err(Error::Config("point_encoder.leaky_slope must lie in [0, 1)".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(PointEncoderParams {
            w1: Tensor::fan_in_uniform(&[in_channels, config.hidden], in_channels, &mut rng),
            b1: Tensor::zeros(&[config.hidden]),
            w2: Tensor::fan_in_uniform(&[2 * config.hidden, config.channels], 2 * config.hidden, &mut rng),
            b2: Tensor::zeros(&[config.channels]),
            leaky_slope: config.leaky_slope,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.w1.shape()[0]
    }

    pub fn hidden(&self) -> usize {
        self.w1.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.w2.shape()[1]
    }
}

impl ParamSet for PointEncoderParams {
    fn tensors(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("w1".into(), &self.w1),
            ("b1".into(), &self.b1),
            ("w2".into(), &self.w2),
            ("b2".into(), &self.b2),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            ("w1".into(), &mut self.w1),
            ("b1".into(), &mut self.b1),
            ("w2".into(), &mut self.w2),
            ("b2".into(), &mut self.b2),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct PointEncoderCache {
    input: Vec<f64>,
    neighborhoods: Neighborhoods,
    pre1: Vec<f64>,
    /// `[h, s]` per point.
    joint: Vec<f64>,
    pre2: Vec<f64>,
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

impl PointEncoderCache {
    pub(crate) fn kink_distance(&self) -> f64 {
        self.pre1.iter().chain(&self.pre2).fold(f64::INFINITY, |a, b| a.min(b.abs()))
    }
}

pub fn point_encoder_forward(
    input: &[f64],
    neighborhoods: &Neighborhoods,
    params: &PointEncoderParams,
) -> Result<(Vec<f64>, PointEncoderCache)> {
    let (ci, hd, co) = (params.in_channels(), params.hidden(), params.out_channels());
    if !input.len().is_multiple_of(ci) {
        return Err(Error::shape("point input", format!("multiple of {ci}"), input.len()));
    }
    let n = input.len() / ci;
    if neighborhoods.indices.len() != n * neighborhoods.k {
        return Err(Error::shape("neighbourhoods", n * neighborhoods.k, neighborhoods.indices.len()));
    }
    let mut pre1 = vec![0.0; n * hd];
    for (x, z) in input.chunks_exact(ci).zip(pre1.chunks_exact_mut(hd)) {
        z.copy_from_slice(params.b1.data());
        vec_mat_acc(x, params.w1.data(), hd, z);
    }
    let h: Vec<f64> = pre1.iter().map(|z| leaky(*z, params.leaky_slope)).collect();
    let mut joint = vec![0.0; n * 2 * hd];
    let inv_k = 1.0 / neighborhoods.k as f64;
    for i in 0..n {
        let row = &mut joint[i * 2 * hd..(i + 1) * 2 * hd];
        row[..hd].copy_from_slice(&h[i * hd..(i + 1) * hd]);
        for &j in neighborhoods.of(i) {
            let hj = &h[j as usize * hd..(j as usize + 1) * hd];
            for (s, v) in row[hd..].iter_mut().zip(hj) {
                *s += v * inv_k;
            }
        }
    }
    let mut pre2 = vec![0.0; n * co];
    for (x, z) in joint.chunks_exact(2 * hd).zip(pre2.chunks_exact_mut(co)) {
        z.copy_from_slice(params.b2.data());
        vec_mat_acc(x, params.w2.data(), co, z);
    }
    let out = pre2.iter().map(|z| leaky(*z, params.leaky_slope)).collect();
    Ok((
        out,
        PointEncoderCache {
            input: input.to_vec(),
            neighborhoods: neighborhoods.clone(),
            pre1,
            joint,
            pre2,
        },
    ))
}

pub fn point_encoder_backward(cache: &PointEncoderCache, params: &PointEncoderParams, dout: &[f64]) -> Result<PointEncoderParams> {
    let (ci, hd, co) = (params.in_channels(), params.hidden(), params.out_channels());
    let n = cache.pre2.len() / co;
    if dout.len() != n * co {
        return Err(Error::shape("point encoder gradient", n * co, dout.len()));
    }
    let slope = params.leaky_slope;
    let mut grads = params.zeros_like();
    let mut dh = vec![0.0; n * hd];
    let inv_k = 1.0 / cache.neighborhoods.k as f64;
    let mut dz2 = vec![0.0; co];
    let mut djoint = vec![0.0; 2 * hd];
    for i in 0..n {
        for ((d, g), z) in dz2.iter_mut().zip(&dout[i * co..(i + 1) * co]).zip(&cache.pre2[i * co..(i + 1) * co]) {
            *d = if *z > 0.0 { *g } else { slope * g };
        }
        for (b, g) in grads.b2.data_mut().iter_mut().zip(&dz2) {
            *b += g;
        }
        outer_acc(&cache.joint[i * 2 * hd..(i + 1) * 2 * hd], &dz2, grads.w2.data_mut());
        djoint.iter_mut().for_each(|x| *x = 0.0);
        mat_vec_acc(params.w2.data(), &dz2, &mut djoint);
        for (a, b) in dh[i * hd..(i + 1) * hd].iter_mut().zip(&djoint[..hd]) {
            *a += b;
        }
        for &j in cache.neighborhoods.of(i) {
            let j = j as usize;
            for (a, b) in dh[j * hd..(j + 1) * hd].iter_mut().zip(&djoint[hd..]) {
                *a += b * inv_k;
            }
        }
    }
    let mut dz1 = vec![0.0; hd];
    for i in 0..n {
        for ((d, g), z) in dz1.iter_mut().zip(&dh[i * hd..(i + 1) * hd]).zip(&cache.pre1[i * hd..(i + 1) * hd]) {
            *d = if *z > 0.0 { *g } else { slope * g };
        }
        for (b, g) in grads.b1.data_mut().iter_mut().zip(&dz1) {
            *b += g;
        }
        outer_acc(&cache.input[i * ci..(i + 1) * ci], &dz1, grads.w1.data_mut());
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn knn_includes_self_first() {
        let pts = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [3.0, 0.0, 0.0], [0.5, 0.0, 0.0]];
        let nb = Neighborhoods::build(&pts, 2).unwrap();
        assert_eq!(nb.of(0), &[0, 3]);
        assert_eq!(nb.of(2), &[2, 1]);
        let all = Neighborhoods::build(&pts, 10).unwrap();
        assert_eq!(all.k, 4);
    }

    #[test]
    fn knn_ties_by_index() {
        let pts = vec![[0.0; 3], [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]];
        let nb = Neighborhoods::build(&pts, 2).unwrap();
        assert_eq!(nb.of(0), &[0, 1]);
    }

    #[test]
    fn output_shape_and_zero_input() {
        let cfg = PointEncoderConfig::default();
        let p = PointEncoderParams::init(4, &cfg, 3).unwrap();
        let nb = Neighborhoods::build(&[[0.0; 3]; 5], 3).unwrap();
        let (out, _) = point_encoder_forward(&[0.0; 20], &nb, &p).unwrap();
        assert_eq!(out.len(), 5 * cfg.channels);
        assert!(out.iter().all(|v| *v == 0.0));
    }
}
