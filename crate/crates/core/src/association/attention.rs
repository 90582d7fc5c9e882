//! Per-point multi-head cross-attention over the six gathered plane features.
//!
//! For point `n` with point feature `f`, plane features `g_m`, offsets `o_m`:
//!
//! ```text
//! q   = f W_q
//! k_m = g_m W_k + o_m W_pos        (the offset embedding shifts the keys)
//! v_m = g_m W_v
//! a_m = softmax_m over valid planes of  q_h . k_{m,h} / sqrt(d_k),  per head h
//! p   = concat_h(sum_m a_m v_{m,h}) W_out   (+ f when the residual is on)
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projection::NUM_PLANES;
use crate::tensor::{mat_vec_acc, outer_acc, vec_mat_acc, ParamSet, Tensor};

const SHARD: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttentionConfig {
    pub heads: usize,
    pub head_dim: usize,
    pub out_channels: usize,
    #[serde(default)]
    pub residual: bool,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        AttentionConfig {
            heads: 4,
            head_dim: 16,
            out_channels: 64,
            residual: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    /// `[C_p, h * d_k]`
    pub w_q: Tensor,
    /// `[C_f, h * d_k]`
    pub w_k: Tensor,
    /// `[C_f, h * d_k]`
    pub w_v: Tensor,
    /// `[3, h * d_k]`
    pub w_pos: Tensor,
    /// `[h * d_k, C_out]`
    pub w_out: Tensor,
    pub heads: usize,
    pub head_dim: usize,
    pub residual: bool,
}

impl AttentionParams {
    pub fn init(point_channels: usize, feature_channels: usize, config: &AttentionConfig, seed: u64) -> Result<Self> {
        if config.heads == 0 || config.head_dim == 0 || config.out_channels == 0 {
            return Err(Error::Config("attention sizes must be positive".into()));
        }
        if config.residual && point_channels != config.out_channels {
            return Err(Error::Config(format!(
                "attention.residual needs out_channels == point channels ({point_channels})"
            )));
        }
        let d = config.heads * config.head_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(AttentionParams {
            w_q: Tensor::fan_in_uniform(&[point_channels, d], point_channels, &mut rng),
            w_k: Tensor::fan_in_uniform(&[feature_channels, d], feature_channels, &mut rng),
            w_v: Tensor::fan_in_uniform(&[feature_channels, d], feature_channels, &mut rng),
            w_pos: Tensor::fan_in_uniform(&[3, d], 3, &mut rng),
            w_out: Tensor::fan_in_uniform(&[d, config.out_channels], d, &mut rng),
            heads: config.heads,
            head_dim: config.head_dim,
            residual: config.residual,
        })
    }

    pub fn model_dim(&self) -> usize {
        self.heads * self.head_dim
    }

    pub fn point_channels(&self) -> usize {
        self.w_q.shape()[0]
    }

    pub fn feature_channels(&self) -> usize {
        self.w_k.shape()[0]
    }

    pub fn out_channels(&self) -> usize {
        self.w_out.shape()[1]
    }
}

impl ParamSet for AttentionParams {
    fn tensors(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("w_q".into(), &self.w_q),
            ("w_k".into(), &self.w_k),
            ("w_v".into(), &self.w_v),
            ("w_pos".into(), &self.w_pos),
            ("w_out".into(), &self.w_out),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            ("w_q".into(), &mut self.w_q),
            ("w_k".into(), &mut self.w_k),
            ("w_v".into(), &mut self.w_v),
            ("w_pos".into(), &mut self.w_pos),
            ("w_out".into(), &mut self.w_out),
        ]
    }
}

/// Bias-free linear embedding of every offset: `N x 6 x (h * d_k)`.
pub fn positional_embedding(offsets: &[[f64; 3]], params: &AttentionParams) -> Vec<f64> {
    let d = params.model_dim();
    let mut out = vec![0.0; offsets.len() * d];
    for (o, dst) in offsets.iter().zip(out.chunks_exact_mut(d)) {
        vec_mat_acc(o, params.w_pos.data(), d, dst);
    }
    out
}

/// Everything the attention consumes for one cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionInput {
    pub num_points: usize,
    /// `N x C_p`
    pub point_features: Vec<f64>,
    /// `N x 6 x C_f`
    pub gathered: Vec<f64>,
    /// `N x 6`
    pub offsets: Vec<[f64; 3]>,
    /// `N x 6`
    pub valid: Vec<bool>,
}

impl AttentionInput {
    fn check(&self, params: &AttentionParams) -> Result<()> {
        let n = self.num_points;
        let slots = n * NUM_PLANES;
        if self.point_features.len() != n * params.point_channels() {
            return Err(Error::shape("point features", n * params.point_channels(), self.point_features.len()));
        }
        if self.gathered.len() != slots * params.feature_channels() {
            return Err(Error::shape("gathered features", slots * params.feature_channels(), self.gathered.len()));
        }
        if self.offsets.len() != slots {
            return Err(Error::shape("offsets", slots, self.offsets.len()));
        }
        if self.valid.len() != slots {
            return Err(Error::shape("validity", slots, self.valid.len()));
        }
        if let Some(p) = (0..n).find(|&p| !self.valid[p * NUM_PLANES..(p + 1) * NUM_PLANES].iter().any(|v| *v)) {
            return Err(Error::invalid(format!("point {p} has no valid plane")));
        }
        Ok(())
    }
}

/// Forward intermediates needed by [`cross_attention_backward`].
#[derive(Debug, Clone)]
pub struct AttentionCache {
    pub input: AttentionInput,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// `N x 6 x h`, zero for invalid planes.
    pub weights: Vec<f64>,
    z: Vec<f64>,
}

impl AttentionCache {
    /// Attention weight of `plane` for point `n`, head `h`.
    pub fn weight(&self, n: usize, plane: usize, head: usize, heads: usize) -> f64 {
        self.weights[(n * NUM_PLANES + plane) * heads + head]
    }
}

struct PointOut {
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    a: Vec<f64>,
    z: Vec<f64>,
    out: Vec<f64>,
}

fn forward_point(input: &AttentionInput, params: &AttentionParams, n: usize) -> PointOut {
    let (cp, cf, d, h, dk) = (
        params.point_channels(),
        params.feature_channels(),
        params.model_dim(),
        params.heads,
        params.head_dim,
    );
    let scale = 1.0 / (dk as f64).sqrt();
    let f = &input.point_features[n * cp..(n + 1) * cp];
    let mut q = vec![0.0; d];
    vec_mat_acc(f, params.w_q.data(), d, &mut q);
    let mut k = vec![0.0; NUM_PLANES * d];
    let mut v = vec![0.0; NUM_PLANES * d];
    let valid = &input.valid[n * NUM_PLANES..(n + 1) * NUM_PLANES];
    for m in 0..NUM_PLANES {
        if !valid[m] {
            continue;
        }
        let slot = n * NUM_PLANES + m;
        let g = &input.gathered[slot * cf..(slot + 1) * cf];
        let km = &mut k[m * d..(m + 1) * d];
        vec_mat_acc(g, params.w_k.data(), d, km);
        vec_mat_acc(&input.offsets[slot], params.w_pos.data(), d, km);
        vec_mat_acc(g, params.w_v.data(), d, &mut v[m * d..(m + 1) * d]);
    }
    let mut a = vec![0.0; NUM_PLANES * h];
    let mut z = vec![0.0; d];
    for head in 0..h {
        let r = head * dk..(head + 1) * dk;
        let mut scores = [f64::NEG_INFINITY; NUM_PLANES];
        for m in (0..NUM_PLANES).filter(|&m| valid[m]) {
            let km = &k[m * d..(m + 1) * d];
            scores[m] = q[r.clone()].iter().zip(&km[r.clone()]).map(|(x, y)| x * y).sum::<f64>() * scale;
        }
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for m in (0..NUM_PLANES).filter(|&m| valid[m]) {
            let e = (scores[m] - max).exp();
            a[m * h + head] = e;
            sum += e;
        }
        for m in (0..NUM_PLANES).filter(|&m| valid[m]) {
            a[m * h + head] /= sum;
            let w = a[m * h + head];
            for (zj, vj) in z[r.clone()].iter_mut().zip(&v[m * d + r.start..m * d + r.end]) {
                *zj += w * vj;
            }
        }
    }
    let co = params.out_channels();
    let mut out = vec![0.0; co];
    vec_mat_acc(&z, params.w_out.data(), co, &mut out);
    if params.residual {
        for (o, x) in out.iter_mut().zip(f) {
            *o += x;
        }
    }
    PointOut { q, k, v, a, z, out }
}

/// Fused per-point features `N x C_out` and the cache for the backward pass.
pub fn cross_attention_forward(input: AttentionInput, params: &AttentionParams) -> Result<(Vec<f64>, AttentionCache)> {
    input.check(params)?;
    let n = input.num_points;
    let per_point: Vec<PointOut> = (0..n).into_par_iter().map(|i| forward_point(&input, params, i)).collect();
    let d = params.model_dim();
    let mut cache = AttentionCache {
        q: Vec::with_capacity(n * d),
        k: Vec::with_capacity(n * NUM_PLANES * d),
        v: Vec::with_capacity(n * NUM_PLANES * d),
        weights: Vec::with_capacity(n * NUM_PLANES * params.heads),
        z: Vec::with_capacity(n * d),
        input,
    };
    let mut out = Vec::with_capacity(n * params.out_channels());
    for p in per_point {
        cache.q.extend(p.q);
        cache.k.extend(p.k);
        cache.v.extend(p.v);
        cache.weights.extend(p.a);
        cache.z.extend(p.z);
        out.extend(p.out);
    }
    if let Some(i) = out.iter().position(|x| !x.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite attention output for point {}",
            i / params.out_channels()
        )));
    }
    Ok((out, cache))
}

#[derive(Debug, Clone)]
pub struct AttentionGrads {
    pub point_features: Vec<f64>,
    pub gathered: Vec<f64>,
    pub offsets: Vec<[f64; 3]>,
    pub params: AttentionParams,
}

struct ShardGrads {
    params: AttentionParams,
    point_features: Vec<f64>,
    gathered: Vec<f64>,
    offsets: Vec<[f64; 3]>,
}

fn backward_shard(cache: &AttentionCache, params: &AttentionParams, dout: &[f64], range: std::ops::Range<usize>) -> ShardGrads {
    let (cp, cf, d, h, dk, co) = (
        params.point_channels(),
        params.feature_channels(),
        params.model_dim(),
        params.heads,
        params.head_dim,
        params.out_channels(),
    );
    let scale = 1.0 / (dk as f64).sqrt();
    let input = &cache.input;
    let count = range.len();
    let mut g = ShardGrads {
        params: params.zeros_like(),
        point_features: vec![0.0; count * cp],
        gathered: vec![0.0; count * NUM_PLANES * cf],
        offsets: vec![[0.0; 3]; count * NUM_PLANES],
    };
    let mut dz = vec![0.0; d];
    let mut dq = vec![0.0; d];
    let mut dk_m = vec![0.0; d];
    let mut dv_m = vec![0.0; d];
    let mut ds = vec![0.0; NUM_PLANES * h];
    for (local, n) in range.enumerate() {
        let go = &dout[n * co..(n + 1) * co];
        let z = &cache.z[n * d..(n + 1) * d];
        let q = &cache.q[n * d..(n + 1) * d];
        let f = &input.point_features[n * cp..(n + 1) * cp];
        let dfp = &mut g.point_features[local * cp..(local + 1) * cp];
        outer_acc(z, go, g.params.w_out.data_mut());
        dz.iter_mut().for_each(|x| *x = 0.0);
        mat_vec_acc(params.w_out.data(), go, &mut dz);
        if params.residual {
            for (a, b) in dfp.iter_mut().zip(go) {
                *a += b;
            }
        }

        let valid = &input.valid[n * NUM_PLANES..(n + 1) * NUM_PLANES];
        let a = &cache.weights[n * NUM_PLANES * h..(n + 1) * NUM_PLANES * h];
        let k = &cache.k[n * NUM_PLANES * d..(n + 1) * NUM_PLANES * d];
        let v = &cache.v[n * NUM_PLANES * d..(n + 1) * NUM_PLANES * d];

        // Score gradients per head: ds_m = a_m (da_m - sum_j a_j da_j), da_m = dz_h . v_{m,h}.
        ds.iter_mut().for_each(|x| *x = 0.0);
        for head in 0..h {
            let r = head * dk..(head + 1) * dk;
            let mut da = [0.0; NUM_PLANES];
            let mut mean = 0.0;
            for m in (0..NUM_PLANES).filter(|&m| valid[m]) {
                da[m] = dz[r.clone()].iter().zip(&v[m * d + r.start..m * d + r.end]).map(|(x, y)| x * y).sum();
                mean += a[m * h + head] * da[m];
            }
            for m in (0..NUM_PLANES).filter(|&m| valid[m]) {
                ds[m * h + head] = a[m * h + head] * (da[m] - mean);
            }
        }

        dq.iter_mut().for_each(|x| *x = 0.0);
        for m in (0..NUM_PLANES).filter(|&m| valid[m]) {
            let slot = n * NUM_PLANES + m;
            for head in 0..h {
                let r = head * dk..(head + 1) * dk;
                let s = ds[m * h + head] * scale;
                let w = a[m * h + head];
                for j in r {
                    dq[j] += s * k[m * d + j];
                    dk_m[j] = s * q[j];
                    dv_m[j] = w * dz[j];
                }
            }
            let gm = &input.gathered[slot * cf..(slot + 1) * cf];
            outer_acc(gm, &dk_m, g.params.w_k.data_mut());
            outer_acc(gm, &dv_m, g.params.w_v.data_mut());
            outer_acc(&input.offsets[slot], &dk_m, g.params.w_pos.data_mut());
            let lslot = local * NUM_PLANES + m;
            let dg = &mut g.gathered[lslot * cf..(lslot + 1) * cf];
            mat_vec_acc(params.w_k.data(), &dk_m, dg);
            mat_vec_acc(params.w_v.data(), &dv_m, dg);
            mat_vec_acc(params.w_pos.data(), &dk_m, &mut g.offsets[lslot]);
        }
        outer_acc(f, &dq, g.params.w_q.data_mut());
        mat_vec_acc(params.w_q.data(), &dq, dfp);
    }
    g
}

/// Exact gradients of the forward map for upstream gradient `dout` (`N x C_out`).
///
/// Points are processed in fixed shards whose parameter gradients are summed
/// in shard order, so the result does not depend on thread scheduling.
pub fn cross_attention_backward(cache: &AttentionCache, params: &AttentionParams, dout: &[f64]) -> Result<AttentionGrads> {
    let n = cache.input.num_points;
    if dout.len() != n * params.out_channels() {
        return Err(Error::shape("attention upstream gradient", n * params.out_channels(), dout.len()));
    }
    let shards: Vec<ShardGrads> = (0..n.div_ceil(SHARD))
        .into_par_iter()
        .map(|s| backward_shard(cache, params, dout, s * SHARD..((s + 1) * SHARD).min(n)))
        .collect();
    let mut out = AttentionGrads {
        point_features: Vec::with_capacity(n * params.point_channels()),
        gathered: Vec::with_capacity(cache.input.gathered.len()),
        offsets: Vec::with_capacity(n * NUM_PLANES),
        params: params.zeros_like(),
    };
    for s in shards {
        out.params.accumulate(&s.params);
        out.point_features.extend(s.point_features);
        out.gathered.extend(s.gathered);
        out.offsets.extend(s.offsets);
    }
    Ok(out)
}
