//! Small strided convolutional encoder applied to every plane raster, and
//! the fusion of its three pyramid levels onto the stride-4 grid.

mod conv;
mod resample;

pub(crate) use resample::bilinear_taps;
pub use resample::resample;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projection::Raster;
use crate::tensor::{mat_vec_acc, outer_acc, prefixed, prefixed_mut, vec_mat_acc, ParamSet, Tensor};

pub const NUM_STAGES: usize = 3;

/// A `rows x cols x channels` map, channel-minor.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(rows: usize, cols: usize, channels: usize) -> Self {
        FeatureMap {
            rows,
            cols,
            channels,
            data: vec![0.0; rows * cols * channels],
        }
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let o = (row * self.cols + col) * self.channels;
        &self.data[o..o + self.channels]
    }

    pub fn pixel_mut(&mut self, row: usize, col: usize) -> &mut [f64] {
        let o = (row * self.cols + col) * self.channels;
        &mut self.data[o..o + self.channels]
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.rows, self.cols, self.channels)
    }

    pub fn same_shape(&self, other: &FeatureMap) -> bool {
        self.shape() == other.shape()
    }

    fn add_assign(&mut self, other: &FeatureMap) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

impl From<&Raster> for FeatureMap {
    fn from(r: &Raster) -> Self {
        FeatureMap {
            rows: r.rows,
            cols: r.cols,
            channels: r.channels,
            data: r.data.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub widths: [usize; NUM_STAGES],
    pub fused_channels: usize,
    pub leaky_slope: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            widths: [16, 32, 64],
            fused_channels: 64,
            leaky_slope: 0.1,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.contains(&0) || self.fused_channels == 0 {
            return Err(Error::Config("encoder widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.leaky_slope) {
            return Err(Error::Config("encoder.leaky_slope must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Shared encoder weights: three conv stages and the 1x1 fusion mix.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// Per stage: `[3, 3, C_in, C_out]`.
    pub conv_weight: Vec<Tensor>,
    pub conv_bias: Vec<Tensor>,
    /// `[sum(widths), C_f]`.
    pub mix_weight: Tensor,
    pub mix_bias: Tensor,
    pub leaky_slope: f64,
}

impl EncoderParams {
    /// Fan-in-scaled uniform weights, zero biases.
    pub fn init(in_channels: usize, config: &EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if in_channels == 0 {
            return Err(Error::Config("raster has no channels".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut conv_weight = Vec::new();
        let mut conv_bias = Vec::new();
        let mut c_in = in_channels;
        for &w in &config.widths {
            conv_weight.push(Tensor::fan_in_uniform(&[3, 3, c_in, w], 9 * c_in, &mut rng));
            conv_bias.push(Tensor::zeros(&[w]));
            c_in = w;
        }
        let cat: usize = config.widths.iter().sum();
        Ok(EncoderParams {
            conv_weight,
            conv_bias,
            mix_weight: Tensor::fan_in_uniform(&[cat, config.fused_channels], cat, &mut rng),
            mix_bias: Tensor::zeros(&[config.fused_channels]),
            leaky_slope: config.leaky_slope,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.conv_weight[0].shape()[2]
    }

    pub fn fused_channels(&self) -> usize {
        self.mix_bias.len()
    }
}

impl ParamSet for EncoderParams {
    fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (s, (w, b)) in self.conv_weight.iter().zip(&self.conv_bias).enumerate() {
            out.extend(prefixed(&format!("stage{s}"), vec![("weight".into(), w), ("bias".into(), b)]));
        }
        out.extend(prefixed(
            "mix",
            vec![("weight".into(), &self.mix_weight), ("bias".into(), &self.mix_bias)],
        ));
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for (s, (w, b)) in self.conv_weight.iter_mut().zip(self.conv_bias.iter_mut()).enumerate() {
            out.extend(prefixed_mut(&format!("stage{s}"), vec![("weight".into(), w), ("bias".into(), b)]));
        }
        out.extend(prefixed_mut(
            "mix",
            vec![("weight".into(), &mut self.mix_weight), ("bias".into(), &mut self.mix_bias)],
        ));
        out
    }
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

/// Intermediates of one plane's forward pass.
#[derive(Debug, Clone)]
pub struct EncoderTrace {
    input: FeatureMap,
    pre: Vec<FeatureMap>,
    pub pyramid: Vec<FeatureMap>,
    concat: FeatureMap,
    pub fused: FeatureMap,
}

impl EncoderTrace {
    /// Smallest pre-activation magnitude, i.e. the distance to the nearest kink.
    pub(crate) fn kink_distance(&self) -> f64 {
        self.pre.iter().flat_map(|f| f.data.iter()).fold(f64::INFINITY, |a, b| a.min(b.abs()))
    }
}

/// Three feature maps at strides 2, 4 and 8.
pub fn encode_plane(raster: &Raster, params: &EncoderParams) -> Result<Vec<FeatureMap>> {
    Ok(run_stages(&FeatureMap::from(raster), params)?.1)
}

fn run_stages(input: &FeatureMap, params: &EncoderParams) -> Result<(Vec<FeatureMap>, Vec<FeatureMap>)> {
    if input.channels != params.in_channels() {
        return Err(Error::shape("raster channels", params.in_channels(), input.channels));
    }
    if input.rows == 0 || input.cols == 0 {
        return Err(Error::invalid("empty raster"));
    }
    let mut pre = Vec::with_capacity(NUM_STAGES);
    let mut post: Vec<FeatureMap> = Vec::with_capacity(NUM_STAGES);
    for s in 0..NUM_STAGES {
        let x = if s == 0 { input } else { &post[s - 1] };
        let z = conv::conv_forward(x, params.conv_weight[s].data(), params.conv_bias[s].data());
        let mut a = z.clone();
        a.data.iter_mut().for_each(|v| *v = leaky(*v, params.leaky_slope));
        pre.push(z);
        post.push(a);
    }
    Ok((pre, post))
}

fn check_pyramid(pyramid: &[FeatureMap], params: &EncoderParams) -> Result<()> {
    if pyramid.len() != NUM_STAGES {
        return Err(Error::shape("pyramid levels", NUM_STAGES, pyramid.len()));
    }
    for s in 1..NUM_STAGES {
        let (a, b) = (&pyramid[s - 1], &pyramid[s]);
        if (conv::out_dim(a.rows), conv::out_dim(a.cols)) != (b.rows, b.cols) {
            return Err(Error::invalid(format!(
                "pyramid level {s} ({}x{}) does not descend from level {} ({}x{})",
                b.rows,
                b.cols,
                s - 1,
                a.rows,
                a.cols
            )));
        }
    }
    let cat: usize = pyramid.iter().map(|m| m.channels).sum();
    if cat != params.mix_weight.shape()[0] {
        return Err(Error::shape("pyramid channels", params.mix_weight.shape()[0], cat));
    }
    Ok(())
}

fn concat_on_level1(pyramid: &[FeatureMap]) -> FeatureMap {
    let (rows, cols) = (pyramid[1].rows, pyramid[1].cols);
    let levels: Vec<FeatureMap> = pyramid
        .iter()
        .enumerate()
        .map(|(s, m)| if s == 1 { m.clone() } else { resample(m, rows, cols) })
        .collect();
    let cat: usize = levels.iter().map(|m| m.channels).sum();
    let mut out = FeatureMap::zeros(rows, cols, cat);
    for y in 0..rows {
        for x in 0..cols {
            let dst = out.pixel_mut(y, x);
            let mut o = 0;
            for m in &levels {
                dst[o..o + m.channels].copy_from_slice(m.pixel(y, x));
                o += m.channels;
            }
        }
    }
    out
}

fn mix(concat: &FeatureMap, params: &EncoderParams) -> FeatureMap {
    let cf = params.fused_channels();
    let mut out = FeatureMap::zeros(concat.rows, concat.cols, cf);
    for (src, dst) in concat.data.chunks_exact(concat.channels).zip(out.data.chunks_exact_mut(cf)) {
        dst.copy_from_slice(params.mix_bias.data());
        vec_mat_acc(src, params.mix_weight.data(), cf, dst);
    }
    out
}

/// Resample the stride-2 and stride-8 levels onto the stride-4 grid,
/// concatenate channels and mix them linearly to `C_f` channels.
pub fn fuse_scales(pyramid: &[FeatureMap], params: &EncoderParams) -> Result<FeatureMap> {
    check_pyramid(pyramid, params)?;
    Ok(mix(&concat_on_level1(pyramid), params))
}

/// Forward pass keeping what [`encoder_backward`] needs.
pub fn encode_with_trace(raster: &Raster, params: &EncoderParams) -> Result<EncoderTrace> {
    let input = FeatureMap::from(raster);
    let (pre, pyramid) = run_stages(&input, params)?;
    check_pyramid(&pyramid, params)?;
    let concat = concat_on_level1(&pyramid);
    let fused = mix(&concat, params);
    Ok(EncoderTrace {
        input,
        pre,
        pyramid,
        concat,
        fused,
    })
}

/// Accumulate parameter gradients for upstream gradient `dfused`.
pub fn encoder_backward(trace: &EncoderTrace, params: &EncoderParams, dfused: &FeatureMap, grads: &mut EncoderParams) -> Result<()> {
    if !dfused.same_shape(&trace.fused) {
        return Err(Error::shape(
            "fused gradient",
            format!("{:?}", trace.fused.shape()),
            format!("{:?}", dfused.shape()),
        ));
    }
    let cat = trace.concat.channels;
    let cf = params.fused_channels();
    let mut dconcat = FeatureMap::zeros(trace.concat.rows, trace.concat.cols, cat);
    for ((g, x), dx) in dfused
        .data
        .chunks_exact(cf)
        .zip(trace.concat.data.chunks_exact(cat))
        .zip(dconcat.data.chunks_exact_mut(cat))
    {
        for (b, gi) in grads.mix_bias.data_mut().iter_mut().zip(g) {
            *b += gi;
        }
        outer_acc(x, g, grads.mix_weight.data_mut());
        mat_vec_acc(params.mix_weight.data(), g, dx);
    }

    // Split the concatenated gradient back into per-level maps.
    let (rows, cols) = (trace.concat.rows, trace.concat.cols);
    let mut dlevel: Vec<FeatureMap> = Vec::with_capacity(NUM_STAGES);
    let mut o = 0;
    for (s, m) in trace.pyramid.iter().enumerate() {
        let mut on_grid = FeatureMap::zeros(rows, cols, m.channels);
        for y in 0..rows {
            for x in 0..cols {
                on_grid.pixel_mut(y, x).copy_from_slice(&dconcat.pixel(y, x)[o..o + m.channels]);
            }
        }
        o += m.channels;
        dlevel.push(if s == 1 {
            on_grid
        } else {
            resample::resample_backward(&on_grid, m.rows, m.cols)
        });
    }

    // Walk the stages backwards; deeper stages feed gradient into shallower ones.
    let mut carry: Option<FeatureMap> = None;
    for s in (0..NUM_STAGES).rev() {
        let mut dpost = dlevel[s].clone();
        if let Some(c) = carry.take() {
            dpost.add_assign(&c);
        }
        for (d, z) in dpost.data.iter_mut().zip(&trace.pre[s].data) {
            if *z <= 0.0 {
                *d *= params.leaky_slope;
            }
        }
        let input = if s == 0 { &trace.input } else { &trace.pyramid[s - 1] };
        let (dw, db) = (&mut grads.conv_weight[s], &mut grads.conv_bias[s]);
        carry = conv::conv_backward(input, params.conv_weight[s].data(), &dpost, dw.data_mut(), db.data_mut(), s > 0);
    }
    Ok(())
}
