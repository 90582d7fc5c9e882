//! The full network: six-plane projection, shared plane encoder, point
//! branch, cross-attention fusion and heads, with an exact backward pass.

mod train;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::association::{
    cross_attention_backward, cross_attention_forward, gather_backward, gather_plane_features, point_encoder_backward,
    point_encoder_forward, AttentionCache, AttentionConfig, AttentionInput, AttentionParams, Gathered, Neighborhoods,
    PointEncoderCache, PointEncoderConfig, PointEncoderParams,
};
use crate::cloud::{norm, Label, PointCloud};
use crate::encoder::{encode_with_trace, encoder_backward, EncoderConfig, EncoderParams, EncoderTrace, FeatureMap};
use crate::error::{Error, Result};
use crate::heads::{aux_head_forward, composite_loss, point_head_forward, pool_labels, HeadParams, LossReport};
use crate::projection::{
    gather_offsets, hexplane_project, rasterize_labels, HexPlaneSet, LabelImage, PlaneKind, PlaneSpec, RasterRecipe,
    SensorConfig, NUM_PLANES,
};
use crate::tensor::{prefixed, prefixed_mut, ParamSet, Tensor};

pub use train::{train_toy, LogRecord, TrainConfig, TrainOutcome};

/// Grid sizes and the range-view sensor. Orthographic extents are fitted to
/// each cloud with `margin` to spare.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanesConfig {
    /// `[rows, cols]` of the top view.
    pub top: [usize; 2],
    /// `[rows, cols]` of the four side views.
    pub side: [usize; 2],
    /// `[rows, cols]` of the range view.
    pub range: [usize; 2],
    pub phi_up_deg: f64,
    pub phi_down_deg: f64,
    pub sensor_origin: [f64; 3],
    pub margin: f64,
}

impl Default for PlanesConfig {
    fn default() -> Self {
        PlanesConfig {
            top: [256, 256],
            side: [64, 512],
            range: [64, 512],
            phi_up_deg: 3.0,
            phi_down_deg: 25.0,
            sensor_origin: [0.0; 3],
            margin: 0.05,
        }
    }
}

impl PlanesConfig {
    pub fn sensor(&self) -> Result<SensorConfig> {
        Ok(SensorConfig::new(
            self.phi_up_deg.to_radians(),
            self.phi_down_deg.to_radians(),
            self.range[0],
            self.range[1],
        )?
        .with_origin(self.sensor_origin))
    }

    pub fn validate(&self) -> Result<()> {
        if self.top.contains(&0) || self.side.contains(&0) {
            return Err(Error::Config("plane sizes must be positive".into()));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::Config("planes.margin must be positive".into()));
        }
        self.sensor().map_err(|e| Error::Config(format!("planes: {e}")))?;
        Ok(())
    }

    pub fn specs(&self, cloud: &PointCloud) -> Result<Vec<PlaneSpec>> {
        let mut specs = Vec::with_capacity(NUM_PLANES);
        for kind in PlaneKind::ALL {
            let spec = match kind {
                PlaneKind::Cylindrical => PlaneSpec::cylindrical(self.sensor()?)?,
                PlaneKind::XyTop => PlaneSpec::fit_orthographic(kind, self.top[0], self.top[1], cloud, self.margin)?,
                _ => PlaneSpec::fit_orthographic(kind, self.side[0], self.side[1], cloud, self.margin)?,
            };
            specs.push(spec);
        }
        Ok(specs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub classes: usize,
    #[serde(default)]
    pub planes: PlanesConfig,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub attention: AttentionConfig,
    #[serde(default)]
    pub point_encoder: PointEncoderConfig,
    /// Feed point-branch features straight to the head.
    #[serde(default)]
    pub bypass_ham: bool,
}

impl ModelConfig {
    pub fn new(classes: usize) -> Self {
        ModelConfig {
            classes,
            planes: PlanesConfig::default(),
            encoder: EncoderConfig::default(),
            attention: AttentionConfig::default(),
            point_encoder: PointEncoderConfig::default(),
            bypass_ham: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config("classes must be >= 2".into()));
        }
        self.planes.validate()?;
        self.encoder.validate()?;
        if self.point_encoder.neighbors == 0 || self.point_encoder.hidden == 0 || self.point_encoder.channels == 0 {
            return Err(Error::Config("point_encoder sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Network input channels per point (`x y z depth`); extra file columns are
/// not consumed.
pub const POINT_INPUTS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub encoder: EncoderParams,
    pub point: PointEncoderParams,
    pub attention: AttentionParams,
    pub heads: HeadParams,
}

impl ModelParams {
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let recipe = RasterRecipe::default();
        let encoder = EncoderParams::init(recipe.depth(), &config.encoder, seed)?;
        let point = PointEncoderParams::init(POINT_INPUTS, &config.point_encoder, seed.wrapping_add(1))?;
        let cf = encoder.fused_channels();
        let attention = AttentionParams::init(point.out_channels(), cf, &config.attention, seed.wrapping_add(2))?;
        let head_inputs = if config.bypass_ham {
            point.out_channels()
        } else {
            attention.out_channels()
        };
        let heads = HeadParams::init(head_inputs, cf, config.classes, seed.wrapping_add(3))?;
        Ok(ModelParams {
            encoder,
            point,
            attention,
            heads,
        })
    }
}

impl ParamSet for ModelParams {
    fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = prefixed("encoder", self.encoder.tensors());
        out.extend(prefixed("point", self.point.tensors()));
        out.extend(prefixed("attention", self.attention.tensors()));
        out.extend(prefixed("heads", self.heads.tensors()));
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = prefixed_mut("encoder", self.encoder.tensors_mut());
        out.extend(prefixed_mut("point", self.point.tensors_mut()));
        out.extend(prefixed_mut("attention", self.attention.tensors_mut()));
        out.extend(prefixed_mut("heads", self.heads.tensors_mut()));
        out
    }
}

/// Everything derived from the cloud alone, independent of parameters.
#[derive(Debug, Clone)]
pub struct Batch {
    pub cloud: PointCloud,
    pub hex: HexPlaneSet,
    pub offsets: Vec<[f64; 3]>,
    pub neighborhoods: Neighborhoods,
    pub point_input: Vec<f64>,
    /// Feature-grid label images, `None` for unlabeled clouds.
    pub aux_labels: Option<Vec<LabelImage>>,
}

impl Batch {
    pub fn new(cloud: PointCloud, config: &ModelConfig) -> Result<Self> {
        if cloud.is_empty() {
            return Err(Error::invalid("cloud is empty"));
        }
        let specs = config.planes.specs(&cloud)?;
        let hex = hexplane_project(&cloud, &specs, &RasterRecipe::default())?;
        let offsets = gather_offsets(&cloud, &hex)?.offsets;
        let neighborhoods = Neighborhoods::build(cloud.positions(), config.point_encoder.neighbors.min(cloud.len()))?;
        let point_input = cloud
            .positions()
            .iter()
            .flat_map(|p| [p[0], p[1], p[2], norm(*p)])
            .collect();
        let aux_labels = match cloud.labels() {
            Some(_) => {
                cloud.check_labels(config.classes as u32)?;
                let images = rasterize_labels(&cloud, &hex)?;
                Some(images.iter().map(|im| pool_labels(im, config.classes)).collect())
            }
            None => None,
        };
        Ok(Batch {
            cloud,
            hex,
            offsets,
            neighborhoods,
            point_input,
            aux_labels,
        })
    }

    pub fn labels(&self) -> Option<&[Label]> {
        self.cloud.labels()
    }
}

/// Forward intermediates.
pub struct Forward {
    traces: Vec<EncoderTrace>,
    gathered: Option<Gathered>,
    point_cache: PointEncoderCache,
    attention: Option<AttentionCache>,
    /// Input to the point head.
    head_input: Vec<f64>,
    pub point_logits: Vec<f64>,
    pub aux_logits: Vec<Vec<f64>>,
}

impl Forward {
    pub(crate) fn kink_distance(&self) -> f64 {
        self.traces
            .iter()
            .map(EncoderTrace::kink_distance)
            .fold(self.point_cache.kink_distance(), f64::min)
    }

    pub fn fused_maps(&self) -> Vec<&FeatureMap> {
        self.traces.iter().map(|t| &t.fused).collect()
    }
}

/// Runs the network. With `bypass_ham` and `with_planes == false` the plane
/// branch is skipped entirely and aux logits are empty.
pub fn forward(params: &ModelParams, batch: &Batch, bypass_ham: bool, with_planes: bool) -> Result<Forward> {
    let (pf, point_cache) = point_encoder_forward(&batch.point_input, &batch.neighborhoods, &params.point)?;
    let need_planes = with_planes || !bypass_ham;
    let traces = if need_planes {
        batch
            .hex
            .planes
            .par_iter()
            .map(|p| encode_with_trace(&p.raster, &params.encoder))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let (head_input, gathered, attention) = if bypass_ham {
        (pf, None, None)
    } else {
        let fused: Vec<FeatureMap> = traces.iter().map(|t| t.fused.clone()).collect();
        let gathered = gather_plane_features(&fused, &batch.hex)?;
        let input = AttentionInput {
            num_points: batch.cloud.len(),
            point_features: pf,
            gathered: gathered.data.clone(),
            offsets: batch.offsets.clone(),
            valid: gathered.valid.clone(),
        };
        let (out, cache) = cross_attention_forward(input, &params.attention)?;
        (out, Some(gathered), Some(cache))
    };
    let point_logits = point_head_forward(&head_input, &params.heads)?;
    let aux_logits = if with_planes {
        traces
            .iter()
            .enumerate()
            .map(|(m, t)| aux_head_forward(&t.fused, m, &params.heads))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    Ok(Forward {
        traces,
        gathered,
        point_cache,
        attention,
        head_input,
        point_logits,
        aux_logits,
    })
}

/// Loss and exact parameter gradients for one labeled batch.
pub fn loss_and_grads(
    params: &ModelParams,
    batch: &Batch,
    aux_weight: f64,
    bypass_ham: bool,
) -> Result<(LossReport, ModelParams, Forward)> {
    let labels = batch.labels().ok_or_else(|| Error::invalid("training cloud has no labels"))?;
    let aux_labels = batch.aux_labels.as_ref().expect("labeled batch has aux labels");
    let with_planes = aux_weight > 0.0;
    let fwd = forward(params, batch, bypass_ham, with_planes)?;
    let classes = params.heads.classes();
    let empty;
    let aux_logits: &[Vec<f64>] = if with_planes {
        &fwd.aux_logits
    } else {
        empty = aux_labels.iter().map(|im| vec![0.0; im.labels.len() * classes]).collect::<Vec<_>>();
        &empty
    };
    let (report, lg) = composite_loss(&fwd.point_logits, labels, aux_logits, aux_labels, classes, aux_weight)?;

    let mut grads = params.zeros_like();
    let dhead = params.heads.point.backward(&fwd.head_input, &lg.point, &mut grads.heads.point);
    let mut dfused: Vec<FeatureMap> = fwd
        .traces
        .iter()
        .map(|t| FeatureMap::zeros(t.fused.rows, t.fused.cols, t.fused.channels))
        .collect();
    let dpoint = match (&fwd.attention, &fwd.gathered) {
        (Some(cache), Some(gathered)) => {
            let ag = cross_attention_backward(cache, &params.attention, &dhead)?;
            grads.attention = ag.params;
            for (d, g) in dfused.iter_mut().zip(gather_backward(gathered, &ag.gathered)?) {
                d.data.iter_mut().zip(&g.data).for_each(|(a, b)| *a += b);
            }
            ag.point_features
        }
        _ => dhead,
    };
    grads.point = point_encoder_backward(&fwd.point_cache, &params.point, &dpoint)?;
    if with_planes {
        for (m, (t, d)) in fwd.traces.iter().zip(dfused.iter_mut()).enumerate() {
            let dx = params.heads.aux[m].backward(&t.fused.data, &lg.aux[m], &mut grads.heads.aux[m]);
            d.data.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
        }
    }
    if !fwd.traces.is_empty() {
        let zero = grads.encoder.zeros_like();
        let per_plane = fwd
            .traces
            .par_iter()
            .zip(dfused.par_iter())
            .map(|(t, d)| {
                let mut g = zero.clone();
                encoder_backward(t, &params.encoder, d, &mut g)?;
                Ok(g)
            })
            .collect::<Result<Vec<_>>>()?;
        for g in &per_plane {
            grads.encoder.accumulate(g);
        }
    }
    Ok((report, grads, fwd))
}

/// `N x K` point logits.
pub fn predict(params: &ModelParams, batch: &Batch, bypass_ham: bool) -> Result<Vec<f64>> {
    Ok(forward(params, batch, bypass_ham, false)?.point_logits)
}
