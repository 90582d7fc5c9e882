//! Central finite-difference verification of every backward pass.
//!
//! Each component builds a small random instance from a seed, reduces its
//! output to a scalar with a fixed random projection and compares analytic
//! gradients against `(f(x + eps) - f(x - eps)) / 2 eps` entry by entry.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::association::{
    cross_attention_backward, cross_attention_forward, gather_backward, gather_plane_features, point_encoder_backward,
    point_encoder_forward, AttentionConfig, AttentionInput, AttentionParams, Neighborhoods, PointEncoderConfig,
    PointEncoderParams,
};
use crate::cloud::{Label, PointCloud};
use crate::encoder::{encode_with_trace, encoder_backward, EncoderConfig, EncoderParams, FeatureMap};
use crate::error::{Error, Result};
use crate::heads::{aux_head_forward, composite_loss, point_head_forward, HeadParams, Linear};
use crate::model::{loss_and_grads, Batch, ModelConfig, ModelParams, PlanesConfig};
use crate::projection::{hexplane_project, LabelImage, PlaneKind, PlaneSpec, Raster, RasterRecipe, NUM_PLANES};
use crate::tensor::{ParamSet, Tensor};

pub const EPS: f64 = 1e-5;
pub const COMPONENT_TOLERANCE: f64 = 1e-4;
pub const END_TO_END_TOLERANCE: f64 = 1e-3;
/// Instances with a leaky-ReLU pre-activation closer than this to zero are
/// redrawn: the derivative is undefined at the kink and a central difference
/// that straddles it is not a valid reference.
pub const KINK_MARGIN: f64 = 1e-3;
const MAX_DRAWS: usize = 100;
/// Denominator floor of the relative error.
pub const ERROR_FLOOR: f64 = 1e-6;

pub const COMPONENTS: &[&str] = &[
    "linear",
    "heads",
    "loss",
    "encoder",
    "gather",
    "attention",
    "point_encoder",
    "end_to_end",
    "mutation",
];

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ERROR_FLOOR)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupError {
    pub name: String,
    pub entries: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradReport {
    pub component: String,
    pub seed: u64,
    pub tolerance: f64,
    pub groups: Vec<GroupError>,
}

impl GradReport {
    pub fn max_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.max_rel_error < self.tolerance)
    }
}

/// Free tensors, for gradients with respect to inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Inputs(pub Vec<(String, Tensor)>);

impl Inputs {
    fn get(&self, i: usize) -> &[f64] {
        self.0[i].1.data()
    }
}

impl ParamSet for Inputs {
    fn tensors(&self) -> Vec<(String, &Tensor)> {
        self.0.iter().map(|(n, t)| (n.clone(), t)).collect()
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.0.iter_mut().map(|(n, t)| (n.clone(), t)).collect()
    }
}

/// Compare `analytic` against central differences of `f` around `at`, one
/// group per tensor.
pub fn compare<P: ParamSet + Clone>(
    at: &P,
    analytic: &P,
    prefix: &str,
    f: impl Fn(&P) -> Result<f64>,
) -> Result<Vec<GroupError>> {
    let mut probe = at.clone();
    let grads = analytic.tensors();
    let count = grads.len();
    let mut out = Vec::with_capacity(count);
    for (t, (name, g)) in grads.iter().enumerate().take(count) {
        let mut worst = 0.0f64;
        for j in 0..g.len() {
            let x0 = probe.tensors()[t].1.data()[j];
            set(&mut probe, t, j, x0 + EPS);
            let fp = f(&probe)?;
            set(&mut probe, t, j, x0 - EPS);
            let fm = f(&probe)?;
            set(&mut probe, t, j, x0);
            let numeric = (fp - fm) / (2.0 * EPS);
            worst = worst.max(relative_error(g.data()[j], numeric));
        }
        out.push(GroupError {
            name: format!("{prefix}{name}"),
            entries: g.len(),
            max_rel_error: worst,
        });
    }
    Ok(out)
}

fn set<P: ParamSet>(p: &mut P, t: usize, j: usize, v: f64) {
    p.tensors_mut()[t].1.data_mut()[j] = v;
}

fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, uniform(rng, n)).expect("shape matches")
}

/// Move every parameter off its initial value so biases are not exactly zero
/// (a zero pre-activation sits on the leaky-ReLU kink).
fn jitter<P: ParamSet>(p: &mut P, rng: &mut ChaCha8Rng) {
    for (_, t) in p.tensors_mut() {
        for v in t.data_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Run the check for `component` on the instance drawn from `seed`.
pub fn run(component: &str, seed: u64) -> Result<GradReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (groups, tolerance) = match component {
        "linear" => (check_linear(&mut rng, false)?, COMPONENT_TOLERANCE),
        "mutation" => (check_linear(&mut rng, true)?, COMPONENT_TOLERANCE),
        "heads" => (check_heads(&mut rng)?, COMPONENT_TOLERANCE),
        "loss" => (check_loss(&mut rng)?, COMPONENT_TOLERANCE),
        "encoder" => (check_encoder(&mut rng)?, COMPONENT_TOLERANCE),
        "gather" => (check_gather(&mut rng)?, COMPONENT_TOLERANCE),
        "attention" => (check_attention(&mut rng, seed % 2 == 1)?, COMPONENT_TOLERANCE),
        "point_encoder" => (check_point_encoder(&mut rng)?, COMPONENT_TOLERANCE),
        "end_to_end" => (check_end_to_end(&mut rng)?, END_TO_END_TOLERANCE),
        other => {
            return Err(Error::Config(format!(
                "unknown gradcheck component {other:?}; expected one of {}",
                COMPONENTS.join(", ")
            )))
        }
    };
    Ok(GradReport {
        component: component.to_string(),
        seed,
        tolerance,
        groups,
    })
}

fn check_linear(rng: &mut ChaCha8Rng, corrupt: bool) -> Result<Vec<GroupError>> {
    let (rows, ci, k) = (7, 5, 3);
    let mut lin = Linear::init(ci, k, rng);
    jitter(&mut lin, rng);
    let x = Inputs(vec![("x".into(), tensor(rng, &[rows, ci]))]);
    let r = uniform(rng, rows * k);
    let mut grads = lin.zeros_like();
    let dx = lin.backward(x.get(0), &r, &mut grads);
    if corrupt {
        grads.weight.data_mut().iter_mut().for_each(|g| *g *= 1.01);
    }
    let mut out = compare(&lin, &grads, "", |p| Ok(dot(&p.forward(x.get(0))?, &r)))?;
    let dx = Inputs(vec![("x".into(), Tensor::from_vec(&[rows, ci], dx)?)]);
    out.extend(compare(&x, &dx, "input.", |xi| Ok(dot(&lin.forward(xi.get(0))?, &r)))?);
    Ok(out)
}

fn check_heads(rng: &mut ChaCha8Rng) -> Result<Vec<GroupError>> {
    let (n, cp, cf, k) = (6, 4, 3, 3);
    let mut heads = HeadParams::init(cp, cf, k, rng.random())?;
    jitter(&mut heads, rng);
    let pf = uniform(rng, n * cp);
    let maps: Vec<FeatureMap> = (0..NUM_PLANES)
        .map(|m| FeatureMap {
            rows: 2,
            cols: 1 + m % 3,
            channels: cf,
            data: uniform(rng, 2 * (1 + m % 3) * cf),
        })
        .collect();
    let rp = uniform(rng, n * k);
    let ra: Vec<Vec<f64>> = maps.iter().map(|m| uniform(rng, m.rows * m.cols * k)).collect();
    let f = |h: &HeadParams| -> Result<f64> {
        let mut s = dot(&point_head_forward(&pf, h)?, &rp);
        for (m, map) in maps.iter().enumerate() {
            s += dot(&aux_head_forward(map, m, h)?, &ra[m]);
        }
        Ok(s)
    };
    let mut grads = heads.zeros_like();
    heads.point.backward(&pf, &rp, &mut grads.point);
    for (m, map) in maps.iter().enumerate() {
        heads.aux[m].backward(&map.data, &ra[m], &mut grads.aux[m]);
    }
    compare(&heads, &grads, "", f)
}

fn random_labels(rng: &mut ChaCha8Rng, n: usize, k: usize, ignore: f64) -> Vec<Label> {
    (0..n)
        .map(|_| (!rng.random_bool(ignore)).then(|| rng.random_range(0..k as u32)))
        .collect()
}

fn check_loss(rng: &mut ChaCha8Rng) -> Result<Vec<GroupError>> {
    let (n, k, lambda) = (8, 4, 0.4);
    let mut labels = random_labels(rng, n, k, 0.25);
    labels[0] = Some(1);
    let images: Vec<LabelImage> = (0..NUM_PLANES)
        .map(|m| {
            let cells = 3 + m;
            LabelImage {
                rows: 1,
                cols: cells,
                labels: random_labels(rng, cells, k, 0.3),
            }
        })
        .collect();
    let mut tensors = vec![("point_logits".to_string(), tensor(rng, &[n, k]))];
    for (m, im) in images.iter().enumerate() {
        tensors.push((format!("aux_logits.{}", PlaneKind::ALL[m].name()), tensor(rng, &[im.cols, k])));
    }
    let x = Inputs(tensors);
    let eval = |x: &Inputs| {
        let aux: Vec<Vec<f64>> = (1..=NUM_PLANES).map(|i| x.get(i).to_vec()).collect();
        composite_loss(x.get(0), &labels, &aux, &images, k, lambda)
    };
    let (_, g) = eval(&x)?;
    let mut gt = vec![("point_logits".to_string(), Tensor::from_vec(&[n, k], g.point)?)];
    for (m, (ga, im)) in g.aux.into_iter().zip(&images).enumerate() {
        gt.push((format!("aux_logits.{}", PlaneKind::ALL[m].name()), Tensor::from_vec(&[im.cols, k], ga)?));
    }
    compare(&x, &Inputs(gt), "input.", |x| Ok(eval(x)?.0.total))
}

fn off_kink<T>(mut draw: impl FnMut() -> Result<(T, f64)>) -> Result<T> {
    for _ in 0..MAX_DRAWS {
        let (instance, distance) = draw()?;
        if distance >= KINK_MARGIN {
            return Ok(instance);
        }
    }
    Err(Error::Numerical(format!("no instance {KINK_MARGIN} away from a kink in {MAX_DRAWS} draws")))
}

fn check_encoder(rng: &mut ChaCha8Rng) -> Result<Vec<GroupError>> {
    let cfg = EncoderConfig {
        widths: [3, 4, 5],
        fused_channels: 4,
        leaky_slope: 0.1,
    };
    let (raster, params, trace) = off_kink(|| {
        let (rows, cols, d) = (rng.random_range(5..12), rng.random_range(5..12), 3);
        let raster = Raster {
            rows,
            cols,
            channels: d,
            data: uniform(rng, rows * cols * d),
        };
        let mut params = EncoderParams::init(d, &cfg, rng.random())?;
        jitter(&mut params, rng);
        let trace = encode_with_trace(&raster, &params)?;
        let dist = trace.kink_distance();
        Ok(((raster, params, trace), dist))
    })?;
    let r = FeatureMap {
        data: uniform(rng, trace.fused.data.len()),
        ..trace.fused.clone()
    };
    let mut grads = params.zeros_like();
    encoder_backward(&trace, &params, &r, &mut grads)?;
    compare(&params, &grads, "", |p| Ok(dot(&encode_with_trace(&raster, p)?.fused.data, &r.data)))
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize, classes: usize) -> Result<PointCloud> {
    let positions: Vec<[f64; 3]> = (0..n)
        .map(|_| {
            [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-0.5..0.5),
            ]
        })
        .collect();
    let labels = (0..n).map(|_| Some(rng.random_range(0..classes as u32))).collect();
    PointCloud::from_positions(positions)?.with_labels(labels)
}

fn micro_planes() -> PlanesConfig {
    PlanesConfig {
        top: [8, 8],
        side: [8, 8],
        range: [8, 8],
        phi_up_deg: 40.0,
        phi_down_deg: 40.0,
        sensor_origin: [0.0; 3],
        margin: 0.05,
    }
}

fn check_gather(rng: &mut ChaCha8Rng) -> Result<Vec<GroupError>> {
    let cloud = random_cloud(rng, 20, 2)?;
    let specs: Vec<PlaneSpec> = micro_planes().specs(&cloud)?;
    let hex = hexplane_project(&cloud, &specs, &RasterRecipe::default())?;
    let c = 3;
    let maps = Inputs(
        hex.planes
            .iter()
            .map(|p| {
                let (h, w) = (p.spec.rows().div_ceil(4), p.spec.cols().div_ceil(4));
                (format!("map.{}", p.spec.kind().name()), tensor(rng, &[h, w, c]))
            })
            .collect(),
    );
    let as_maps = |x: &Inputs| -> Vec<FeatureMap> {
        x.0.iter()
            .map(|(_, t)| FeatureMap {
                rows: t.shape()[0],
                cols: t.shape()[1],
                channels: c,
                data: t.data().to_vec(),
            })
            .collect()
    };
    let g = gather_plane_features(&as_maps(&maps), &hex)?;
    let r = uniform(rng, g.data.len());
    let back = gather_backward(&g, &r)?;
    let analytic = Inputs(
        maps.0
            .iter()
            .zip(back)
            .map(|((n, t), b)| Ok((n.clone(), Tensor::from_vec(t.shape(), b.data)?)))
            .collect::<Result<_>>()?,
    );
    compare(&maps, &analytic, "input.", |x| {
        Ok(dot(&gather_plane_features(&as_maps(x), &hex)?.data, &r))
    })
}

fn check_attention(rng: &mut ChaCha8Rng, residual: bool) -> Result<Vec<GroupError>> {
    let (n, cp, cf) = (9, 4, 5);
    let cfg = AttentionConfig {
        heads: 2,
        head_dim: 3,
        out_channels: 4,
        residual,
    };
    let mut params = AttentionParams::init(cp, cf, &cfg, rng.random())?;
    jitter(&mut params, rng);
    let mut valid: Vec<bool> = (0..n * NUM_PLANES).map(|_| rng.random_bool(0.7)).collect();
    for p in 0..n {
        valid[p * NUM_PLANES + rng.random_range(0..NUM_PLANES)] = true;
    }
    let mut gathered = uniform(rng, n * NUM_PLANES * cf);
    for (s, v) in valid.iter().enumerate() {
        if !v {
            gathered[s * cf..(s + 1) * cf].iter_mut().for_each(|x| *x = 0.0);
        }
    }
    let x = Inputs(vec![
        ("point_features".into(), tensor(rng, &[n, cp])),
        ("gathered".into(), Tensor::from_vec(&[n * NUM_PLANES, cf], gathered)?),
        ("offsets".into(), tensor(rng, &[n * NUM_PLANES, 3])),
    ]);
    let input = |x: &Inputs| AttentionInput {
        num_points: n,
        point_features: x.get(0).to_vec(),
        gathered: x.get(1).to_vec(),
        offsets: x.get(2).chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        valid: valid.clone(),
    };
    let (out, cache) = cross_attention_forward(input(&x), &params)?;
    let r = uniform(rng, out.len());
    let g = cross_attention_backward(&cache, &params, &r)?;
    let mut groups = compare(&params, &g.params, "", |p| Ok(dot(&cross_attention_forward(input(&x), p)?.0, &r)))?;
    let dx = Inputs(vec![
        ("point_features".into(), Tensor::from_vec(&[n, cp], g.point_features)?),
        ("gathered".into(), Tensor::from_vec(&[n * NUM_PLANES, cf], g.gathered)?),
        (
            "offsets".into(),
            Tensor::from_vec(&[n * NUM_PLANES, 3], g.offsets.iter().flatten().copied().collect())?,
        ),
    ]);
    groups.extend(compare(&x, &dx, "input.", |xi| {
        Ok(dot(&cross_attention_forward(input(xi), &params)?.0, &r))
    })?);
    Ok(groups)
}

fn check_point_encoder(rng: &mut ChaCha8Rng) -> Result<Vec<GroupError>> {
    let (n, ci) = (12, 4);
    let cfg = PointEncoderConfig {
        hidden: 5,
        channels: 6,
        neighbors: 3,
        leaky_slope: 0.1,
    };
    let (params, nb, input, out, cache) = off_kink(|| {
        let mut params = PointEncoderParams::init(ci, &cfg, rng.random())?;
        jitter(&mut params, rng);
        let cloud = random_cloud(rng, n, 2)?;
        let nb = Neighborhoods::build(cloud.positions(), cfg.neighbors)?;
        let input = uniform(rng, n * ci);
        let (out, cache) = point_encoder_forward(&input, &nb, &params)?;
        let dist = cache.kink_distance();
        Ok(((params, nb, input, out, cache), dist))
    })?;
    let r = uniform(rng, out.len());
    let grads = point_encoder_backward(&cache, &params, &r)?;
    compare(&params, &grads, "", |p| Ok(dot(&point_encoder_forward(&input, &nb, p)?.0, &r)))
}

/// The micro model end to end: N = 32, 8x8 planes, composite loss.
pub fn micro_model_config() -> ModelConfig {
    ModelConfig {
        classes: 3,
        planes: micro_planes(),
        encoder: EncoderConfig {
            widths: [3, 4, 4],
            fused_channels: 4,
            leaky_slope: 0.1,
        },
        attention: AttentionConfig {
            heads: 2,
            head_dim: 3,
            out_channels: 5,
            residual: false,
        },
        point_encoder: PointEncoderConfig {
            hidden: 5,
            channels: 5,
            neighbors: 4,
            leaky_slope: 0.1,
        },
        bypass_ham: false,
    }
}

fn check_end_to_end(rng: &mut ChaCha8Rng) -> Result<Vec<GroupError>> {
    let cfg = micro_model_config();
    let (batch, params, grads) = off_kink(|| {
        let cloud = random_cloud(rng, 32, cfg.classes)?;
        let batch = Batch::new(cloud, &cfg)?;
        let mut params = ModelParams::init(&cfg, rng.random())?;
        jitter(&mut params, rng);
        let (_, grads, fwd) = loss_and_grads(&params, &batch, 0.4, false)?;
        let dist = fwd.kink_distance();
        Ok(((batch, params, grads), dist))
    })?;
    compare(&params, &grads, "", |p| Ok(loss_and_grads(p, &batch, 0.4, false)?.0.total))
}
