//! Fixed synthetic scenes and the small model configuration used by the
//! end-to-end checks.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::association::{AttentionConfig, PointEncoderConfig};
use crate::cloud::{synth_scene, PointCloud, Primitive, SceneSpec, Shape};
use crate::encoder::EncoderConfig;
use crate::error::Result;
use crate::model::{ModelConfig, PlanesConfig, TrainConfig};
use crate::projection::{PlaneKind, PlaneSpec, SensorConfig};

pub const FLOOR: u32 = 0;
pub const WALL: u32 = 1;
pub const SHORT_OBJECT: u32 = 2;
pub const TALL_OBJECT: u32 = 3;

const SHORT_HEIGHT: f64 = 0.5;
const TALL_HEIGHT: f64 = 1.2;
const OBJECT_SIDE: f64 = 0.6;

/// Empty room labeled floor vs walls.
pub fn separable_scene(seed: u64, num_points: usize) -> SceneSpec {
    SceneSpec {
        seed,
        num_points,
        num_classes: 2,
        room_extent: [4.0, 4.0, 2.5],
        floor_class: FLOOR,
        wall_class: WALL,
        primitives: Vec::new(),
        noise_sigma: 0.01,
        noise_bound: 0.01,
    }
}

/// Room with three short and three tall boxes of identical footprint. The
/// lower parts of both kinds look alike locally; only the height of the
/// column above them tells them apart.
pub fn objects_room(seed: u64, num_points: usize) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x00b1_ec75);
    let mut centers: Vec<[f64; 2]> = Vec::new();
    while centers.len() < 6 {
        let c = [rng.random_range(-1.8..1.8), rng.random_range(-1.8..1.8)];
        if centers.iter().all(|o| (o[0] - c[0]).hypot(o[1] - c[1]) > 1.0) {
            centers.push(c);
        }
    }
    let primitives = centers
        .iter()
        .enumerate()
        .map(|(i, &center)| {
            let (h, class) = if i % 2 == 0 {
                (SHORT_HEIGHT, SHORT_OBJECT)
            } else {
                (TALL_HEIGHT, TALL_OBJECT)
            };
            Primitive {
                shape: Shape::Box {
                    size: [OBJECT_SIDE, OBJECT_SIDE, h],
                },
                center,
                yaw: rng.random_range(0.0..PI),
                class,
            }
        })
        .collect();
    SceneSpec {
        seed,
        num_points,
        num_classes: 4,
        room_extent: [5.0, 5.0, 2.5],
        floor_class: FLOOR,
        wall_class: WALL,
        primitives,
        noise_sigma: 0.01,
        noise_bound: 0.01,
    }
}

/// A scene in a run config: a full room description or a built-in generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SceneEntry {
    Room(SceneSpec),
    /// [`separable_scene`]
    Separable { seed: u64, num_points: usize },
    /// [`objects_room`]
    Objects { seed: u64, num_points: usize },
}

impl SceneEntry {
    pub fn spec(&self) -> SceneSpec {
        match self {
            SceneEntry::Room(s) => s.clone(),
            SceneEntry::Separable { seed, num_points } => separable_scene(*seed, *num_points),
            SceneEntry::Objects { seed, num_points } => objects_room(*seed, *num_points),
        }
    }

    pub fn build(&self) -> Result<PointCloud> {
        synth_scene(&self.spec())
    }
}

/// Small planes and widths for runs of a few hundred steps.
pub fn toy_model_config(classes: usize) -> ModelConfig {
    ModelConfig {
        classes,
        planes: PlanesConfig {
            top: [48, 48],
            side: [24, 96],
            range: [24, 96],
            phi_up_deg: 45.0,
            phi_down_deg: 60.0,
            sensor_origin: [0.0, 0.0, 1.2],
            margin: 0.05,
        },
        encoder: EncoderConfig {
            widths: [8, 16, 16],
            fused_channels: 16,
            leaky_slope: 0.1,
        },
        attention: AttentionConfig {
            heads: 2,
            head_dim: 8,
            out_channels: 16,
            residual: false,
        },
        point_encoder: PointEncoderConfig {
            hidden: 16,
            channels: 16,
            neighbors: 8,
            leaky_slope: 0.1,
        },
        bypass_ham: false,
    }
}

pub fn toy_train_config(steps: usize) -> TrainConfig {
    TrainConfig {
        steps,
        lr_max: 1e-2,
        weight_decay: 0.01,
        aux_weight: 0.4,
        eval_interval: 10,
        augment: true,
    }
}

/// A far point hidden behind a near point in the range view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub index: usize,
    pub occluder: usize,
    /// `|position(index) - position(occluder)|` by construction.
    pub displacement: f64,
}

#[derive(Debug, Clone)]
pub struct ProbeScene {
    pub cloud: PointCloud,
    pub specs: Vec<PlaneSpec>,
    pub probes: Vec<Probe>,
}

/// Two parallel walls facing a range sensor at the origin, one point per
/// range-view pixel centre. The near wall (`x = 2`, class 0) covers a band of
/// columns; the far wall (`x = 4`, class 1) covers a wider band, so its points
/// in the shared pixels are occluded in the range view.
pub fn two_wall_scene() -> Result<ProbeScene> {
    let (rows, cols) = (16usize, 96usize);
    let sensor = SensorConfig::new(20f64.to_radians(), 20f64.to_radians(), rows, cols)?;
    let xi = sensor.xi();
    let mid = cols / 2;
    let direction = |r: usize, c: usize| {
        let u = c as f64 + 0.5;
        let v = r as f64 + 0.5;
        let az = PI * (1.0 - 2.0 * u / cols as f64);
        let el = xi * (1.0 - v / rows as f64) - sensor.phi_down;
        [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()]
    };
    let on_plane = |d: [f64; 3], x: f64| {
        let s = x / d[0];
        [d[0] * s, d[1] * s, d[2] * s]
    };
    let mut positions = Vec::new();
    let mut labels = Vec::new();
    let mut near = std::collections::HashMap::new();
    for r in 0..rows {
        for c in mid - 6..mid + 6 {
            near.insert((r, c), positions.len());
            positions.push(on_plane(direction(r, c), 2.0));
            labels.push(Some(0));
        }
    }
    let mut probes = Vec::new();
    for r in 0..rows {
        for c in mid - 10..mid + 10 {
            let p = on_plane(direction(r, c), 4.0);
            if let Some(&occ) = near.get(&(r, c)) {
                let q = positions[occ];
                let displacement = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
                probes.push(Probe {
                    index: positions.len(),
                    occluder: occ,
                    displacement,
                });
            }
            positions.push(p);
            labels.push(Some(1));
        }
    }
    let cloud = PointCloud::from_positions(positions)?.with_labels(labels)?;
    let mut specs = Vec::new();
    for kind in PlaneKind::ALL {
        specs.push(match kind {
            PlaneKind::Cylindrical => PlaneSpec::cylindrical(sensor)?,
            _ => PlaneSpec::fit_orthographic(kind, 64, 64, &cloud, 0.05)?,
        });
    }
    Ok(ProbeScene { cloud, specs, probes })
}
