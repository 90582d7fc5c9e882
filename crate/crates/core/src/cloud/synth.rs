//! Deterministic synthetic rooms: a floor, four walls and box/cylinder
//! primitives standing on the floor, surface-sampled with bounded Gaussian
//! noise along the surface normal.
//!
//! The room spans `[-Lx/2, Lx/2] x [-Ly/2, Ly/2] x [0, Lz]`.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Label, PointCloud};
use crate::error::{Error, Result};

const FLOOR_REJECTION_LIMIT: usize = 10_000;

fn default_wall_class() -> u32 {
    1
}

fn default_noise() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub seed: u64,
    pub num_points: usize,
    pub num_classes: u32,
    /// Room size along x, y, z in meters.
    pub room_extent: [f64; 3],
    #[serde(default)]
    pub floor_class: u32,
    #[serde(default = "default_wall_class")]
    pub wall_class: u32,
    #[serde(default)]
    pub primitives: Vec<Primitive>,
    /// Standard deviation of the normal-direction noise, meters.
    #[serde(default = "default_noise")]
    pub noise_sigma: f64,
    /// Noise samples beyond this magnitude are redrawn.
    #[serde(default = "default_noise")]
    pub noise_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Primitive {
    pub shape: Shape,
    /// Floor position of the primitive's vertical axis.
    pub center: [f64; 2],
    /// Rotation about +z, radians.
    #[serde(default)]
    pub yaw: f64,
    pub class: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Box { size: [f64; 3] },
    Cylinder { radius: f64, height: f64 },
}

impl Shape {
    fn height(&self) -> f64 {
        match self {
            Shape::Box { size } => size[2],
            Shape::Cylinder { height, .. } => *height,
        }
    }
}

/// One sampled surface patch of a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    pub class: u32,
    pub area: f64,
    geometry: Patch,
}

#[derive(Debug, Clone, PartialEq)]
enum Patch {
    /// `origin + s * edge_u + t * edge_v`, `s, t` uniform in `[0, 1]`.
    Rect {
        origin: [f64; 3],
        edge_u: [f64; 3],
        edge_v: [f64; 3],
        normal: [f64; 3],
    },
    /// Floor rectangle with primitive footprints rejected.
    Floor { half: [f64; 2] },
    Lateral {
        center: [f64; 2],
        radius: f64,
        height: f64,
    },
    Disc {
        center: [f64; 3],
        radius: f64,
    },
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_points == 0 {
            return Err(Error::invalid("scene requests zero points"));
        }
        if self.num_classes < 2 {
            return Err(Error::invalid("scene needs at least 2 classes"));
        }
        if !self.room_extent.iter().all(|e| e.is_finite() && *e > 0.0) {
            return Err(Error::invalid("room extent must be positive"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_bound >= 0.0)
            || !self.noise_sigma.is_finite()
            || !self.noise_bound.is_finite()
            || (self.noise_sigma > 0.0 && self.noise_bound == 0.0)
        {
            return Err(Error::invalid("noise sigma/bound must be finite, non-negative, bound > 0 when sigma > 0"));
        }
        let [lx, ly, lz] = self.room_extent;
        let mut used = vec![false; self.num_classes as usize];
        let mut mark = |class: u32, what: &str| -> Result<()> {
            let slot = used
                .get_mut(class as usize)
                .ok_or_else(|| Error::invalid(format!("{what} class {class} >= {}", self.num_classes)))?;
            *slot = true;
            Ok(())
        };
        mark(self.floor_class, "floor")?;
        mark(self.wall_class, "wall")?;
        for (i, prim) in self.primitives.iter().enumerate() {
            mark(prim.class, "primitive")?;
            let inside = |x: f64, y: f64| x.abs() <= lx / 2.0 && y.abs() <= ly / 2.0;
            let ok = match &prim.shape {
                Shape::Box { size } => {
                    size.iter().all(|s| s.is_finite() && *s > 0.0)
                        && box_corners(prim, *size).iter().all(|c| inside(c[0], c[1]))
                }
                Shape::Cylinder { radius, height } => {
                    radius.is_finite()
                        && height.is_finite()
                        && *radius > 0.0
                        && *height > 0.0
                        && prim.center[0].abs() + radius <= lx / 2.0
                        && prim.center[1].abs() + radius <= ly / 2.0
                }
            };
            if !ok || !prim.yaw.is_finite() || prim.shape.height() > lz {
                return Err(Error::invalid(format!("primitive {i} lies outside the room")));
            }
        }
        if let Some(c) = used.iter().position(|u| !u) {
            return Err(Error::invalid(format!("class {c} has no surface in the scene")));
        }
        Ok(())
    }

    /// Sampled surfaces in generation order: floor, walls (-x, +x, -y, +y),
    /// then each primitive's sides and top.
    pub fn surfaces(&self) -> Vec<Surface> {
        let [lx, ly, lz] = self.room_extent;
        let (hx, hy) = (lx / 2.0, ly / 2.0);
        let mut out = vec![Surface {
            class: self.floor_class,
            area: lx * ly,
            geometry: Patch::Floor { half: [hx, hy] },
        }];
        let walls = [
            ([-hx, -hy, 0.0], [0.0, ly, 0.0], [1.0, 0.0, 0.0]),
            ([hx, -hy, 0.0], [0.0, ly, 0.0], [-1.0, 0.0, 0.0]),
            ([-hx, -hy, 0.0], [lx, 0.0, 0.0], [0.0, 1.0, 0.0]),
            ([-hx, hy, 0.0], [lx, 0.0, 0.0], [0.0, -1.0, 0.0]),
        ];
        for (origin, edge_u, normal) in walls {
            out.push(rect(self.wall_class, origin, edge_u, [0.0, 0.0, lz], normal));
        }
        for prim in &self.primitives {
            match &prim.shape {
                Shape::Box { size } => {
                    let c = box_corners(prim, *size);
                    let up = [0.0, 0.0, size[2]];
                    for k in 0..4 {
                        let a = c[k];
                        let b = c[(k + 1) % 4];
                        let edge = [b[0] - a[0], b[1] - a[1], 0.0];
                        let len = (edge[0] * edge[0] + edge[1] * edge[1]).sqrt();
                        // Corners run counter-clockwise, so the outward normal is the edge turned clockwise.
                        let normal = [edge[1] / len, -edge[0] / len, 0.0];
                        out.push(rect(prim.class, a, edge, up, normal));
                    }
                    let e_u = [c[1][0] - c[0][0], c[1][1] - c[0][1], 0.0];
                    let e_v = [c[3][0] - c[0][0], c[3][1] - c[0][1], 0.0];
                    out.push(rect(
                        prim.class,
                        [c[0][0], c[0][1], size[2]],
                        e_u,
                        e_v,
                        [0.0, 0.0, 1.0],
                    ));
                }
                Shape::Cylinder { radius, height } => {
                    out.push(Surface {
                        class: prim.class,
                        area: TAU * radius * height,
                        geometry: Patch::Lateral {
                            center: prim.center,
                            radius: *radius,
                            height: *height,
                        },
                    });
                    out.push(Surface {
                        class: prim.class,
                        area: TAU / 2.0 * radius * radius,
                        geometry: Patch::Disc {
                            center: [prim.center[0], prim.center[1], *height],
                            radius: *radius,
                        },
                    });
                }
            }
        }
        out
    }
}

fn rect(class: u32, origin: [f64; 3], edge_u: [f64; 3], edge_v: [f64; 3], normal: [f64; 3]) -> Surface {
    let cross = [
        edge_u[1] * edge_v[2] - edge_u[2] * edge_v[1],
        edge_u[2] * edge_v[0] - edge_u[0] * edge_v[2],
        edge_u[0] * edge_v[1] - edge_u[1] * edge_v[0],
    ];
    Surface {
        class,
        area: super::norm(cross),
        geometry: Patch::Rect {
            origin,
            edge_u,
            edge_v,
            normal,
        },
    }
}

/// Footprint corners, counter-clockwise seen from above, at z = 0.
fn box_corners(prim: &Primitive, size: [f64; 3]) -> [[f64; 3]; 4] {
    let (s, c) = prim.yaw.sin_cos();
    let (hx, hy) = (size[0] / 2.0, size[1] / 2.0);
    [[-hx, -hy], [hx, -hy], [hx, hy], [-hx, hy]].map(|[x, y]| {
        [
            prim.center[0] + c * x - s * y,
            prim.center[1] + s * x + c * y,
            0.0,
        ]
    })
}

fn inside_footprint(prim: &Primitive, x: f64, y: f64) -> bool {
    let dx = x - prim.center[0];
    let dy = y - prim.center[1];
    match &prim.shape {
        Shape::Box { size } => {
            let (s, c) = prim.yaw.sin_cos();
            let lx = c * dx + s * dy;
            let ly = -s * dx + c * dy;
            lx.abs() <= size[0] / 2.0 && ly.abs() <= size[1] / 2.0
        }
        Shape::Cylinder { radius, .. } => dx * dx + dy * dy <= radius * radius,
    }
}

/// Number of points drawn from each surface: one per surface, the remainder
/// split by area with largest-remainder rounding (ties to the earlier surface).
pub fn sampling_plan(surfaces: &[Surface], num_points: usize) -> Result<Vec<usize>> {
    if num_points < surfaces.len() {
        return Err(Error::invalid(format!(
            "{num_points} points cannot cover {} surfaces",
            surfaces.len()
        )));
    }
    let rest = num_points - surfaces.len();
    let total: f64 = surfaces.iter().map(|s| s.area).sum();
    let quotas: Vec<f64> = surfaces
        .iter()
        .map(|s| rest as f64 * s.area / total)
        .collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..surfaces.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(rest.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    Ok(counts.into_iter().map(|c| c + 1).collect())
}

struct Noise {
    dist: Option<Normal<f64>>,
    bound: f64,
}

impl Noise {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let Some(dist) = &self.dist else { return 0.0 };
        loop {
            let n = dist.sample(rng);
            if n.abs() <= self.bound {
                return n;
            }
        }
    }
}

pub fn synth_scene(spec: &SceneSpec) -> Result<PointCloud> {
    spec.validate()?;
    let surfaces = spec.surfaces();
    let plan = sampling_plan(&surfaces, spec.num_points)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Noise {
        dist: (spec.noise_sigma > 0.0)
            .then(|| Normal::new(0.0, spec.noise_sigma).expect("validated sigma")),
        bound: spec.noise_bound,
    };

    let mut positions = Vec::with_capacity(spec.num_points);
    let mut labels: Vec<Label> = Vec::with_capacity(spec.num_points);
    for (surface, &count) in surfaces.iter().zip(&plan) {
        for _ in 0..count {
            let p = sample_surface(&surface.geometry, &spec.primitives, &noise, &mut rng)?;
            positions.push(p);
            labels.push(Some(surface.class));
        }
    }
    PointCloud::new(positions, None, Some(labels))
}

fn sample_surface(
    patch: &Patch,
    primitives: &[Primitive],
    noise: &Noise,
    rng: &mut ChaCha8Rng,
) -> Result<[f64; 3]> {
    let p = match patch {
        Patch::Rect {
            origin,
            edge_u,
            edge_v,
            normal,
        } => {
            let s: f64 = rng.random();
            let t: f64 = rng.random();
            let n = noise.sample(rng);
            std::array::from_fn(|a| origin[a] + s * edge_u[a] + t * edge_v[a] + n * normal[a])
        }
        Patch::Floor { half } => {
            let mut attempt = 0;
            let (x, y) = loop {
                let x = rng.random_range(-half[0]..=half[0]);
                let y = rng.random_range(-half[1]..=half[1]);
                if !primitives.iter().any(|p| inside_footprint(p, x, y)) {
                    break (x, y);
                }
                attempt += 1;
                if attempt >= FLOOR_REJECTION_LIMIT {
                    return Err(Error::invalid("primitive footprints cover the floor"));
                }
            };
            [x, y, noise.sample(rng)]
        }
        Patch::Lateral {
            center,
            radius,
            height,
        } => {
            let theta = rng.random_range(0.0..TAU);
            let z = rng.random_range(0.0..=*height);
            let r = radius + noise.sample(rng);
            [center[0] + r * theta.cos(), center[1] + r * theta.sin(), z]
        }
        Patch::Disc { center, radius } => {
            let theta = rng.random_range(0.0..TAU);
            let r = radius * rng.random::<f64>().sqrt();
            let n = noise.sample(rng);
            [center[0] + r * theta.cos(), center[1] + r * theta.sin(), center[2] + n]
        }
    };
    Ok(p)
}
