//! Six-plane view projection: orthographic top/front/back/left/right views
//! and a cylindrical range view, each rasterized with a z-buffer.

mod cylindrical;
mod export;
mod hexplane;
mod orthographic;
mod raster;

pub use cylindrical::project_cylindrical;
pub use export::{
    decode_index_sidecar, depth_pgm, encode_index_sidecar, export_planes, label_pgm, label_ppm,
    INDEX_MAGIC, INDEX_VERSION,
};
pub use hexplane::{gather_offsets, hexplane_project, rasterize_labels, HexPlaneSet, LabelImage, OffsetTable, Plane};
pub use orthographic::project_orthographic;
pub use raster::{rasterize, ProjectionIndex, Raster, RasterChannel, RasterRecipe};

use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

pub const NUM_PLANES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaneKind {
    XyTop,
    XzFront,
    XzBack,
    YzLeft,
    YzRight,
    Cylindrical,
}

impl PlaneKind {
    /// Fixed plane order used everywhere a six-plane set appears.
    pub const ALL: [PlaneKind; NUM_PLANES] = [
        PlaneKind::XyTop,
        PlaneKind::XzFront,
        PlaneKind::XzBack,
        PlaneKind::YzLeft,
        PlaneKind::YzRight,
        PlaneKind::Cylindrical,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlaneKind::XyTop => "xy_top",
            PlaneKind::XzFront => "xz_front",
            PlaneKind::XzBack => "xz_back",
            PlaneKind::YzLeft => "yz_left",
            PlaneKind::YzRight => "yz_right",
            PlaneKind::Cylindrical => "cylindrical",
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|k| *k == self).unwrap()
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn is_orthographic(self) -> bool {
        self != PlaneKind::Cylindrical
    }

    /// `(u axis, v axis, depth axis, depth sign)` for orthographic kinds.
    /// Depth is `sign * (coordinate - eye)`.
    pub(crate) fn ortho_axes(self) -> Option<(usize, usize, usize, f64)> {
        match self {
            PlaneKind::XyTop => Some((0, 1, 2, -1.0)),
            PlaneKind::XzFront => Some((0, 2, 1, -1.0)),
            PlaneKind::XzBack => Some((0, 2, 1, 1.0)),
            PlaneKind::YzLeft => Some((1, 2, 0, 1.0)),
            PlaneKind::YzRight => Some((1, 2, 0, -1.0)),
            PlaneKind::Cylindrical => None,
        }
    }
}

/// Vertical field of view and grid size of the cylindrical range view.
///
/// `phi_down` is the magnitude of the downward limit, so the elevation range
/// is `[-phi_down, phi_up]` and `xi = phi_up + phi_down`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorConfig {
    pub phi_up: f64,
    pub phi_down: f64,
    pub rows: usize,
    pub cols: usize,
    /// Sensor position; points are projected relative to it.
    pub origin: [f64; 3],
}

impl SensorConfig {
    pub fn new(phi_up: f64, phi_down: f64, rows: usize, cols: usize) -> Result<Self> {
        let s = SensorConfig {
            phi_up,
            phi_down,
            rows,
            cols,
            origin: [0.0; 3],
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_origin(mut self, origin: [f64; 3]) -> Self {
        self.origin = origin;
        self
    }

    pub fn xi(&self) -> f64 {
        self.phi_up + self.phi_down
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.phi_up.is_finite() && self.phi_down.is_finite()) || self.phi_up <= 0.0 || self.phi_down <= 0.0 {
            return Err(Error::invalid("sensor inclination limits must be positive"));
        }
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::invalid("sensor grid must be at least 1x1"));
        }
        if !self.origin.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("sensor origin must be finite"));
        }
        Ok(())
    }
}

/// Axis-aligned bounds of an orthographic plane in its (u, v) axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extent {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Extent {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Result<Self> {
        let e = Extent { min, max };
        if !(0..2).all(|a| min[a].is_finite() && max[a].is_finite() && max[a] > min[a]) {
            return Err(Error::invalid(format!("degenerate extent {min:?}..{max:?}")));
        }
        Ok(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlaneGeometry {
    /// `eye` is the coordinate of the viewing plane along the depth axis.
    Orthographic { extent: Extent, eye: f64 },
    Cylindrical(SensorConfig),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneSpec {
    kind: PlaneKind,
    rows: usize,
    cols: usize,
    geometry: PlaneGeometry,
}

impl PlaneSpec {
    pub fn orthographic(kind: PlaneKind, rows: usize, cols: usize, extent: Extent, eye: f64) -> Result<Self> {
        if !kind.is_orthographic() {
            return Err(Error::invalid("cylindrical plane needs a sensor config"));
        }
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("plane grid must be at least 1x1"));
        }
        let extent = Extent::new(extent.min, extent.max)?;
        if !eye.is_finite() {
            return Err(Error::invalid("eye coordinate must be finite"));
        }
        Ok(PlaneSpec {
            kind,
            rows,
            cols,
            geometry: PlaneGeometry::Orthographic { extent, eye },
        })
    }

    pub fn cylindrical(sensor: SensorConfig) -> Result<Self> {
        sensor.validate()?;
        Ok(PlaneSpec {
            kind: PlaneKind::Cylindrical,
            rows: sensor.rows,
            cols: sensor.cols,
            geometry: PlaneGeometry::Cylindrical(sensor),
        })
    }

    /// Orthographic plane whose extent covers `cloud` with `margin` meters to
    /// spare on every side and whose eye sits `margin` outside the cloud.
    pub fn fit_orthographic(kind: PlaneKind, rows: usize, cols: usize, cloud: &PointCloud, margin: f64) -> Result<Self> {
        let (ua, va, da, sign) = kind
            .ortho_axes()
            .ok_or_else(|| Error::invalid("cylindrical plane cannot be fitted to a box"))?;
        if !(margin > 0.0 && margin.is_finite()) {
            return Err(Error::invalid("fit margin must be positive"));
        }
        let (lo, hi) = cloud.bounds();
        let extent = Extent::new([lo[ua] - margin, lo[va] - margin], [hi[ua] + margin, hi[va] + margin])?;
        // Depth grows along the viewing direction, so the eye sits on the near side.
        let eye = if sign < 0.0 { hi[da] + margin } else { lo[da] - margin };
        Self::orthographic(kind, rows, cols, extent, eye)
    }

    pub fn kind(&self) -> PlaneKind {
        self.kind
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn geometry(&self) -> &PlaneGeometry {
        &self.geometry
    }

    pub fn pixels(&self) -> usize {
        self.rows * self.cols
    }
}

/// Continuous grid position of one point on one plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCoord {
    /// Column coordinate.
    pub u: f64,
    /// Row coordinate.
    pub v: f64,
    /// Distance along the plane's viewing direction, meters.
    pub depth: f64,
    /// Target `(row, col)`; `None` when the point is outside the field of view.
    pub pixel: Option<(u32, u32)>,
}

impl GridCoord {
    pub fn in_fov(&self) -> bool {
        self.pixel.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCoords {
    pub kind: PlaneKind,
    pub rows: usize,
    pub cols: usize,
    pub coords: Vec<GridCoord>,
}

/// Dispatch on the plane's kind.
pub fn project(cloud: &PointCloud, spec: &PlaneSpec) -> Result<GridCoords> {
    match spec.geometry() {
        PlaneGeometry::Cylindrical(sensor) => project_cylindrical(cloud, sensor),
        PlaneGeometry::Orthographic { .. } => project_orthographic(cloud, spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plane_order_is_fixed() {
        for (i, k) in PlaneKind::ALL.iter().enumerate() {
            assert_eq!(k.index(), i);
            assert_eq!(PlaneKind::from_index(i), Some(*k));
        }
        assert_eq!(PlaneKind::ALL[5].name(), "cylindrical");
    }

    #[test]
    fn spec_validation() {
        assert!(SensorConfig::new(0.0, 0.1, 4, 4).is_err());
        assert!(SensorConfig::new(0.1, 0.1, 0, 4).is_err());
        assert!(Extent::new([0.0, 0.0], [0.0, 1.0]).is_err());
        let e = Extent::new([0.0, 0.0], [1.0, 1.0]).unwrap();
        assert!(PlaneSpec::orthographic(PlaneKind::Cylindrical, 4, 4, e, 0.0).is_err());
        assert!(PlaneSpec::orthographic(PlaneKind::XyTop, 0, 4, e, 0.0).is_err());
    }

    #[test]
    fn fitted_plane_covers_cloud() {
        let cloud = PointCloud::from_positions(vec![[-1.0, 2.0, 0.5], [3.0, -4.0, 1.5]]).unwrap();
        for kind in PlaneKind::ALL.into_iter().filter(|k| k.is_orthographic()) {
            let spec = PlaneSpec::fit_orthographic(kind, 16, 16, &cloud, 0.01).unwrap();
            let coords = project(&cloud, &spec).unwrap();
            assert!(coords.coords.iter().all(|c| c.in_fov() && c.depth > 0.0), "{kind:?}");
        }
    }
}
