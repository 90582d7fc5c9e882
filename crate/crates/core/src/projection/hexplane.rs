use rayon::prelude::*;

use super::{project, rasterize, GridCoords, PlaneKind, PlaneSpec, ProjectionIndex, Raster, RasterRecipe, NUM_PLANES};
use crate::cloud::{Label, PointCloud};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub spec: PlaneSpec,
    pub coords: GridCoords,
    pub raster: Raster,
    pub index: ProjectionIndex,
}

/// The six rasterized planes of one cloud, in [`PlaneKind::ALL`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct HexPlaneSet {
    pub planes: Vec<Plane>,
    pub num_points: usize,
}

impl HexPlaneSet {
    pub fn plane(&self, kind: PlaneKind) -> &Plane {
        &self.planes[kind.index()]
    }

    pub fn raster_channels(&self) -> usize {
        self.planes[0].raster.channels
    }

    /// Points that win at least one pixel on any of the given planes.
    pub fn winners(&self, kinds: &[PlaneKind]) -> Vec<bool> {
        let mut won = vec![false; self.num_points];
        for kind in kinds {
            for w in self.plane(*kind).index.winner.iter().flatten() {
                won[*w as usize] = true;
            }
        }
        won
    }
}

pub fn hexplane_project(cloud: &PointCloud, specs: &[PlaneSpec], recipe: &RasterRecipe) -> Result<HexPlaneSet> {
    if specs.len() != NUM_PLANES {
        return Err(Error::shape("plane specs", NUM_PLANES, specs.len()));
    }
    for (spec, kind) in specs.iter().zip(PlaneKind::ALL) {
        if spec.kind() != kind {
            return Err(Error::invalid(format!(
                "plane {} must be {}, got {}",
                kind.index(),
                kind.name(),
                spec.kind().name()
            )));
        }
    }
    if recipe.channels.is_empty() {
        return Err(Error::invalid("raster recipe has no channels"));
    }
    let planes = specs
        .par_iter()
        .map(|spec| {
            let coords = project(cloud, spec)?;
            let (raster, index) = rasterize(cloud, &coords, spec, recipe)?;
            Ok(Plane {
                spec: *spec,
                coords,
                raster,
                index,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HexPlaneSet {
        planes,
        num_points: cloud.len(),
    })
}

/// Per point and plane: `position(n) - position(winner of n's pixel)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetTable {
    pub num_points: usize,
    /// `N x 6` offsets, zero where invalid.
    pub offsets: Vec<[f64; 3]>,
    /// `N x 6`; false when the point is out of view on that plane.
    pub valid: Vec<bool>,
}

impl OffsetTable {
    pub fn get(&self, n: usize, plane: usize) -> Option<[f64; 3]> {
        let i = n * NUM_PLANES + plane;
        self.valid[i].then_some(self.offsets[i])
    }
}

pub fn gather_offsets(cloud: &PointCloud, hex: &HexPlaneSet) -> Result<OffsetTable> {
    if hex.num_points != cloud.len() {
        return Err(Error::shape("hexplane points", cloud.len(), hex.num_points));
    }
    let n = cloud.len();
    let pos = cloud.positions();
    let mut offsets = vec![[0.0; 3]; n * NUM_PLANES];
    let mut valid = vec![false; n * NUM_PLANES];
    for (m, plane) in hex.planes.iter().enumerate() {
        for i in 0..n {
            let Some(w) = plane.index.winner_of_point(i) else {
                continue;
            };
            let q = pos[w as usize];
            let p = pos[i];
            offsets[i * NUM_PLANES + m] = [p[0] - q[0], p[1] - q[1], p[2] - q[2]];
            valid[i * NUM_PLANES + m] = true;
        }
    }
    Ok(OffsetTable {
        num_points: n,
        offsets,
        valid,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelImage {
    pub rows: usize,
    pub cols: usize,
    pub labels: Vec<Label>,
}

/// Each pixel takes its winner's label; empty pixels are `None`.
pub fn rasterize_labels(cloud: &PointCloud, hex: &HexPlaneSet) -> Result<Vec<LabelImage>> {
    let labels = cloud
        .labels()
        .ok_or_else(|| Error::invalid("cloud has no labels"))?;
    if hex.num_points != cloud.len() {
        return Err(Error::shape("hexplane points", cloud.len(), hex.num_points));
    }
    Ok(hex
        .planes
        .iter()
        .map(|plane| LabelImage {
            rows: plane.index.rows,
            cols: plane.index.cols,
            labels: plane
                .index
                .winner
                .iter()
                .map(|w| w.and_then(|n| labels[n as usize]))
                .collect(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::{Extent, SensorConfig};

    pub(crate) fn unit_specs(cloud: &PointCloud, res: usize) -> Vec<PlaneSpec> {
        let mut specs: Vec<PlaneSpec> = PlaneKind::ALL[..5]
            .iter()
            .map(|k| PlaneSpec::fit_orthographic(*k, res, res, cloud, 0.05).unwrap())
            .collect();
        let sensor = SensorConfig::new(0.8, 0.8, res, 2 * res).unwrap();
        specs.push(PlaneSpec::cylindrical(sensor).unwrap());
        specs
    }

    #[test]
    fn plane_order_enforced() {
        let c = PointCloud::from_positions(vec![[1.0, 0.5, 0.2]]).unwrap();
        let mut specs = unit_specs(&c, 8);
        specs.swap(1, 2);
        assert!(hexplane_project(&c, &specs, &RasterRecipe::default()).is_err());
        assert!(hexplane_project(&c, &specs[..5], &RasterRecipe::default()).is_err());
    }

    #[test]
    fn front_and_back_disagree_on_winner() {
        let c = PointCloud::from_positions(vec![[0.5, 1.0, 0.5], [0.5, -1.0, 0.5]]).unwrap();
        let e = Extent::new([0.0, 0.0], [1.0, 1.0]).unwrap();
        let mut specs = unit_specs(&c, 4);
        specs[1] = PlaneSpec::orthographic(PlaneKind::XzFront, 4, 4, e, 5.0).unwrap();
        specs[2] = PlaneSpec::orthographic(PlaneKind::XzBack, 4, 4, e, -5.0).unwrap();
        let hex = hexplane_project(&c, &specs, &RasterRecipe::default()).unwrap();
        assert_eq!(hex.plane(PlaneKind::XzFront).index.winner_of_point(1), Some(0));
        assert_eq!(hex.plane(PlaneKind::XzBack).index.winner_of_point(0), Some(1));
    }

    #[test]
    fn self_winner_has_zero_offset_and_occluded_has_gap() {
        let c = PointCloud::from_positions(vec![[0.5, 0.5, 2.0], [0.5, 0.5, 0.5]]).unwrap();
        let specs = unit_specs(&c, 1);
        let hex = hexplane_project(&c, &specs, &RasterRecipe::default()).unwrap();
        let off = gather_offsets(&c, &hex).unwrap();
        assert_eq!(off.get(0, 0), Some([0.0, 0.0, 0.0]));
        assert_eq!(off.get(1, 0), Some([0.0, 0.0, -1.5]));
    }

    #[test]
    fn single_point_labels_one_pixel() {
        let c = PointCloud::from_positions(vec![[1.0, 0.3, 0.2]])
            .unwrap()
            .with_labels(vec![Some(4)])
            .unwrap();
        let hex = hexplane_project(&c, &unit_specs(&c, 6), &RasterRecipe::default()).unwrap();
        for (img, plane) in rasterize_labels(&c, &hex).unwrap().iter().zip(&hex.planes) {
            let labeled = img.labels.iter().filter(|l| l.is_some()).count();
            assert_eq!(labeled, usize::from(plane.coords.coords[0].in_fov()));
        }
    }

    #[test]
    fn unlabeled_cloud_cannot_rasterize_labels() {
        let c = PointCloud::from_positions(vec![[1.0, 0.3, 0.2]]).unwrap();
        let hex = hexplane_project(&c, &unit_specs(&c, 2), &RasterRecipe::default()).unwrap();
        assert!(rasterize_labels(&c, &hex).is_err());
    }
}
