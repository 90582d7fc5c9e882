use super::{GridCoords, PlaneSpec};
use crate::cloud::PointCloud;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RasterChannel {
    X,
    Y,
    Z,
    Depth,
    Occupancy,
}

/// Which attributes of the winning point each raster pixel carries.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterRecipe {
    pub channels: Vec<RasterChannel>,
}

impl Default for RasterRecipe {
    fn default() -> Self {
        RasterRecipe {
            channels: vec![
                RasterChannel::X,
                RasterChannel::Y,
                RasterChannel::Z,
                RasterChannel::Depth,
                RasterChannel::Occupancy,
            ],
        }
    }
}

impl RasterRecipe {
    pub fn depth(&self) -> usize {
        self.channels.len()
    }
}

/// `rows x cols x channels` image, channel-minor.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Raster {
    pub fn zeros(rows: usize, cols: usize, channels: usize) -> Self {
        Raster {
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

    pub fn channel(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().skip(c).step_by(self.channels).copied()
    }
}

/// Point-to-pixel association of one plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionIndex {
    pub rows: usize,
    pub cols: usize,
    /// Per pixel, row-major: index of the minimum-depth point, `None` if empty.
    pub winner: Vec<Option<u32>>,
    /// Per pixel: depth of the winner, `+inf` for empty pixels.
    pub zbuffer: Vec<f64>,
    /// Per point: its target `(row, col)`, `None` when out of view.
    pub point_pixel: Vec<Option<(u32, u32)>>,
}

impl ProjectionIndex {
    pub fn winner_at(&self, row: usize, col: usize) -> Option<u32> {
        self.winner[row * self.cols + col]
    }

    /// Winner of the pixel point `n` falls on.
    pub fn winner_of_point(&self, n: usize) -> Option<u32> {
        self.point_pixel[n].and_then(|(r, c)| self.winner_at(r as usize, c as usize))
    }
}

/// Z-buffered rasterization: each pixel keeps the in-view point of minimum
/// depth, ties going to the lowest point index. Empty pixels are zero-filled.
pub fn rasterize(
    cloud: &PointCloud,
    coords: &GridCoords,
    plane: &PlaneSpec,
    recipe: &RasterRecipe,
) -> Result<(Raster, ProjectionIndex)> {
    if coords.coords.len() != cloud.len() {
        return Err(Error::shape("grid coords", cloud.len(), coords.coords.len()));
    }
    if coords.rows != plane.rows() || coords.cols != plane.cols() || coords.kind != plane.kind() {
        return Err(Error::invalid("grid coords were built for a different plane"));
    }
    let (rows, cols) = (plane.rows(), plane.cols());
    let mut winner: Vec<Option<u32>> = vec![None; rows * cols];
    let mut zbuffer = vec![f64::INFINITY; rows * cols];
    for (n, gc) in coords.coords.iter().enumerate() {
        if let Some((r, c)) = gc.pixel {
            let px = r as usize * cols + c as usize;
            // Strict comparison keeps the earlier point on ties.
            if gc.depth < zbuffer[px] {
                zbuffer[px] = gc.depth;
                winner[px] = Some(n as u32);
            }
        }
    }

    let d = recipe.depth();
    let mut raster = Raster::zeros(rows, cols, d);
    let positions = cloud.positions();
    for (px, w) in winner.iter().enumerate() {
        let Some(n) = *w else { continue };
        let p = positions[n as usize];
        let out = &mut raster.data[px * d..(px + 1) * d];
        for (slot, ch) in out.iter_mut().zip(&recipe.channels) {
            *slot = match ch {
                RasterChannel::X => p[0],
                RasterChannel::Y => p[1],
                RasterChannel::Z => p[2],
                RasterChannel::Depth => zbuffer[px],
                RasterChannel::Occupancy => 1.0,
            };
        }
    }
    let index = ProjectionIndex {
        rows,
        cols,
        winner,
        zbuffer,
        point_pixel: coords.coords.iter().map(|g| g.pixel).collect(),
    };
    Ok((raster, index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::{project, Extent, PlaneKind};

    fn top(rows: usize, cols: usize) -> PlaneSpec {
        let e = Extent::new([0.0, 0.0], [1.0, 1.0]).unwrap();
        PlaneSpec::orthographic(PlaneKind::XyTop, rows, cols, e, 10.0).unwrap()
    }

    fn run(points: Vec<[f64; 3]>, spec: &PlaneSpec) -> (Raster, ProjectionIndex) {
        let c = PointCloud::from_positions(points).unwrap();
        let g = project(&c, spec).unwrap();
        rasterize(&c, &g, spec, &RasterRecipe::default()).unwrap()
    }

    #[test]
    fn nearest_point_wins() {
        // depths 2.0 and 5.0 in the same pixel
        let (raster, idx) = run(vec![[0.5, 0.5, 5.0], [0.5, 0.5, 8.0]], &top(2, 2));
        let (r, c) = idx.point_pixel[0].unwrap();
        assert_eq!(idx.winner_at(r as usize, c as usize), Some(1));
        assert_eq!(idx.zbuffer[r as usize * 2 + c as usize], 2.0);
        assert_eq!(raster.pixel(r as usize, c as usize), &[0.5, 0.5, 8.0, 2.0, 1.0]);
    }

    #[test]
    fn empty_pixels_are_zero() {
        let (raster, idx) = run(vec![[0.1, 0.1, 0.0]], &top(2, 2));
        assert_eq!(idx.winner_at(1, 1), None);
        assert_eq!(raster.pixel(1, 1), &[0.0; 5]);
        assert!(idx.zbuffer[3].is_infinite());
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let (_, idx) = run(vec![[0.2, 0.2, 1.0], [0.3, 0.3, 1.0], [0.1, 0.1, 1.0]], &top(1, 1));
        assert_eq!(idx.winner[0], Some(0));
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let spec = top(2, 2);
        let a = PointCloud::from_positions(vec![[0.1; 3]]).unwrap();
        let b = PointCloud::from_positions(vec![[0.1; 3]; 2]).unwrap();
        let g = project(&a, &spec).unwrap();
        assert!(rasterize(&b, &g, &spec, &RasterRecipe::default()).is_err());
    }
}
