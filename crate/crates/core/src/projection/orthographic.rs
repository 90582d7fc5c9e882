use super::{GridCoord, GridCoords, PlaneGeometry, PlaneSpec};
use crate::cloud::PointCloud;
use crate::error::{Error, Result};

/// Affine map of the plane's two in-plane axes from its extent onto
/// `[0, W) x [0, H)`; the right and top edges are exclusive.
///
/// | kind       | u | v | depth      |
/// |------------|---|---|------------|
/// | `XyTop`    | x | y | `eye - z`  |
/// | `XzFront`  | x | z | `eye - y`  |
/// | `XzBack`   | x | z | `y - eye`  |
/// | `YzLeft`   | y | z | `x - eye`  |
/// | `YzRight`  | y | z | `eye - x`  |
pub fn project_orthographic(cloud: &PointCloud, spec: &PlaneSpec) -> Result<GridCoords> {
    let (ua, va, da, sign) = spec
        .kind()
        .ortho_axes()
        .ok_or_else(|| Error::invalid("orthographic projection on a cylindrical plane"))?;
    let PlaneGeometry::Orthographic { extent, eye } = *spec.geometry() else {
        return Err(Error::invalid("plane has no orthographic extent"));
    };
    let w = spec.cols() as f64;
    let h = spec.rows() as f64;
    let su = w / (extent.max[0] - extent.min[0]);
    let sv = h / (extent.max[1] - extent.min[1]);
    if !(su.is_finite() && sv.is_finite()) {
        return Err(Error::invalid("degenerate extent"));
    }
    let coords = cloud
        .positions()
        .iter()
        .map(|p| {
            let u = (p[ua] - extent.min[0]) * su;
            let v = (p[va] - extent.min[1]) * sv;
            let depth = sign * (p[da] - eye);
            let pixel = (u >= 0.0 && u < w && v >= 0.0 && v < h).then(|| {
                let col = (u.floor() as usize).min(spec.cols() - 1);
                let row = (v.floor() as usize).min(spec.rows() - 1);
                (row as u32, col as u32)
            });
            GridCoord { u, v, depth, pixel }
        })
        .collect();
    Ok(GridCoords {
        kind: spec.kind(),
        rows: spec.rows(),
        cols: spec.cols(),
        coords,
    })
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::projection::{Extent, PlaneKind};

    fn top() -> PlaneSpec {
        let e = Extent::new([0.0, 0.0], [10.0, 10.0]).unwrap();
        PlaneSpec::orthographic(PlaneKind::XyTop, 256, 256, e, 5.0).unwrap()
    }

    #[test]
    fn affine_endpoints() {
        let c = PointCloud::from_positions(vec![[0.0, 0.0, 1.0], [10.0, 10.0, 1.0]]).unwrap();
        let g = project_orthographic(&c, &top()).unwrap();
        assert_eq!((g.coords[0].u, g.coords[0].v), (0.0, 0.0));
        assert_eq!(g.coords[0].pixel, Some((0, 0)));
        assert_eq!(g.coords[0].depth, 4.0);
        assert_eq!((g.coords[1].u, g.coords[1].v), (256.0, 256.0));
        assert!(!g.coords[1].in_fov());
    }

    #[test]
    fn viewing_directions() {
        let e = Extent::new([-1.0, -1.0], [1.0, 1.0]).unwrap();
        let c = PointCloud::from_positions(vec![[0.5, 0.25, -0.5]]).unwrap();
        let cases = [
            (PlaneKind::XzFront, 2.0, 1.75),
            (PlaneKind::XzBack, -2.0, 2.25),
            (PlaneKind::YzLeft, -2.0, 2.5),
            (PlaneKind::YzRight, 2.0, 1.5),
        ];
        for (kind, eye, depth) in cases {
            let spec = PlaneSpec::orthographic(kind, 8, 8, e, eye).unwrap();
            let g = project_orthographic(&c, &spec).unwrap().coords[0];
            assert_eq!(g.depth, depth, "{kind:?}");
        }
    }

    #[test]
    fn pixel_centers_unmap_within_one_pitch() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let e = Extent::new([-3.0, -2.0], [4.0, 5.0]).unwrap();
        let spec = PlaneSpec::orthographic(PlaneKind::XyTop, 48, 96, e, 10.0).unwrap();
        let pts: Vec<[f64; 3]> = (0..500)
            .map(|_| [rng.random_range(-3.0..4.0), rng.random_range(-2.0..5.0), 0.0])
            .collect();
        let c = PointCloud::from_positions(pts.clone()).unwrap();
        let g = project_orthographic(&c, &spec).unwrap();
        let pitch_u = 7.0 / 96.0;
        let pitch_v = 7.0 / 48.0;
        for (p, gc) in pts.iter().zip(&g.coords) {
            let (row, col) = gc.pixel.unwrap();
            let x = -3.0 + (col as f64 + 0.5) * pitch_u;
            let y = -2.0 + (row as f64 + 0.5) * pitch_v;
            assert!((x - p[0]).abs() <= pitch_u && (y - p[1]).abs() <= pitch_v);
        }
    }
}
