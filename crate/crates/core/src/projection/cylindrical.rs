use std::f64::consts::PI;

use super::{GridCoord, GridCoords, PlaneKind, SensorConfig};
use crate::cloud::{norm, PointCloud};
use crate::error::{Error, Result};

/// Slack on the elevation limits so that `asin` round-off on a boundary
/// point does not drop it from view.
const FOV_SLACK: f64 = 1e-12;

/// Range-image coordinates:
///
/// ```text
/// u = 1/2 * (1 - atan2(y, x) / pi) * W
/// v = (1 - (asin(z / d) + phi_down) / xi) * H,   d = |p|
/// ```
///
/// with `p` taken relative to the sensor origin. Azimuth is folded into
/// `(-pi, pi]`, so `u` lies in `[0, W)`. A point whose elevation lies in
/// `[-phi_down, phi_up]` (up to `FOV_SLACK`) is in view; its row is `floor(v)` clamped to
/// `[0, H)`, which only matters on the two boundary elevations where `v`
/// reaches `0` or `H`.
pub fn project_cylindrical(cloud: &PointCloud, sensor: &SensorConfig) -> Result<GridCoords> {
    sensor.validate()?;
    let w = sensor.cols as f64;
    let h = sensor.rows as f64;
    let xi = sensor.xi();
    let coords = cloud
        .positions()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let rel = [
                p[0] - sensor.origin[0],
                p[1] - sensor.origin[1],
                p[2] - sensor.origin[2],
            ];
            let d = norm(rel);
            if d == 0.0 {
                return Err(Error::record(i, "point coincides with the sensor origin"));
            }
            let mut azimuth = rel[1].atan2(rel[0]);
            if azimuth == -PI {
                azimuth = PI;
            }
            let elevation = (rel[2] / d).clamp(-1.0, 1.0).asin();
            let u = 0.5 * (1.0 - azimuth / PI) * w;
            let v = (1.0 - (elevation + sensor.phi_down) / xi) * h;
            let pixel = (elevation >= -sensor.phi_down - FOV_SLACK && elevation <= sensor.phi_up + FOV_SLACK).then(|| {
                let col = (u.floor() as usize) % sensor.cols;
                let row = (v.floor().max(0.0) as usize).min(sensor.rows - 1);
                (row as u32, col as u32)
            });
            Ok(GridCoord {
                u,
                v,
                depth: d,
                pixel,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GridCoords {
        kind: PlaneKind::Cylindrical,
        rows: sensor.rows,
        cols: sensor.cols,
        coords,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sensor() -> SensorConfig {
        SensorConfig::new(3f64.to_radians(), 25f64.to_radians(), 64, 512).unwrap()
    }

    fn one(p: [f64; 3], s: &SensorConfig) -> GridCoord {
        let c = PointCloud::from_positions(vec![p]).unwrap();
        project_cylindrical(&c, s).unwrap().coords[0]
    }

    #[test]
    fn forward_axis_is_mid_column() {
        let g = one([1.0, 0.0, 0.0], &sensor());
        assert_eq!(g.u, 256.0);
        assert_eq!(g.depth, 1.0);
    }

    #[test]
    fn backward_axis_is_column_zero() {
        let s = sensor();
        assert_eq!(one([-1.0, 0.0, 0.0], &s).u, 0.0);
        let g = one([-1.0, -0.0, 0.0], &s);
        assert_eq!(g.u, 0.0);
        assert_eq!(g.pixel.unwrap().1, 0);
    }

    #[test]
    fn fov_endpoints_map_to_first_and_last_row() {
        let s = sensor();
        // Choose z so that asin(z / d) reproduces the limit exactly.
        let up = one([s.phi_up.cos(), 0.0, s.phi_up.sin()], &s);
        assert!(up.v.abs() < 1e-12, "{}", up.v);
        assert_eq!(up.pixel.unwrap().0, 0);
        let down = one([s.phi_down.cos(), 0.0, -s.phi_down.sin()], &s);
        assert!((down.v - 64.0).abs() < 1e-12, "{}", down.v);
        assert_eq!(down.pixel.unwrap().0, 63);
    }

    #[test]
    fn outside_elevation_is_masked() {
        let s = sensor();
        assert!(one([1.0, 0.0, 0.2], &s).pixel.is_none());
        assert!(one([1.0, 0.0, -0.6], &s).pixel.is_none());
    }

    #[test]
    fn reference_point_values() {
        // 40-digit evaluation: u = 180.437187762978..., v = 6.857142857142857...
        let g = one([3.0, 4.0, 0.0], &sensor());
        assert!((g.u - 180.437_187_762_978_16).abs() < 1e-9, "{}", g.u);
        assert!((g.v - 6.857_142_857_142_857).abs() < 1e-9, "{}", g.v);
        assert_eq!(g.depth, 5.0);
        assert_eq!(g.pixel, Some((6, 180)));
    }

    #[test]
    fn origin_point_is_an_error() {
        let c = PointCloud::from_positions(vec![[1.0, 0.0, 0.0], [0.0; 3]]).unwrap();
        let err = project_cylindrical(&c, &sensor()).unwrap_err();
        assert!(err.to_string().starts_with("record 1"), "{err}");
    }

    #[test]
    fn sensor_origin_shifts_points() {
        let s = sensor().with_origin([1.0, 1.0, 0.0]);
        let g = one([2.0, 1.0, 0.0], &s);
        assert_eq!(g.u, 256.0);
        assert_eq!(g.depth, 1.0);
    }
}
