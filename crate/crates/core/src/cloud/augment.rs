use super::PointCloud;
use crate::error::{Error, Result};

/// Flip the named axes (sign negation), then rotate about +z by `rotate_z`
/// radians. Labels and extra features are carried unchanged.
pub fn augment(cloud: &PointCloud, flip_x: bool, flip_y: bool, rotate_z: f64) -> Result<PointCloud> {
    if !rotate_z.is_finite() {
        return Err(Error::invalid("rotation angle must be finite"));
    }
    let (s, c) = rotate_z.sin_cos();
    let positions = cloud
        .positions()
        .iter()
        .map(|&[x, y, z]| {
            let x = if flip_x { -x } else { x };
            let y = if flip_y { -y } else { y };
            [c * x - s * y, s * x + c * y, z]
        })
        .collect();
    Ok(cloud.with_positions(positions))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn one(p: [f64; 3]) -> PointCloud {
        PointCloud::from_positions(vec![p]).unwrap()
    }

    #[test]
    fn flip_negates_axis() {
        let out = augment(&one([1.0, 2.0, 3.0]), true, false, 0.0).unwrap();
        assert_eq!(out.positions()[0], [-1.0, 2.0, 3.0]);
        let out = augment(&one([1.0, 2.0, 3.0]), false, true, 0.0).unwrap();
        assert_eq!(out.positions()[0], [1.0, -2.0, 3.0]);
    }

    #[test]
    fn quarter_turn() {
        let p = augment(&one([1.0, 0.0, 0.0]), false, false, FRAC_PI_2).unwrap().positions()[0];
        assert!((p[0] - 0.0).abs() < 1e-12 && (p[1] - 1.0).abs() < 1e-12 && p[2] == 0.0);
    }

    #[test]
    fn rotation_preserves_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<[f64; 3]> = (0..1000)
            .map(|_| std::array::from_fn(|_| rng.random_range(-10.0..10.0)))
            .collect();
        let cloud = PointCloud::from_positions(pts.clone()).unwrap();
        let out = augment(&cloud, false, false, rng.random_range(-7.0..7.0)).unwrap();
        for (a, b) in pts.iter().zip(out.positions()) {
            let na = crate::cloud::norm(*a);
            let nb = crate::cloud::norm(*b);
            assert!((na - nb).abs() <= 1e-12 * na.max(1.0));
        }
    }

    #[test]
    fn non_finite_angle_rejected() {
        assert!(augment(&one([1.0, 0.0, 0.0]), false, false, f64::NAN).is_err());
    }
}
