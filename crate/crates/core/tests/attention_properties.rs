mod common;

use hexplane::association::{cross_attention_forward, gather_plane_features, AttentionConfig, AttentionInput, AttentionParams};
use hexplane::encoder::FeatureMap;
use hexplane::projection::{hexplane_project, PlaneKind, PlaneSpec, RasterRecipe, SensorConfig, NUM_PLANES};

fn params(cp: usize, cf: usize, heads: usize, residual: bool, seed: u64) -> AttentionParams {
    let cfg = AttentionConfig {
        heads,
        head_dim: 4,
        out_channels: if residual { cp } else { 6 },
        residual,
    };
    AttentionParams::init(cp, cf, &cfg, seed).unwrap()
}

#[test]
fn matches_the_loop_reference() {
    for seed in 0..30u64 {
        let residual = seed % 3 == 0;
        let p = params(5, 7, 1 + seed as usize % 3, residual, seed);
        let input = common::random_attention(seed, 25, 5, 7);
        let (out, _) = cross_attention_forward(input.clone(), &p).unwrap();
        let want = common::naive_attention(&input, &p);
        for (a, b) in out.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12, "seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn single_valid_plane_takes_all_weight() {
    let p = params(3, 4, 2, false, 1);
    let mut input = common::random_attention(2, 1, 3, 4);
    input.valid = vec![false, false, true, false, false, false];
    let (_, cache) = cross_attention_forward(input, &p).unwrap();
    for h in 0..2 {
        assert_eq!(cache.weight(0, 2, h, 2), 1.0);
    }
}

#[test]
fn point_without_planes_is_rejected() {
    let p = params(3, 4, 1, false, 1);
    let mut input = common::random_attention(2, 3, 3, 4);
    input.valid[NUM_PLANES..2 * NUM_PLANES].iter_mut().for_each(|v| *v = false);
    assert!(cross_attention_forward(input, &p).is_err());
}

#[test]
fn offset_along_the_query_direction_raises_the_weight() {
    let p = params(3, 4, 1, false, 7);
    let base = common::random_attention(8, 1, 3, 4);
    let d = p.model_dim();
    let f = &base.point_features;
    let q: Vec<f64> = (0..d).map(|j| (0..3).map(|i| f[i] * p.w_q.data()[i * d + j]).sum()).collect();
    // direction whose embedding aligns with the query
    let t: Vec<f64> = (0..3).map(|i| (0..d).map(|j| p.w_pos.data()[i * d + j] * q[j]).sum()).collect();
    let mut input = AttentionInput {
        valid: vec![true; NUM_PLANES],
        ..base
    };
    let mut last = 0.0;
    for step in 0..6 {
        let s = step as f64 * 0.5;
        input.offsets[4] = [t[0] * s, t[1] * s, t[2] * s];
        let (_, cache) = cross_attention_forward(input.clone(), &p).unwrap();
        let w = cache.weight(0, 4, 0, 1);
        assert!(w > last, "weight {w} did not grow past {last}");
        last = w;
    }
}

fn ramp_maps(hex: &hexplane::projection::HexPlaneSet, channels: usize) -> Vec<FeatureMap> {
    hex.planes
        .iter()
        .map(|pl| {
            let (r, c) = (pl.spec.rows().div_ceil(4), pl.spec.cols().div_ceil(4));
            let mut m = FeatureMap::zeros(r, c, channels);
            for y in 0..r {
                for x in 0..c {
                    for (k, v) in m.pixel_mut(y, x).iter_mut().enumerate() {
                        *v = 2.0 * y as f64 - 0.5 * x as f64 + k as f64;
                    }
                }
            }
            m
        })
        .collect()
}

#[test]
fn gather_is_exact_on_affine_maps() {
    let cloud = common::random_cloud(21, 300, 2);
    let specs: Vec<PlaneSpec> = PlaneKind::ALL
        .iter()
        .map(|&k| match k {
            PlaneKind::Cylindrical => PlaneSpec::cylindrical(SensorConfig::new(0.3, 0.3, 16, 64).unwrap()).unwrap(),
            _ => PlaneSpec::fit_orthographic(k, 32, 40, &cloud, 0.05).unwrap(),
        })
        .collect();
    let hex = hexplane_project(&cloud, &specs, &RasterRecipe::default()).unwrap();
    let maps = ramp_maps(&hex, 3);
    let g = gather_plane_features(&maps, &hex).unwrap();
    for (m, plane) in hex.planes.iter().enumerate() {
        let f = &maps[m];
        for (n, c) in plane.coords.coords.iter().enumerate() {
            let got = g.feature(n, m);
            if !c.in_fov() {
                assert!(!g.valid[n * NUM_PLANES + m]);
                assert!(got.iter().all(|v| *v == 0.0));
                continue;
            }
            let y = (c.v * f.rows as f64 / plane.spec.rows() as f64).clamp(0.0, (f.rows - 1) as f64);
            let x = (c.u * f.cols as f64 / plane.spec.cols() as f64).clamp(0.0, (f.cols - 1) as f64);
            for (k, v) in got.iter().enumerate() {
                let want = 2.0 * y - 0.5 * x + k as f64;
                assert!((v - want).abs() < 1e-9, "plane {m} point {n}: {v} vs {want}");
            }
        }
    }
}

#[test]
fn gather_rejects_wrong_map_shapes() {
    let cloud = common::random_cloud(1, 20, 2);
    let specs: Vec<PlaneSpec> = PlaneKind::ALL
        .iter()
        .map(|&k| match k {
            PlaneKind::Cylindrical => PlaneSpec::cylindrical(SensorConfig::new(0.3, 0.3, 8, 32).unwrap()).unwrap(),
            _ => PlaneSpec::fit_orthographic(k, 8, 8, &cloud, 0.05).unwrap(),
        })
        .collect();
    let hex = hexplane_project(&cloud, &specs, &RasterRecipe::default()).unwrap();
    let mut maps = ramp_maps(&hex, 2);
    maps[3] = FeatureMap::zeros(3, 2, 2);
    assert!(gather_plane_features(&maps, &hex).is_err());
    assert!(gather_plane_features(&maps[..5], &hex).is_err());
}
