//! Bilinear sampling on feature grids.

use super::FeatureMap;

/// The four `(pixel index, weight)` taps of a bilinear sample at continuous
/// grid position `(y, x)`, clamped to the grid. Weights sum to one.
pub(crate) fn bilinear_taps(y: f64, x: f64, rows: usize, cols: usize) -> [(usize, f64); 4] {
    let y = y.clamp(0.0, (rows - 1) as f64);
    let x = x.clamp(0.0, (cols - 1) as f64);
    let y0 = (y.floor() as usize).min(rows - 1);
    let x0 = (x.floor() as usize).min(cols - 1);
    let y1 = (y0 + 1).min(rows - 1);
    let x1 = (x0 + 1).min(cols - 1);
    let ty = y - y0 as f64;
    let tx = x - x0 as f64;
    [
        (y0 * cols + x0, (1.0 - ty) * (1.0 - tx)),
        (y0 * cols + x1, (1.0 - ty) * tx),
        (y1 * cols + x0, ty * (1.0 - tx)),
        (y1 * cols + x1, ty * tx),
    ]
}

/// Source coordinate of target index `i` with corners aligned.
#[inline]
fn aligned(i: usize, src: usize, dst: usize) -> f64 {
    if dst <= 1 {
        0.0
    } else {
        i as f64 * (src - 1) as f64 / (dst - 1) as f64
    }
}

/// Resample to `rows x cols` with corner-aligned bilinear interpolation.
pub fn resample(map: &FeatureMap, rows: usize, cols: usize) -> FeatureMap {
    let c = map.channels;
    let mut out = FeatureMap::zeros(rows, cols, c);
    for y in 0..rows {
        let sy = aligned(y, map.rows, rows);
        for x in 0..cols {
            let sx = aligned(x, map.cols, cols);
            let dst = &mut out.data[(y * cols + x) * c..(y * cols + x + 1) * c];
            for (px, w) in bilinear_taps(sy, sx, map.rows, map.cols) {
                if w == 0.0 {
                    continue;
                }
                for (d, s) in dst.iter_mut().zip(&map.data[px * c..(px + 1) * c]) {
                    *d += w * s;
                }
            }
        }
    }
    out
}

/// Transpose of [`resample`]: scatter `dout` back onto a `src_rows x src_cols` grid.
pub(crate) fn resample_backward(dout: &FeatureMap, src_rows: usize, src_cols: usize) -> FeatureMap {
    let c = dout.channels;
    let mut din = FeatureMap::zeros(src_rows, src_cols, c);
    for y in 0..dout.rows {
        let sy = aligned(y, src_rows, dout.rows);
        for x in 0..dout.cols {
            let sx = aligned(x, src_cols, dout.cols);
            let g = dout.pixel(y, x);
            for (px, w) in bilinear_taps(sy, sx, src_rows, src_cols) {
                if w == 0.0 {
                    continue;
                }
                for (d, gi) in din.data[px * c..(px + 1) * c].iter_mut().zip(g) {
                    *d += w * gi;
                }
            }
        }
    }
    din
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_survive() {
        let mut m = FeatureMap::zeros(3, 4, 2);
        m.data.iter_mut().for_each(|v| *v = 2.5);
        let up = resample(&m, 7, 9);
        assert!(up.data.iter().all(|v| (*v - 2.5).abs() < 1e-15));
    }

    #[test]
    fn linear_ramp_is_reproduced() {
        let (sr, sc) = (4, 6);
        let mut m = FeatureMap::zeros(sr, sc, 1);
        for y in 0..sr {
            for x in 0..sc {
                m.pixel_mut(y, x)[0] = 0.75 * y as f64 - 1.25 * x as f64 + 3.0;
            }
        }
        let (tr, tc) = (8, 11);
        let up = resample(&m, tr, tc);
        for y in 0..tr {
            for x in 0..tc {
                let sy = y as f64 * (sr - 1) as f64 / (tr - 1) as f64;
                let sx = x as f64 * (sc - 1) as f64 / (tc - 1) as f64;
                let want = 0.75 * sy - 1.25 * sx + 3.0;
                assert!((up.pixel(y, x)[0] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_is_adjoint() {
        // <resample(a), b> == <a, resample_backward(b)>
        let mut a = FeatureMap::zeros(3, 5, 2);
        let mut b = FeatureMap::zeros(6, 4, 2);
        for (i, v) in a.data.iter_mut().enumerate() {
            *v = (i as f64 * 0.37).sin();
        }
        for (i, v) in b.data.iter_mut().enumerate() {
            *v = (i as f64 * 0.91).cos();
        }
        let lhs: f64 = resample(&a, 6, 4).data.iter().zip(&b.data).map(|(x, y)| x * y).sum();
        let rhs: f64 = a.data.iter().zip(&resample_backward(&b, 3, 5).data).map(|(x, y)| x * y).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn taps_at_node_are_exact() {
        let t = bilinear_taps(2.0, 3.0, 4, 5);
        assert_eq!(t[0], (13, 1.0));
        assert!(t[1..].iter().all(|(_, w)| *w == 0.0));
    }
}
