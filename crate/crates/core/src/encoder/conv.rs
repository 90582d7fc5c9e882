//! 3x3, stride-2, zero-padded convolution over channel-minor feature maps.

use super::FeatureMap;
use crate::tensor::{mat_vec_acc, outer_acc, vec_mat_acc};

pub(crate) const KERNEL: usize = 3;

pub(crate) fn out_dim(n: usize) -> usize {
    n.div_ceil(2)
}

/// Input pixel feeding kernel tap `k` of output index `o`, if inside the map.
#[inline]
fn tap(o: usize, k: usize, n: usize) -> Option<usize> {
    (2 * o + k).checked_sub(1).filter(|&i| i < n)
}

/// `weight` is `[3, 3, C_in, C_out]`, `bias` is `[C_out]`.
pub(crate) fn conv_forward(input: &FeatureMap, weight: &[f64], bias: &[f64]) -> FeatureMap {
    let (ci, co) = (input.channels, bias.len());
    debug_assert_eq!(weight.len(), KERNEL * KERNEL * ci * co);
    let mut out = FeatureMap::zeros(out_dim(input.rows), out_dim(input.cols), co);
    for oy in 0..out.rows {
        for ox in 0..out.cols {
            let o = (oy * out.cols + ox) * co;
            let acc = &mut out.data[o..o + co];
            acc.copy_from_slice(bias);
            for ky in 0..KERNEL {
                let Some(iy) = tap(oy, ky, input.rows) else { continue };
                for kx in 0..KERNEL {
                    let Some(ix) = tap(ox, kx, input.cols) else { continue };
                    let w = &weight[(ky * KERNEL + kx) * ci * co..(ky * KERNEL + kx + 1) * ci * co];
                    vec_mat_acc(input.pixel(iy, ix), w, co, acc);
                }
            }
        }
    }
    out
}

/// Accumulates weight/bias gradients; returns the input gradient when asked.
pub(crate) fn conv_backward(
    input: &FeatureMap,
    weight: &[f64],
    dout: &FeatureMap,
    dweight: &mut [f64],
    dbias: &mut [f64],
    want_input_grad: bool,
) -> Option<FeatureMap> {
    let (ci, co) = (input.channels, dout.channels);
    let mut din = want_input_grad.then(|| FeatureMap::zeros(input.rows, input.cols, ci));
    for oy in 0..dout.rows {
        for ox in 0..dout.cols {
            let g = dout.pixel(oy, ox);
            for (b, gi) in dbias.iter_mut().zip(g) {
                *b += gi;
            }
            for ky in 0..KERNEL {
                let Some(iy) = tap(oy, ky, input.rows) else { continue };
                for kx in 0..KERNEL {
                    let Some(ix) = tap(ox, kx, input.cols) else { continue };
                    let k = (ky * KERNEL + kx) * ci * co;
                    outer_acc(input.pixel(iy, ix), g, &mut dweight[k..k + ci * co]);
                    if let Some(din) = din.as_mut() {
                        mat_vec_acc(&weight[k..k + ci * co], g, din.pixel_mut(iy, ix));
                    }
                }
            }
        }
    }
    din
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    /// Direct textbook convolution on a CHW layout with explicit padding.
    fn naive(input: &[Vec<Vec<f64>>], w: &[Vec<Vec<Vec<f64>>>], b: &[f64]) -> Vec<Vec<Vec<f64>>> {
        let (ci, h, wd) = (input.len(), input[0].len(), input[0][0].len());
        let (ho, wo) = ((h + 2 - 3) / 2 + 1, (wd + 2 - 3) / 2 + 1);
        let pad = |c: usize, y: isize, x: isize| -> f64 {
            if y < 0 || x < 0 || y as usize >= h || x as usize >= wd {
                0.0
            } else {
                input[c][y as usize][x as usize]
            }
        };
        (0..b.len())
            .map(|o| {
                (0..ho)
                    .map(|y| {
                        (0..wo)
                            .map(|x| {
                                let mut s = b[o];
                                for c in 0..ci {
                                    for ky in 0..3 {
                                        for kx in 0..3 {
                                            s += w[o][c][ky][kx]
                                                * pad(c, (2 * y + ky) as isize - 1, (2 * x + kx) as isize - 1);
                                        }
                                    }
                                }
                                s
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (h, wd, ci, co) in [(5, 5, 1, 1), (5, 5, 1, 3), (6, 7, 2, 4), (1, 1, 3, 2)] {
            let chw: Vec<Vec<Vec<f64>>> = (0..ci)
                .map(|_| (0..h).map(|_| (0..wd).map(|_| rng.random_range(-1.0..1.0)).collect()).collect())
                .collect();
            let w4: Vec<Vec<Vec<Vec<f64>>>> = (0..co)
                .map(|_| {
                    (0..ci)
                        .map(|_| (0..3).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect())
                        .collect()
                })
                .collect();
            let b: Vec<f64> = (0..co).map(|_| rng.random_range(-1.0..1.0)).collect();

            let mut input = FeatureMap::zeros(h, wd, ci);
            for c in 0..ci {
                for y in 0..h {
                    for x in 0..wd {
                        input.pixel_mut(y, x)[c] = chw[c][y][x];
                    }
                }
            }
            let mut weight = vec![0.0; 9 * ci * co];
            for o in 0..co {
                for c in 0..ci {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            weight[((ky * 3 + kx) * ci + c) * co + o] = w4[o][c][ky][kx];
                        }
                    }
                }
            }
            let got = conv_forward(&input, &weight, &b);
            let want = naive(&chw, &w4, &b);
            assert_eq!((got.rows, got.cols), (want[0].len(), want[0][0].len()));
            for o in 0..co {
                for y in 0..got.rows {
                    for x in 0..got.cols {
                        assert!((got.pixel(y, x)[o] - want[o][y][x]).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn output_dims_are_ceil_half() {
        assert_eq!(out_dim(64), 32);
        assert_eq!(out_dim(5), 3);
        assert_eq!(out_dim(1), 1);
    }
}
