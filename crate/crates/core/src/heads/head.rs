use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::FeatureMap;
use crate::error::{Error, Result};
use crate::projection::{PlaneKind, NUM_PLANES};
use crate::tensor::{mat_vec_acc, outer_acc, prefixed, prefixed_mut, vec_mat_acc, ParamSet, Tensor};

/// Affine classifier `x W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `[C_in, K]`
    pub weight: Tensor,
    /// `[K]`
    pub bias: Tensor,
}

impl Linear {
    pub(crate) fn init(inputs: usize, classes: usize, rng: &mut ChaCha8Rng) -> Self {
        Linear {
            weight: Tensor::fan_in_uniform(&[inputs, classes], inputs, rng),
            bias: Tensor::zeros(&[classes]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    /// Row-wise logits for `rows x C_in` inputs.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (ci, k) = (self.inputs(), self.classes());
        if !x.len().is_multiple_of(ci) {
            return Err(Error::shape("head input", format!("multiple of {ci}"), x.len()));
        }
        let mut out = vec![0.0; x.len() / ci * k];
        for (xi, oi) in x.chunks_exact(ci).zip(out.chunks_exact_mut(k)) {
            oi.copy_from_slice(self.bias.data());
            vec_mat_acc(xi, self.weight.data(), k, oi);
        }
        Ok(out)
    }

    /// Accumulates parameter gradients into `grads` and returns the input gradient.
    pub fn backward(&self, x: &[f64], dlogits: &[f64], grads: &mut Linear) -> Vec<f64> {
        let (ci, k) = (self.inputs(), self.classes());
        let mut dx = vec![0.0; x.len()];
        for ((xi, gi), dxi) in x.chunks_exact(ci).zip(dlogits.chunks_exact(k)).zip(dx.chunks_exact_mut(ci)) {
            for (b, g) in grads.bias.data_mut().iter_mut().zip(gi) {
                *b += g;
            }
            outer_acc(xi, gi, grads.weight.data_mut());
            mat_vec_acc(self.weight.data(), gi, dxi);
        }
        dx
    }
}

impl ParamSet for Linear {
    fn tensors(&self) -> Vec<(String, &Tensor)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![("weight".into(), &mut self.weight), ("bias".into(), &mut self.bias)]
    }
}

/// The point-level segmentation head and one auxiliary head per plane.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub point: Linear,
    pub aux: Vec<Linear>,
}

impl HeadParams {
    pub fn init(point_inputs: usize, plane_channels: usize, classes: usize, seed: u64) -> Result<Self> {
        if classes < 2 || point_inputs == 0 || plane_channels == 0 {
            return Err(Error::Config("heads need >= 2 classes and positive input widths".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let point = Linear::init(point_inputs, classes, &mut rng);
        let aux = (0..NUM_PLANES).map(|_| Linear::init(plane_channels, classes, &mut rng)).collect();
        Ok(HeadParams { point, aux })
    }

    pub fn classes(&self) -> usize {
        self.point.classes()
    }
}

impl ParamSet for HeadParams {
    fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = prefixed("point", self.point.tensors());
        for (m, a) in self.aux.iter().enumerate() {
            out.extend(prefixed(&format!("aux_{}", PlaneKind::ALL[m].name()), a.tensors()));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = prefixed_mut("point", self.point.tensors_mut());
        for (m, a) in self.aux.iter_mut().enumerate() {
            out.extend(prefixed_mut(&format!("aux_{}", PlaneKind::ALL[m].name()), a.tensors_mut()));
        }
        out
    }
}

/// `N x K` logits from fused per-point features.
pub fn point_head_forward(features: &[f64], params: &HeadParams) -> Result<Vec<f64>> {
    params.point.forward(features)
}

/// Per-pixel logits (`H_f * W_f x K`) of plane `plane` from its fused map.
pub fn aux_head_forward(map: &FeatureMap, plane: usize, params: &HeadParams) -> Result<Vec<f64>> {
    let head = params
        .aux
        .get(plane)
        .ok_or_else(|| Error::invalid(format!("no auxiliary head for plane {plane}")))?;
    if map.channels != head.inputs() {
        return Err(Error::shape("aux head input channels", head.inputs(), map.channels));
    }
    head.forward(&map.data)
}

/// Index of the largest logit per row; ties go to the lower class.
pub fn argmax_rows(logits: &[f64], classes: usize) -> Vec<u32> {
    logits
        .chunks_exact(classes)
        .map(|row| {
            let mut best = 0;
            for (k, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = k;
                }
            }
            best as u32
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_features_zero_bias_zero_logits() {
        let h = HeadParams::init(6, 4, 3, 1).unwrap();
        assert!(point_head_forward(&[0.0; 12], &h).unwrap().iter().all(|v| *v == 0.0));
        let map = FeatureMap::zeros(2, 3, 4);
        let aux = aux_head_forward(&map, 5, &h).unwrap();
        assert_eq!(aux.len(), 6 * 3);
        assert!(aux.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn shape_errors() {
        let h = HeadParams::init(6, 4, 3, 1).unwrap();
        assert!(point_head_forward(&[0.0; 7], &h).is_err());
        assert!(aux_head_forward(&FeatureMap::zeros(2, 2, 5), 0, &h).is_err());
        assert!(aux_head_forward(&FeatureMap::zeros(2, 2, 4), 6, &h).is_err());
    }

    #[test]
    fn matches_dense_multiply() {
        let h = HeadParams::init(3, 2, 2, 7).unwrap();
        let x = [0.5, -1.0, 2.0, 1.5, 0.25, -0.75];
        let got = point_head_forward(&x, &h).unwrap();
        let w = h.point.weight.data();
        let b = h.point.bias.data();
        for r in 0..2 {
            for k in 0..2 {
                let want = b[k] + (0..3).map(|i| x[r * 3 + i] * w[i * 2 + k]).sum::<f64>();
                assert!((got[r * 2 + k] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn argmax_prefers_lower_on_tie() {
        assert_eq!(argmax_rows(&[1.0, 1.0, 0.0, 0.0, 2.0, 2.0], 3), vec![0, 1]);
    }
}
