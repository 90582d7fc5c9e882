use serde::Serialize;

use crate::cloud::Label;
use crate::error::{Error, Result};
use crate::projection::{LabelImage, NUM_PLANES};

/// Feature-grid cell size in raster pixels.
pub const AUX_STRIDE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossReport {
    pub total: f64,
    pub main: f64,
    pub aux: [f64; NUM_PLANES],
    pub aux_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrads {
    /// `N x K`
    pub point: Vec<f64>,
    /// Per plane, `H_f * W_f x K`.
    pub aux: Vec<Vec<f64>>,
}

/// Majority vote of the labeled pixels in each `AUX_STRIDE x AUX_STRIDE`
/// block; ties go to the lower class and all-ignored blocks stay ignored.
pub fn pool_labels(image: &LabelImage, classes: usize) -> LabelImage {
    let rows = image.rows.div_ceil(AUX_STRIDE);
    let cols = image.cols.div_ceil(AUX_STRIDE);
    let mut labels = Vec::with_capacity(rows * cols);
    let mut votes = vec![0usize; classes];
    for r in 0..rows {
        for c in 0..cols {
            votes.iter_mut().for_each(|v| *v = 0);
            for y in r * AUX_STRIDE..((r + 1) * AUX_STRIDE).min(image.rows) {
                for x in c * AUX_STRIDE..((c + 1) * AUX_STRIDE).min(image.cols) {
                    if let Some(l) = image.labels[y * image.cols + x] {
                        if let Some(v) = votes.get_mut(l as usize) {
                            *v += 1;
                        }
                    }
                }
            }
            let mut best: Label = None;
            for (k, &v) in votes.iter().enumerate() {
                if v > 0 && best.is_none_or(|b| v > votes[b as usize]) {
                    best = Some(k as u32);
                }
            }
            labels.push(best);
        }
    }
    LabelImage { rows, cols, labels }
}

/// Mean softmax cross-entropy over labeled rows and its gradient w.r.t. the
/// logits. Returns `None` when no row is labeled.
pub fn cross_entropy(logits: &[f64], labels: &[Label], classes: usize) -> Result<Option<(f64, Vec<f64>)>> {
    if logits.len() != labels.len() * classes {
        return Err(Error::shape("logits", labels.len() * classes, logits.len()));
    }
    let count = labels.iter().filter(|l| l.is_some()).count();
    if count == 0 {
        return Ok(None);
    }
    let inv = 1.0 / count as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; logits.len()];
    for (i, (row, label)) in logits.chunks_exact(classes).zip(labels).enumerate() {
        let Some(y) = *label else { continue };
        let y = y as usize;
        if y >= classes {
            return Err(Error::record(i, format!("label {y} out of range for {classes} classes")));
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        loss += lse - row[y];
        let g = &mut grad[i * classes..(i + 1) * classes];
        for (gk, v) in g.iter_mut().zip(row) {
            *gk = (v - lse).exp() * inv;
        }
        g[y] -= inv;
    }
    Ok(Some((loss * inv, grad)))
}

/// `total = main + aux_weight * sum(aux)`. Planes without a labeled cell
/// contribute zero.
pub fn composite_loss(
    point_logits: &[f64],
    point_labels: &[Label],
    aux_logits: &[Vec<f64>],
    aux_labels: &[LabelImage],
    classes: usize,
    aux_weight: f64,
) -> Result<(LossReport, LossGrads)> {
    if !(aux_weight >= 0.0 && aux_weight.is_finite()) {
        return Err(Error::Config("aux weight must be finite and >= 0".into()));
    }
    if aux_logits.len() != NUM_PLANES || aux_labels.len() != NUM_PLANES {
        return Err(Error::shape("aux planes", NUM_PLANES, aux_logits.len().min(aux_labels.len())));
    }
    let (main, point) = cross_entropy(point_logits, point_labels, classes)?
        .ok_or_else(|| Error::invalid("every point label is ignored"))?;
    let mut aux = [0.0; NUM_PLANES];
    let mut aux_grads = Vec::with_capacity(NUM_PLANES);
    for (m, (logits, labels)) in aux_logits.iter().zip(aux_labels).enumerate() {
        match cross_entropy(logits, &labels.labels, classes)? {
            Some((l, mut g)) => {
                aux[m] = l;
                g.iter_mut().for_each(|v| *v *= aux_weight);
                aux_grads.push(g);
            }
            None => aux_grads.push(vec![0.0; logits.len()]),
        }
    }
    let total = main + aux_weight * aux.iter().sum::<f64>();
    if !total.is_finite() {
        return Err(Error::Numerical("loss is not finite".into()));
    }
    Ok((
        LossReport {
            total,
            main,
            aux,
            aux_weight,
        },
        LossGrads { point, aux: aux_grads },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty_aux(k: usize) -> (Vec<Vec<f64>>, Vec<LabelImage>) {
        let img = LabelImage {
            rows: 1,
            cols: 1,
            labels: vec![None],
        };
        (vec![vec![0.0; k]; NUM_PLANES], vec![img; NUM_PLANES])
    }

    #[test]
    fn hand_computed_three_points() {
        // log(1 + e^-1), log(1 + e^-1), log(1 + e^-2)
        let logits = [1.0, 0.0, 0.0, 1.0, 2.0, 0.0];
        let labels = [Some(0), Some(1), Some(0)];
        let (al, ai) = empty_aux(2);
        let (r, _) = composite_loss(&logits, &labels, &al, &ai, 2, 0.4).unwrap();
        let want = (2.0 * (1.0 + (-1.0f64).exp()).ln() + (1.0 + (-2.0f64).exp()).ln()) / 3.0;
        assert!((r.main - want).abs() < 1e-12, "{} vs {want}", r.main);
        assert_eq!(r.total, r.main);
    }

    #[test]
    fn large_margin_is_nearly_zero() {
        let logits = [20.0, 0.0, 0.0, 20.0];
        let (l, _) = cross_entropy(&logits, &[Some(0), Some(1)], 2).unwrap().unwrap();
        assert!(l < 1e-8 && l > 0.0);
    }

    #[test]
    fn zero_aux_weight_is_main_only() {
        let logits = [0.3, -0.2];
        let img = LabelImage {
            rows: 1,
            cols: 1,
            labels: vec![Some(1)],
        };
        let aux = vec![vec![0.5, 1.0]; NUM_PLANES];
        let imgs = vec![img; NUM_PLANES];
        let (r, g) = composite_loss(&logits, &[Some(0)], &aux, &imgs, 2, 0.0).unwrap();
        assert_eq!(r.total, r.main);
        assert!(r.aux.iter().all(|a| *a > 0.0));
        assert!(g.aux.iter().flatten().all(|v| *v == 0.0));
        let (r, _) = composite_loss(&logits, &[Some(0)], &aux, &imgs, 2, 0.4).unwrap();
        assert!((r.total - (r.main + 0.4 * r.aux.iter().sum::<f64>())).abs() < 1e-12);
    }

    #[test]
    fn all_ignored_is_an_error() {
        let (al, ai) = empty_aux(2);
        assert!(composite_loss(&[0.0, 0.0], &[None], &al, &ai, 2, 0.4).is_err());
    }

    #[test]
    fn majority_pooling() {
        let mut labels = vec![None; 5 * 6];
        labels[0] = Some(1);
        labels[1] = Some(2);
        labels[6] = Some(2);
        labels[4] = Some(0);
        labels[5] = Some(1);
        labels[4 * 6 + 5] = Some(1);
        let img = LabelImage { rows: 5, cols: 6, labels };
        let pooled = pool_labels(&img, 3);
        assert_eq!((pooled.rows, pooled.cols), (2, 2));
        assert_eq!(pooled.labels, vec![Some(2), Some(0), None, Some(1)]);
    }
}
