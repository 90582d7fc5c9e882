use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cloud::Label;
use crate::error::{Error, Result};
use crate::projection::ProjectionIndex;

use super::ap::{average_precision, mean_average_precision, PRCurve};
use super::segmentation::{segmentation_scores, ConfusionMatrix};

/// Which samples segmentation metrics are computed over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalDomain {
    #[default]
    Points,
    /// One sample per occupied pixel of the range image (its winner point).
    RangeImage,
}

/// Point indices that own a range-image pixel, in raster order.
pub fn range_image_samples(index: &ProjectionIndex) -> Vec<usize> {
    index.winner.iter().flatten().map(|&n| n as usize).collect()
}

/// Per-class AP with points ranked by their class probability; `None` for
/// classes without labeled points.
pub fn point_average_precision(scores: &[f64], labels: &[Label], classes: usize) -> Result<Vec<Option<f64>>> {
    if scores.len() != labels.len() * classes {
        return Err(Error::shape("scores", labels.len() * classes, scores.len()));
    }
    (0..classes)
        .map(|k| {
            let gt = labels.iter().filter(|l| **l == Some(k as u32)).count();
            if gt == 0 {
                return Ok(None);
            }
            let mut curve = PRCurve::new(gt);
            for (row, l) in scores.chunks_exact(classes).zip(labels) {
                if let Some(l) = l {
                    curve.push(row[k], *l == k as u32);
                }
            }
            average_precision(&curve).map(Some)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub per_class_iou: Vec<Option<f64>>,
    pub miou: f64,
    pub macc: f64,
    pub oa: f64,
    pub ap_per_class: Vec<Option<f64>>,
    pub map: Option<f64>,
}

impl MetricReport {
    /// Scores `N x K` class scores (probabilities or logits) against labels.
    pub fn from_scores(scores: &[f64], labels: &[Label], classes: usize) -> Result<Self> {
        let preds = crate::heads::argmax_rows(scores, classes);
        if preds.len() != labels.len() {
            return Err(Error::shape("scores", labels.len() * classes, scores.len()));
        }
        let mut cm = ConfusionMatrix::new(classes);
        cm.update(&preds, labels)?;
        let seg = segmentation_scores(&cm)?;
        let ap_per_class = point_average_precision(scores, labels, classes)?;
        let map = mean_average_precision(&ap_per_class).ok();
        Ok(MetricReport {
            per_class_iou: seg.per_class_iou,
            miou: seg.miou,
            macc: seg.macc,
            oa: seg.oa,
            ap_per_class,
            map,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let mut s = String::new();
        let _ = writeln!(s, "{:<8} {:>8} {:>8}", "class", "iou", "ap");
        for (k, (iou, ap)) in self.per_class_iou.iter().zip(&self.ap_per_class).enumerate() {
            let _ = writeln!(s, "{:<8} {:>8} {:>8}", k, fmt(*iou), fmt(*ap));
        }
        let _ = writeln!(s, "{:<8} {:>8}", "miou", fmt(Some(self.miou)));
        let _ = writeln!(s, "{:<8} {:>8}", "macc", fmt(Some(self.macc)));
        let _ = writeln!(s, "{:<8} {:>8}", "oa", fmt(Some(self.oa)));
        let _ = writeln!(s, "{:<8} {:>8}", "map", fmt(self.map));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ground_truth_scores_are_perfect() {
        let labels = [Some(0), Some(2), None, Some(1), Some(2)];
        let mut scores = vec![0.0; labels.len() * 3];
        for (i, l) in labels.iter().enumerate() {
            scores[i * 3 + l.unwrap_or(0) as usize] = 1.0;
        }
        let r = MetricReport::from_scores(&scores, &labels, 3).unwrap();
        assert_eq!((r.miou, r.oa, r.map), (1.0, 1.0, Some(1.0)));
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        for key in ["per_class_iou", "miou", "macc", "oa", "ap_per_class", "map"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert!(r.to_table().contains("miou"));
    }
}
