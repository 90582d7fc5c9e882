use serde::Serialize;

use crate::cloud::Label;
use crate::error::{Error, Result};

/// `K x K` tallies, rows ground truth and columns prediction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
    ignored: u64,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
            ignored: 0,
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes + pred]
    }

    pub fn ignored(&self) -> u64 {
        self.ignored
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row(&self, k: usize) -> u64 {
        self.counts[k * self.classes..(k + 1) * self.classes].iter().sum()
    }

    pub fn col(&self, k: usize) -> u64 {
        (0..self.classes).map(|t| self.get(t, k)).sum()
    }

    /// Tally one batch. The matrix is left untouched when any entry is out of range.
    pub fn update(&mut self, predictions: &[u32], labels: &[Label]) -> Result<()> {
        if predictions.len() != labels.len() {
            return Err(Error::shape("predictions", labels.len(), predictions.len()));
        }
        for (i, (&p, l)) in predictions.iter().zip(labels).enumerate() {
            if p as usize >= self.classes || l.is_some_and(|l| l as usize >= self.classes) {
                return Err(Error::record(i, format!("class out of range for {} classes", self.classes)));
            }
        }
        for (&p, l) in predictions.iter().zip(labels) {
            match l {
                Some(t) => self.counts[*t as usize * self.classes + p as usize] += 1,
                None => self.ignored += 1,
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::shape("confusion classes", self.classes, other.classes));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.ignored += other.ignored;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentationScores {
    /// `None` for classes with an empty union.
    pub per_class_iou: Vec<Option<f64>>,
    pub miou: f64,
    pub macc: f64,
    pub oa: f64,
}

/// IoU, mean IoU and mean recall over classes present in the ground truth,
/// and overall accuracy.
pub fn segmentation_scores(cm: &ConfusionMatrix) -> Result<SegmentationScores> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::invalid("confusion matrix is empty"));
    }
    let k = cm.classes();
    let mut per_class_iou = Vec::with_capacity(k);
    let (mut iou_sum, mut acc_sum, mut present) = (0.0, 0.0, 0usize);
    let mut trace = 0;
    for c in 0..k {
        let tp = cm.get(c, c);
        let row = cm.row(c);
        let union = row + cm.col(c) - tp;
        trace += tp;
        let iou = (union > 0).then(|| tp as f64 / union as f64);
        per_class_iou.push(iou);
        if row > 0 {
            present += 1;
            iou_sum += iou.unwrap_or(0.0);
            acc_sum += tp as f64 / row as f64;
        }
    }
    Ok(SegmentationScores {
        per_class_iou,
        miou: iou_sum / present as f64,
        macc: acc_sum / present as f64,
        oa: trace as f64 / total as f64,
    })
}
