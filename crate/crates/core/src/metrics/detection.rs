use crate::error::{Error, Result};

use super::ap::PRCurve;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        if (0..3).any(|i| !(min[i] <= max[i]) || !min[i].is_finite() || !max[i].is_finite()) {
            return Err(Error::invalid(format!("degenerate box {min:?} {max:?}")));
        }
        Ok(Aabb { min, max })
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|i| self.max[i] - self.min[i]).product()
    }

    pub fn iou(&self, other: &Aabb) -> f64 {
        let inter: f64 = (0..3)
            .map(|i| (self.max[i].min(other.max[i]) - self.min[i].max(other.min[i])).max(0.0))
            .product();
        let union = self.volume() + other.volume() - inter;
        if union > 0.0 {
            inter / union
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub class: u32,
    pub score: f64,
    pub bbox: Aabb,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthBox {
    pub class: u32,
    pub bbox: Aabb,
}

/// Greedy matching per class: detections in descending score order take the
/// unused ground truth of highest IoU, and count as true positives when that
/// IoU reaches `threshold`.
pub fn match_detections(
    detections: &[Detection],
    truths: &[GroundTruthBox],
    classes: usize,
    threshold: f64,
) -> Result<Vec<PRCurve>> {
    if let Some(d) = detections.iter().find(|d| d.class as usize >= classes || d.score.is_nan()) {
        return Err(Error::invalid(format!("bad detection {d:?}")));
    }
    if let Some(g) = truths.iter().find(|g| g.class as usize >= classes) {
        return Err(Error::invalid(format!("bad ground truth {g:?}")));
    }
    let mut curves = Vec::with_capacity(classes);
    for k in 0..classes as u32 {
        let gts: Vec<&Aabb> = truths.iter().filter(|g| g.class == k).map(|g| &g.bbox).collect();
        let mut dets: Vec<&Detection> = detections.iter().filter(|d| d.class == k).collect();
        dets.sort_by(|a, b| b.score.total_cmp(&a.score));
        let mut used = vec![false; gts.len()];
        let mut curve = PRCurve::new(gts.len());
        for d in dets {
            let mut best: Option<(usize, f64)> = None;
            for (j, g) in gts.iter().enumerate() {
                if used[j] {
                    continue;
                }
                let iou = d.bbox.iou(g);
                if best.is_none_or(|(_, b)| iou > b) {
                    best = Some((j, iou));
                }
            }
            let hit = match best {
                Some((j, iou)) if iou >= threshold => {
                    used[j] = true;
                    true
                }
                _ => false,
            };
            curve.push(d.score, hit);
        }
        curves.push(curve);
    }
    Ok(curves)
}
