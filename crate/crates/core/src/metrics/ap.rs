use crate::error::{Error, Result};

/// Ranked detections for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct PRCurve {
    detections: Vec<(f64, bool)>,
    num_gt: usize,
}

/// A point on the ranked list: recall and precision after that detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PRPoint {
    pub recall: f64,
    pub precision: f64,
    pub true_positive: bool,
}

impl PRCurve {
    pub fn new(num_gt: usize) -> Self {
        PRCurve {
            detections: Vec::new(),
            num_gt,
        }
    }

    pub fn push(&mut self, score: f64, true_positive: bool) {
        self.detections.push((score, true_positive));
    }

    pub fn num_gt(&self) -> usize {
        self.num_gt
    }

    pub fn detections(&self) -> &[(f64, bool)] {
        &self.detections
    }

    /// Ranked by descending score; true positives precede false positives
    /// within a tie and insertion order decides the rest.
    pub fn ranked(&self) -> Vec<PRPoint> {
        let mut order: Vec<usize> = (0..self.detections.len()).collect();
        order.sort_by(|&a, &b| {
            let (sa, ta) = self.detections[a];
            let (sb, tb) = self.detections[b];
            sb.total_cmp(&sa).then(tb.cmp(&ta))
        });
        let mut tp = 0usize;
        order
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                let hit = self.detections[d].1;
                tp += hit as usize;
                PRPoint {
                    recall: tp as f64 / self.num_gt.max(1) as f64,
                    precision: tp as f64 / (i + 1) as f64,
                    true_positive: hit,
                }
            })
            .collect()
    }

    /// `(r, p_interp(r))` for every recall attained at a true positive.
    pub fn interpolated(&self) -> Vec<(f64, f64)> {
        let ranked = self.ranked();
        let mut best = vec![0.0; ranked.len()];
        let mut run = 0.0f64;
        for (i, p) in ranked.iter().enumerate().rev() {
            run = run.max(p.precision);
            best[i] = run;
        }
        ranked
            .iter()
            .zip(best)
            .filter(|(p, _)| p.true_positive)
            .map(|(p, b)| (p.recall, b))
            .collect()
    }
}

/// Mean interpolated precision over the attained recall positions; zero when
/// nothing was found.
pub fn average_precision(curve: &PRCurve) -> Result<f64> {
    if curve.num_gt == 0 {
        return Err(Error::invalid("average precision needs at least one ground-truth instance"));
    }
    if curve.detections.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::invalid("detection score is NaN"));
    }
    let tps = curve.detections.iter().filter(|d| d.1).count();
    if tps > curve.num_gt {
        return Err(Error::invalid(format!("{tps} true positives for {} ground truths", curve.num_gt)));
    }
    let points = curve.interpolated();
    if points.is_empty() {
        return Ok(0.0);
    }
    Ok(points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64)
}

/// Arithmetic mean over classes that have ground truth (`Some`).
pub fn mean_average_precision(aps: &[Option<f64>]) -> Result<f64> {
    let present: Vec<f64> = aps.iter().flatten().copied().collect();
    if present.is_empty() {
        return Err(Error::invalid("no class has ground truth"));
    }
    Ok(present.iter().sum::<f64>() / present.len() as f64)
}
