//! Segmentation and detection metrics.
//!
//! Average precision averages `p_interp(r) = max_{r' >= r} p(r')` over the
//! recall values attained at true positives, ranking ties with true
//! positives first.

mod ap;
mod detection;
mod report;
mod segmentation;

pub use ap::{average_precision, mean_average_precision, PRCurve, PRPoint};
pub use detection::{match_detections, Aabb, Detection, GroundTruthBox};
pub use report::{point_average_precision, range_image_samples, EvalDomain, MetricReport};
pub use segmentation::{segmentation_scores, ConfusionMatrix, SegmentationScores};
