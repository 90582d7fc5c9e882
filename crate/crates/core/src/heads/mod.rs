//! Segmentation heads, the composite objective and the optimizer.

mod head;
mod loss;
mod optim;
mod schedule;

pub use head::{aux_head_forward, argmax_rows, point_head_forward, HeadParams, Linear};
pub use loss::{composite_loss, cross_entropy, pool_labels, LossGrads, LossReport, AUX_STRIDE};
pub use optim::{optimizer_step, AdamState, AdamW};
pub use schedule::{lr_schedule, FINAL_DIV, START_DIV, WARMUP_FRACTION};
