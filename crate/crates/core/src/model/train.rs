use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::{augment, PointCloud};
use crate::error::{Error, Result};
use crate::heads::{argmax_rows, lr_schedule, optimizer_step, AdamState, AdamW};
use crate::projection::NUM_PLANES;

use super::{loss_and_grads, Batch, ModelConfig, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr_max: f64,
    pub weight_decay: f64,
    pub aux_weight: f64,
    /// Log every this many steps (and after the last one).
    pub eval_interval: usize,
    /// Random flips about both axes and a random yaw each step.
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 500,
            lr_max: 3.5e-4,
            weight_decay: 0.01,
            aux_weight: 0.4,
            eval_interval: 10,
            augment: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eval_interval == 0 {
            return Err(Error::Config("train.eval_interval must be positive".into()));
        }
        if !(self.aux_weight >= 0.0 && self.aux_weight.is_finite()) {
            return Err(Error::Config("train.aux_weight must be finite and >= 0".into()));
        }
        self.optimizer(self.lr_max).validate()
    }

    fn optimizer(&self, lr: f64) -> AdamW {
        AdamW {
            lr,
            weight_decay: self.weight_decay,
            ..AdamW::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    /// Completed optimizer steps.
    pub step: usize,
    pub lr: f64,
    pub total: f64,
    pub main: f64,
    pub aux: [f64; NUM_PLANES],
    /// Accuracy of the step's predictions on its (augmented) training cloud.
    pub oa: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: Vec<LogRecord>,
}

/// Trains on `scenes` round-robin, one whole scene per step. Deterministic
/// for a fixed `seed`.
pub fn train_toy(model: &ModelConfig, train: &TrainConfig, scenes: &[PointCloud], seed: u64) -> Result<TrainOutcome> {
    model.validate()?;
    train.validate()?;
    if scenes.is_empty() {
        return Err(Error::invalid("no training scenes"));
    }
    for s in scenes {
        if s.labels().is_none() {
            return Err(Error::invalid("training scenes must be labeled"));
        }
        s.check_labels(model.classes as u32)?;
    }
    let mut params = ModelParams::init(model, seed)?;
    let mut state = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_a06e);
    let mut log = Vec::new();
    for step in 0..train.steps {
        let scene = &scenes[step % scenes.len()];
        let cloud = if train.augment {
            let (fx, fy, yaw) = (rng.random_bool(0.5), rng.random_bool(0.5), rng.random_range(0.0..TAU));
            augment(scene, fx, fy, yaw)?
        } else {
            scene.clone()
        };
        let batch = Batch::new(cloud, model)?;
        let lr = lr_schedule(step, train.steps, train.lr_max)?;
        let (report, grads, fwd) =
            loss_and_grads(&params, &batch, train.aux_weight, model.bypass_ham).map_err(|e| at_step(step, e))?;
        optimizer_step(&mut params, &grads, &mut state, &train.optimizer(lr)).map_err(|e| at_step(step, e))?;
        let done = step + 1;
        if done % train.eval_interval == 0 || done == train.steps {
            let labels = batch.labels().expect("checked above");
            let preds = argmax_rows(&fwd.point_logits, model.classes);
            let (hit, n) = preds.iter().zip(labels).fold((0usize, 0usize), |(h, n), (p, l)| match l {
                Some(l) => (h + (*l == *p) as usize, n + 1),
                None => (h, n),
            });
            log.push(LogRecord {
                step: done,
                lr,
                total: report.total,
                main: report.main,
                aux: report.aux,
                oa: hit as f64 / n.max(1) as f64,
            });
        }
    }
    Ok(TrainOutcome { params, log })
}

fn at_step(step: usize, e: Error) -> Error {
    match e {
        Error::Numerical(m) => Error::Numerical(format!("diverged at step {step}: {m}")),
        other => other,
    }
}
