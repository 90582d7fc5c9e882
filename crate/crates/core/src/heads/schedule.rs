use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const WARMUP_FRACTION: f64 = 0.3;
pub const START_DIV: f64 = 25.0;
pub const FINAL_DIV: f64 = 100.0;

/// One-cycle learning rate: linear warmup from `lr_max / 25` to `lr_max`
/// over the first 30% of steps, then cosine decay to `lr_max / 100`.
pub fn lr_schedule(step: usize, total_steps: usize, lr_max: f64) -> Result<f64> {
    if step > total_steps {
        return Err(Error::invalid(format!("step {step} exceeds total {total_steps}")));
    }
    if !(lr_max.is_finite() && lr_max >= 0.0) {
        return Err(Error::Config(format!("invalid peak learning rate {lr_max}")));
    }
    let start = lr_max / START_DIV;
    let end = lr_max / FINAL_DIV;
    if total_steps == 0 {
        return Ok(start);
    }
    let peak = WARMUP_FRACTION * total_steps as f64;
    let s = step as f64;
    if s <= peak {
        if peak == 0.0 {
            return Ok(lr_max);
        }
        return Ok(start + (lr_max - start) * s / peak);
    }
    let t = (s - peak) / (total_steps as f64 - peak);
    Ok(end + 0.5 * (lr_max - end) * (1.0 + (PI * t).cos()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundaries() {
        let lr = 3.5e-4;
        assert_eq!(lr_schedule(0, 1000, lr).unwrap(), lr / 25.0);
        assert!((lr_schedule(300, 1000, lr).unwrap() - lr).abs() < 1e-18);
        assert!((lr_schedule(1000, 1000, lr).unwrap() - lr / 100.0).abs() < 1e-18);
        assert!(lr_schedule(1001, 1000, lr).is_err());
    }

    #[test]
    fn mid_decay_matches_cosine() {
        // halfway through decay the cosine term is zero
        let lr = 1.0;
        let got = lr_schedule(650, 1000, lr).unwrap();
        assert!((got - (0.01 + 0.5 * 0.99)).abs() < 1e-12);
    }

    #[test]
    fn single_peak() {
        let v: Vec<f64> = (0..=200).map(|s| lr_schedule(s, 200, 1.0).unwrap()).collect();
        let top = v.iter().cloned().fold(0.0, f64::max);
        let k = v.iter().position(|x| *x == top).unwrap();
        assert!(v[..=k].windows(2).all(|w| w[0] <= w[1]));
        assert!(v[k..].windows(2).all(|w| w[0] >= w[1]));
    }
}
