use crate::error::{Error, Result};
use crate::tensor::{ParamSet, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamW {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        AdamW {
            lr: 3.5e-4,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamW {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr.is_finite()
            && self.lr >= 0.0
            && self.weight_decay.is_finite()
            && self.weight_decay >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// First and second moments for every tensor of a parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new<P: ParamSet>(params: &P) -> Self {
        let zeros: Vec<Tensor> = params.tensors().iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        AdamState {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One decoupled-weight-decay Adam update, applied in place. Gradients are
/// checked for finiteness before any parameter is touched.
pub fn optimizer_step<P: ParamSet>(params: &mut P, grads: &P, state: &mut AdamState, opt: &AdamW) -> Result<()> {
    let grads = grads.tensors();
    if grads.len() != state.m.len() {
        return Err(Error::shape("optimizer state", state.m.len(), grads.len()));
    }
    for ((name, g), m) in grads.iter().zip(&state.m) {
        if g.shape() != m.shape() {
            return Err(Error::invalid(format!("state shape mismatch for {name}")));
        }
        if !g.is_finite() {
            return Err(Error::Numerical(format!("non-finite gradient in {name}")));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - opt.beta1.powi(t);
    let bc2 = 1.0 - opt.beta2.powi(t);
    let decay = 1.0 - opt.lr * opt.weight_decay;
    let moments = state.m.iter_mut().zip(state.v.iter_mut());
    for (((_, p), (_, g)), (m, v)) in params.tensors_mut().into_iter().zip(&grads).zip(moments) {
        let it = p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut());
        for (((p, &g), m), v) in it {
            *p *= decay;
            *m = opt.beta1 * *m + (1.0 - opt.beta1) * g;
            *v = opt.beta2 * *v + (1.0 - opt.beta2) * g * g;
            *p -= opt.lr * (*m / bc1) / ((*v / bc2).sqrt() + opt.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heads::Linear;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn linear(i: usize, k: usize, seed: u64) -> Linear {
        Linear::init(i, k, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn zero_gradient_is_pure_decay() {
        let mut p = linear(3, 2, 5);
        let before = p.clone();
        let g = p.zeros_like();
        let mut st = AdamState::new(&p);
        let opt = AdamW::default();
        optimizer_step(&mut p, &g, &mut st, &opt).unwrap();
        let f = 1.0 - opt.lr * opt.weight_decay;
        for ((_, a), (_, b)) in p.tensors().iter().zip(before.tensors()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(*x, y * f);
            }
        }
    }

    #[test]
    fn first_step_matches_hand_formula() {
        let mut p = linear(2, 2, 1);
        let before = p.clone();
        let mut g = p.zeros_like();
        for (i, (_, t)) in g.tensors_mut().into_iter().enumerate() {
            for (j, x) in t.data_mut().iter_mut().enumerate() {
                *x = 0.3 * (i as f64 + 1.0) - 0.2 * j as f64;
            }
        }
        let mut st = AdamState::new(&p);
        let opt = AdamW {
            lr: 1e-2,
            ..AdamW::default()
        };
        optimizer_step(&mut p, &g, &mut st, &opt).unwrap();
        let it = p.tensors().into_iter().zip(before.tensors()).zip(g.tensors());
        for (((_, a), (_, b)), (_, gr)) in it {
            for ((x, y), gv) in a.data().iter().zip(b.data()).zip(gr.data()) {
                // m_hat = g, v_hat = g^2 after one step
                let want = y * (1.0 - opt.lr * opt.weight_decay) - opt.lr * gv / (gv.abs() + opt.eps);
                assert!((x - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = linear(2, 2, 1);
        let mut g = p.zeros_like();
        g.bias.data_mut()[1] = f64::NAN;
        let mut st = AdamState::new(&p);
        let before = p.clone();
        let err = optimizer_step(&mut p, &g, &mut st, &AdamW::default()).unwrap_err();
        assert!(err.to_string().contains("bias"), "{err}");
        assert_eq!(p, before);
        assert_eq!(st.step, 0);
    }
}
