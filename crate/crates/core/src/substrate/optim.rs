use serde::{Deserialize, Serialize};

use super::params::{Grads, ParamSet};
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam moments, step counter and the current learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimState {
    pub lr: f64,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    #[serde(skip)]
    pub m: Vec<Vec<f64>>,
    #[serde(skip)]
    pub v: Vec<Vec<f64>>,
}

impl OptimState {
    pub fn new(params: &ParamSet, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, _, t)| vec![0.0; t.len()]).collect();
        Self {
            lr,
            step: 0,
            beta1: BETA1,
            beta2: BETA2,
            eps: ADAM_EPS,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One Adam update. Parameters flagged non-trainable are left alone; a
/// parameter without a gradient is treated as having a zero gradient.
pub fn adam_step(params: &mut ParamSet, grads: &Grads, state: &mut OptimState) -> Result<()> {
    assert_eq!(grads.len(), params.len(), "gradient set does not match params");
    for (id, g) in grads.iter() {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient(params.name(id).to_string()));
        }
        let t = params.get(id);
        if g.len() != t.len() {
            return Err(Error::ShapeMismatch {
                name: params.name(id).to_string(),
                expected: t.shape(),
                got: (g.len(), 1),
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let step_size = state.lr / bc1;
    for i in 0..params.len() {
        let id = super::params::ParamId(i);
        let g = grads.get(id);
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        let tensor = params.get_mut(id);
        for k in 0..m.len() {
            let gk = g.map_or(0.0, |g| g[k]);
            m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * gk;
            v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * gk * gk;
            if tensor.trainable {
                tensor.data[k] -= step_size * m[k] / ((v[k] / bc2).sqrt() + state.eps);
            }
        }
    }
    Ok(())
}

/// Rescales `grads` in place so their global 2-norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_gradients(grads: &mut Grads, max_norm: f64) -> f64 {
    assert!(max_norm > 0.0, "max_norm must be positive");
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

/// Patience-1 plateau rule: halves the learning rate when the latest
/// validation loss is not lower than the best earlier one. Returns whether
/// the rate was halved.
pub fn halve_lr_on_plateau(state: &mut OptimState, val_history: &[f64]) -> bool {
    let Some((&latest, earlier)) = val_history.split_last() else {
        return false;
    };
    let best = earlier.iter().copied().fold(f64::INFINITY, f64::min);
    if !earlier.is_empty() && latest >= best {
        state.lr /= 2.0;
        true
    } else {
        false
    }
}

/// Early stopping on validation loss: training stops after `max_halvings`
/// plateau-driven learning-rate halvings.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    pub max_halvings: usize,
    halvings: usize,
    history: Vec<f64>,
}

impl EarlyStopping {
    pub fn new(max_halvings: usize) -> Self {
        Self {
            max_halvings,
            halvings: 0,
            history: Vec::new(),
        }
    }

    /// Records a validation loss, applies the plateau rule and reports
    /// whether training should stop.
    pub fn observe(&mut self, state: &mut OptimState, val_loss: f64) -> bool {
        self.history.push(val_loss);
        if halve_lr_on_plateau(state, &self.history) {
            self.halvings += 1;
        }
        self.halvings >= self.max_halvings
    }

    pub fn history(&self) -> &[f64] {
        &self.history
    }

    pub fn best(&self) -> f64 {
        self.history.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::substrate::params::{Init, ParamId};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_param(v: f64) -> ParamSet {
        let mut p = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let id = p.add("x", 1, 1, Init::Zeros, &mut rng);
        p.get_mut(id).data[0] = v;
        p
    }

    fn grad(v: f64) -> Grads {
        let mut g = Grads::new(1);
        g.entry(ParamId(0), 1)[0] = v;
        g
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = scalar_param(0.7);
        let mut s = OptimState::new(&p, 1e-3);
        adam_step(&mut p, &grad(0.0), &mut s).unwrap();
        assert_eq!(p.get(ParamId(0)).data[0], 0.7);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn single_step_magnitude_is_lr() {
        // Bias-corrected first step: m̂ = g, v̂ = g², update = lr·g/(|g|+eps).
        let mut p = scalar_param(0.0);
        let mut s = OptimState::new(&p, 1e-3);
        adam_step(&mut p, &grad(1.0), &mut s).unwrap();
        let expected = -1e-3 * 1.0 / (1.0 + 1e-8);
        assert!((p.get(ParamId(0)).data[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn positive_gradient_decreases_monotonically() {
        let mut p = scalar_param(0.0);
        let mut s = OptimState::new(&p, 1e-3);
        let mut prev = 0.0;
        for _ in 0..20 {
            adam_step(&mut p, &grad(1.0), &mut s).unwrap();
            let x = p.get(ParamId(0)).data[0];
            assert!(x < prev);
            prev = x;
        }
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = scalar_param(0.0);
        let mut s = OptimState::new(&p, 1e-3);
        let err = adam_step(&mut p, &grad(f64::NAN), &mut s).unwrap_err();
        assert!(err.to_string().contains("`x`"));
    }

    #[test]
    fn clipping() {
        let mut g = Grads::new(1);
        g.entry(ParamId(0), 2).copy_from_slice(&[0.0, 4.0]);
        let before = clip_gradients(&mut g, 2.0);
        assert_eq!(before, 4.0);
        assert_eq!(g.get(ParamId(0)).unwrap(), &[0.0, 2.0]);

        let mut h = Grads::new(1);
        h.entry(ParamId(0), 1)[0] = 1.0;
        clip_gradients(&mut h, 2.0);
        assert_eq!(h.get(ParamId(0)).unwrap(), &[1.0]);

        let mut z = Grads::new(1);
        z.entry(ParamId(0), 3);
        clip_gradients(&mut z, 2.0);
        assert_eq!(z.get(ParamId(0)).unwrap(), &[0.0; 3]);
    }

    #[test]
    fn plateau_rule() {
        let p = scalar_param(0.0);
        let mut s = OptimState::new(&p, 1.0);
        assert!(!halve_lr_on_plateau(&mut s, &[3.0, 2.5]));
        assert_eq!(s.lr, 1.0);
        assert!(halve_lr_on_plateau(&mut s, &[2.5, 2.6]));
        assert_eq!(s.lr, 0.5);
        for _ in 0..3 {
            halve_lr_on_plateau(&mut s, &[2.5, 2.5]);
        }
        assert_eq!(s.lr, 1.0 / 16.0);
    }

    #[test]
    fn early_stopping_after_three_halvings() {
        let p = scalar_param(0.0);
        let mut s = OptimState::new(&p, 1.0);
        let mut es = EarlyStopping::new(3);
        assert!(!es.observe(&mut s, 1.0));
        assert!(!es.observe(&mut s, 0.5));
        assert!(!es.observe(&mut s, 0.6));
        assert!(!es.observe(&mut s, 0.7));
        assert!(es.observe(&mut s, 0.5));
        assert_eq!(s.lr, 0.125);
    }
}
