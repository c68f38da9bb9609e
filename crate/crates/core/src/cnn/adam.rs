//! Adam with bias correction folded into the step size:
//!
//! ```text
//! m ← β1·m + (1 − β1)·g
//! v ← β2·v + (1 − β2)·g²
//! w ← w − lr · √(1 − β2ᵗ) / (1 − β1ᵗ) · m / (√v + ε)
//! ```
//!
//! This is the Keras/TensorFlow formulation. It equals the textbook
//! `m̂ / (√v̂ + ε')` update with `ε' = ε / √(1 − β2ᵗ)`.

use serde::{Deserialize, Serialize};

use super::{Params, Scalar};
use crate::error::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    /// Number of steps taken so far.
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
        }
    }
}

/// One Adam update. A non-finite gradient leaves weights and state untouched.
pub fn adam_step<T: Scalar>(
    weights: &mut Params<T>,
    grad: &Params<T>,
    state: &mut AdamState<T>,
    learning_rate: f64,
    cfg: &AdamParams,
) -> Result<(), ModelError> {
    if state.m.len() != weights.len() || grad.len() != weights.len() {
        return Err(ModelError::Spec(format!(
            "optimizer state has {} entries, weights {}, gradient {}",
            state.m.len(),
            weights.len(),
            grad.len()
        )));
    }
    if !grad.all_finite() {
        return Err(ModelError::NonFinite("gradient"));
    }
    state.t += 1;
    let t = state.t as i32;
    let lr_t = learning_rate * (1.0 - cfg.beta2.powi(t)).sqrt() / (1.0 - cfg.beta1.powi(t));
    let (b1, b2) = (T::from_f64(cfg.beta1), T::from_f64(cfg.beta2));
    let (one_b1, one_b2) = (T::from_f64(1.0 - cfg.beta1), T::from_f64(1.0 - cfg.beta2));
    let eps = T::from_f64(cfg.epsilon);
    let lr_t = T::from_f64(lr_t);
    for (((w, &g), m), v) in weights
        .as_mut_slice()
        .iter_mut()
        .zip(grad.as_slice())
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = b1 * *m + one_b1 * g;
        *v = b2 * *v + one_b2 * g * g;
        *w = *w - lr_t * *m / (v.sqrt() + eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::Architecture;

    fn filled(value: f64) -> Params<f64> {
        let arch = Architecture::detector(8).unwrap();
        let n = arch.param_count();
        Params::from_vec(arch, vec![value; n]).unwrap()
    }

    #[test]
    fn first_step_with_unit_gradient() {
        // m = 0.1, v = 0.001, step = lr·√0.001/0.1 · 0.1/(√0.001 + ε) = lr / (1 + ε/√(1 − β2))
        let mut w = filled(0.0);
        let g = filled(1.0);
        let mut st = AdamState::new(w.len());
        adam_step(&mut w, &g, &mut st, 0.001, &AdamParams::default()).unwrap();
        let eps_prime = 1e-7 / (1.0f64 - 0.999).sqrt();
        let expected = -0.001 / (1.0 + eps_prime);
        assert!(w.as_slice().iter().all(|&x| (x - expected).abs() < 1e-15));
        assert_eq!(st.t, 1);
    }

    #[test]
    fn zero_gradient_is_a_no_op_on_fresh_state() {
        let mut w = filled(0.3);
        let g = filled(0.0);
        let mut st = AdamState::new(w.len());
        adam_step(&mut w, &g, &mut st, 0.001, &AdamParams::default()).unwrap();
        assert!(w.as_slice().iter().all(|&x| x == 0.3));
        assert!(st.m.iter().chain(&st.v).all(|&x| x == 0.0));
        assert_eq!(st.t, 1);
    }

    /// Scalar reference written with explicit bias-corrected moments.
    fn reference(grads: &[f64], lr: f64) -> f64 {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-7f64);
        let (mut w, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
        for (i, g) in grads.iter().enumerate() {
            let t = (i + 1) as i32;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let m_hat = m / (1.0 - b1.powi(t));
            let v_hat = v / (1.0 - b2.powi(t));
            let eps_hat = eps / (1.0 - b2.powi(t)).sqrt();
            w -= lr * m_hat / (v_hat.sqrt() + eps_hat);
        }
        w
    }

    #[test]
    fn matches_scalar_reference_trace() {
        for grads in [vec![0.5, 0.5], vec![2.0, -1.0, 0.25, 3.0]] {
            let mut w = filled(0.0);
            let mut st = AdamState::new(w.len());
            for &g in &grads {
                adam_step(&mut w, &filled(g), &mut st, 0.01, &AdamParams::default()).unwrap();
            }
            let expected = reference(&grads, 0.01);
            assert!((w.as_slice()[0] - expected).abs() < 1e-14, "{grads:?}");
        }
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut w = filled(0.0);
        let mut g = filled(0.0);
        g.as_mut_slice()[3] = f64::NAN;
        let mut st = AdamState::new(w.len());
        assert!(adam_step(&mut w, &g, &mut st, 0.001, &AdamParams::default()).is_err());
        assert_eq!(st.t, 0);
        assert!(w.as_slice().iter().all(|&x| x == 0.0));
    }
}
