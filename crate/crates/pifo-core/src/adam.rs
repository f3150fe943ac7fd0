//! Adam with bias correction.

use alloc::format;
use alloc::vec::Vec;

use crate::nn::ParamSet;
use crate::tensor::Tensor;
use crate::{CoreError, Result};

/// First/second moment estimates for one parameter set.
///
/// The moment tensors are kept parallel to the parameter entries; the step
/// counter advances once per [`adam_step`] call, not once per tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    /// Zeroed moments with the standard coefficients
    /// `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
    pub fn new(params: &ParamSet) -> AdamState {
        AdamState::with_coefficients(params, 0.9, 0.999, 1e-8)
    }

    pub fn with_coefficients(params: &ParamSet, beta1: f64, beta2: f64, eps: f64) -> AdamState {
        AdamState {
            beta1,
            beta2,
            eps,
            step: 0,
            m: params.iter().map(|e| Tensor::zeros(e.value.dims())).collect(),
            v: params.iter().map(|e| Tensor::zeros(e.value.dims())).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update of `params` from their accumulated
/// gradients. Gradients are left untouched; callers zero them between
/// iterations.
pub fn adam_step(params: &mut ParamSet, state: &mut AdamState, lr: f64) -> Result<()> {
    if !(lr.is_finite() && lr > 0.0) {
        return Err(CoreError::Config(format!("learning rate must be positive, got {lr}")));
    }
    if state.m.len() != params.len() {
        return Err(CoreError::State(format!(
            "optimizer tracks {} tensors but parameter set has {}",
            state.m.len(),
            params.len()
        )));
    }
    for (i, m) in state.m.iter().enumerate() {
        if m.dims() != params.entry(i).value.dims() {
            return Err(CoreError::State(format!(
                "optimizer moment shape {:?} does not match parameter {:?} {:?}",
                m.dims(),
                params.entry(i).name,
                params.entry(i).value.dims()
            )));
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - libm::pow(state.beta1, t);
    let bc2 = 1.0 - libm::pow(state.beta2, t);
    for i in 0..params.len() {
        let entry = params.entry_mut(i);
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let g = entry.grad.data();
        let p = entry.value.data_mut();
        for j in 0..p.len() {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= lr * m_hat / (libm::sqrt(v_hat) + state.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Five updates of a single weight against the textbook recurrence,
    /// written out independently on plain scalars.
    #[test]
    fn matches_scalar_recurrence() {
        let mut ps = ParamSet::new();
        ps.insert("w", Tensor::scalar(1.0)).unwrap();
        let mut st = AdamState::new(&ps);
        let lr = 0.1;
        let grads = [0.5, -0.25, 1.0, 0.0, -0.125];

        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        let (mut p, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for (k, &g) in grads.iter().enumerate() {
            let t = (k + 1) as f64;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let m_hat = m / (1.0 - b1.powf(t));
            let v_hat = v / (1.0 - b2.powf(t));
            p -= lr * m_hat / (v_hat.sqrt() + eps);
        }

        for &g in &grads {
            ps.zero_grads();
            ps.entry_mut(0).grad.data_mut()[0] = g;
            adam_step(&mut ps, &mut st, lr).unwrap();
        }
        assert_eq!(st.step_count(), 5);
        let got = ps.entry(0).value.item();
        assert!((got - p).abs() < 1e-12, "{got} vs {p}");
    }

    #[test]
    fn first_step_moves_by_lr_regardless_of_gradient_scale() {
        // With bias correction the first update is lr * g/|g| (up to eps).
        for &g in &[1e-3, 1.0, 1e6] {
            let mut ps = ParamSet::new();
            ps.insert("w", Tensor::scalar(0.0)).unwrap();
            let mut st = AdamState::new(&ps);
            ps.entry_mut(0).grad.data_mut()[0] = g;
            adam_step(&mut ps, &mut st, 0.01).unwrap();
            let moved = ps.entry(0).value.item().abs();
            assert!((moved - 0.01).abs() < 1e-5, "g={g} moved {moved}");
        }
    }

    #[test]
    fn rejects_mismatched_state() {
        let mut a = ParamSet::new();
        a.insert("w", Tensor::zeros(&[2])).unwrap();
        let mut st = AdamState::new(&a);
        let mut b = ParamSet::new();
        b.insert("w", Tensor::zeros(&[2])).unwrap();
        b.insert("extra", Tensor::zeros(&[1])).unwrap();
        assert!(matches!(
            adam_step(&mut b, &mut st, 0.1),
            Err(CoreError::State(_))
        ));
        assert!(matches!(
            adam_step(&mut a, &mut st, -1.0),
            Err(CoreError::Config(_))
        ));
    }
}
