//! Adam with bias correction, plus the weight initializer shared by all models.

use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::DenseMatrix;

/// A model whose learnable matrices can be listed in a fixed order.
pub trait Parameterized {
    fn param_names(&self) -> Vec<String>;
    fn params(&self) -> Vec<&DenseMatrix>;
    fn params_mut(&mut self) -> Vec<&mut DenseMatrix>;

    /// Records every parameter as a tracked leaf, in `params()` order.
    fn bind(&self, tape: &mut Tape) -> Result<Vec<Var>> {
        self.params().into_iter().map(|p| tape.param(p)).collect()
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.data().len()).sum()
    }
}

#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<DenseMatrix>,
    second: Vec<DenseMatrix>,
}

impl AdamState {
    /// Zero-initialized moments shaped like `params`, β1=0.9, β2=0.999, ε=1e-8.
    pub fn new<'a>(lr: f64, params: impl IntoIterator<Item = &'a DenseMatrix>) -> Self {
        let (first, second): (Vec<_>, Vec<_>) = params
            .into_iter()
            .map(|p| {
                (
                    DenseMatrix::zeros(p.rows(), p.cols()),
                    DenseMatrix::zeros(p.rows(), p.cols()),
                )
            })
            .unzip();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first,
            second,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update of `params` in place.
    pub fn step(&mut self, params: &mut [&mut DenseMatrix], grads: &[DenseMatrix]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(Error::shape(
                "adam_step",
                format!(
                    "{} params, {} grads, {} moment slots",
                    params.len(),
                    grads.len(),
                    self.first.len()
                ),
            ));
        }
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.first[k].shape() {
                return Err(Error::shape(
                    "adam_step",
                    format!(
                        "slot {k}: param {:?}, grad {:?}, moments {:?}",
                        p.shape(),
                        g.shape(),
                        self.first[k].shape()
                    ),
                ));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.first[k].data_mut();
            let v = self.second[k].data_mut();
            for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Uniform in ±√(6 / (fan_in + fan_out)).
pub fn glorot_uniform(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> DenseMatrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-limit..limit))
        .collect();
    DenseMatrix::from_vec(fan_in, fan_out, data).expect("sized")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_noop() {
        let mut w = DenseMatrix::from_rows(&[[1.0, -2.0], [0.5, 3.0]]);
        let before = w.clone();
        let mut state = AdamState::new(0.01, [&w]);
        for _ in 0..3 {
            state.step(&mut [&mut w], &[DenseMatrix::zeros(2, 2)]).unwrap();
        }
        assert_eq!(w, before);
        assert_eq!(state.step_count(), 3);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // t=1: m̂ = g, v̂ = g², so Δ = -lr · g / (|g| + ε).
        let mut w = DenseMatrix::scalar(0.0);
        let mut state = AdamState::new(0.01, [&w]);
        state.step(&mut [&mut w], &[DenseMatrix::scalar(1.0)]).unwrap();
        let expected = -0.01 * 1.0 / (1.0 + 1e-8);
        assert!((w.data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn identical_params_follow_identical_trajectories() {
        let mut a = DenseMatrix::scalar(0.7);
        let mut b = DenseMatrix::scalar(0.7);
        let mut state = AdamState::new(0.01, [&a, &b]);
        for i in 0..20 {
            let g = DenseMatrix::scalar((i as f64).sin());
            state.step(&mut [&mut a, &mut b], &[g.clone(), g]).unwrap();
        }
        assert_eq!(a.data()[0].to_bits(), b.data()[0].to_bits());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut w = DenseMatrix::zeros(2, 2);
        let mut state = AdamState::new(0.01, [&w]);
        let err = state.step(&mut [&mut w], &[DenseMatrix::zeros(1, 2)]);
        assert!(matches!(err, Err(Error::Shape { .. })));
        assert_eq!(state.step_count(), 0);
    }
}
