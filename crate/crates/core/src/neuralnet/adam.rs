use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuralnet::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam optimizer state for one flat parameter vector.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub t: u64,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig, n: usize) -> Adam<T> {
        Adam {
            config,
            t: 0,
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
        }
    }

    /// Apply one update. Rejects non-finite gradients without touching state.
    pub fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::LengthMismatch {
                expected: self.m.len(),
                found: if params.len() != self.m.len() { params.len() } else { grads.len() },
            });
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient at index {i}")));
        }
        self.t += 1;
        let c = &self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (ob1, ob2) = (T::one() - b1, T::one() - b2);
        let t = self.t as i32;
        let bc1 = T::lit(1.0 - c.beta1.powi(t));
        let bc2 = T::lit(1.0 - c.beta2.powi(t));
        let lr = T::lit(c.lr);
        let eps = T::lit(c.eps);
        for i in 0..params.len() {
            let g = grads[i];
            let m = b1 * self.m[i] + ob1 * g;
            let v = b2 * self.v[i] + ob2 * g * g;
            self.m[i] = m;
            self.v[i] = v;
            let mhat = m / bc1;
            let vhat = v / bc2;
            params[i] -= lr * mhat / (vhat.sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut adam = Adam::<f64>::new(AdamConfig::default(), 3);
        let mut p = vec![1.0, -2.0, 0.5];
        adam.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn first_step_closed_form() {
        // m̂ = g and v̂ = g², so the step is -lr·g / (|g| + eps).
        let mut adam = Adam::<f64>::new(AdamConfig::default(), 1);
        let mut p = vec![0.0];
        adam.step(&mut p, &[1.0]).unwrap();
        let want = -1e-3 / (1.0 + 1e-8);
        assert!((p[0] - want).abs() < 1e-15, "{} vs {want}", p[0]);
    }

    #[test]
    fn constant_gradient_decreases_monotonically() {
        let mut adam = Adam::<f32>::new(AdamConfig::default(), 1);
        let mut p = vec![0.0f32];
        let mut prev = p[0];
        for _ in 0..50 {
            adam.step(&mut p, &[1.0]).unwrap();
            assert!(p[0] < prev);
            prev = p[0];
        }
    }

    #[test]
    fn rejects_non_finite() {
        let mut adam = Adam::<f64>::new(AdamConfig::default(), 2);
        let mut p = vec![0.0, 0.0];
        assert!(matches!(adam.step(&mut p, &[0.0, f64::NAN]), Err(Error::NonFinite(_))));
        assert_eq!(adam.t, 0);
        assert!(adam.step(&mut p, &[0.0]).is_err());
    }
}
