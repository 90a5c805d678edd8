//! Adam with bias-corrected moments.
//!
//! ```text
//! m ← β1·m + (1−β1)·g
//! v ← β2·v + (1−β2)·g²
//! p ← p − lr · (m / (1−β1^t)) / (√(v / (1−β2^t)) + ε)
//! ```

use super::{ParamSet, Result, TensorError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step_count: u64,
    names: Vec<String>,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl AdamState {
    /// Zeroed moments shaped like `params`.
    pub fn new(params: &ParamSet, config: AdamConfig) -> Self {
        let names = params.names().map(str::to_owned).collect();
        let m: Vec<Vec<f32>> = params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        Self {
            config,
            step_count: 0,
            names,
            v: m.clone(),
            m,
        }
    }

    /// Rebuilds a state from serialized moments.
    pub fn from_parts(config: AdamConfig, step_count: u64, moments: Vec<(String, Vec<f32>, Vec<f32>)>) -> Result<Self> {
        let mut s = Self {
            config,
            step_count,
            names: Vec::new(),
            m: Vec::new(),
            v: Vec::new(),
        };
        for (name, m, v) in moments {
            if m.len() != v.len() {
                return Err(TensorError::Contract(format!("moment lengths differ for {name}")));
            }
            s.names.push(name);
            s.m.push(m);
            s.v.push(v);
        }
        Ok(s)
    }

    pub fn set_lr(&mut self, lr: f32) {
        self.config.lr = lr;
    }

    /// `(name, first moment, second moment)` in parameter order.
    pub fn moments(&self) -> impl Iterator<Item = (&str, &[f32], &[f32])> {
        self.names
            .iter()
            .zip(&self.m)
            .zip(&self.v)
            .map(|((n, m), v)| (n.as_str(), m.as_slice(), v.as_slice()))
    }

    /// Applies one update to every parameter, then zeroes the gradients.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        if params.len() != self.names.len() {
            return Err(TensorError::Contract(format!(
                "optimizer tracks {} parameters, got {}",
                self.names.len(),
                params.len()
            )));
        }
        for ((name, t), (expected, m)) in params.iter().zip(self.names.iter().zip(&self.m)) {
            if name != expected || t.numel() != m.len() {
                return Err(TensorError::Contract(format!(
                    "parameter {name} does not match optimizer slot {expected}"
                )));
            }
            if t.grad().is_none() {
                return Err(TensorError::Contract(format!("missing gradient for {name}")));
            }
        }

        self.step_count += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step_count as i32;
        let bc1 = (1.0 - (beta1 as f64).powi(t)) as f32;
        let bc2 = (1.0 - (beta2 as f64).powi(t)) as f32;

        for ((_, tensor), (m, v)) in params.iter_mut().zip(self.m.iter_mut().zip(&mut self.v)) {
            let (grad, data) = tensor.grad_and_data_mut();
            let grad = grad.expect("checked above");
            for i in 0..data.len() {
                let g = grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                data[i] -= lr * mhat / (vhat.sqrt() + eps);
                grad[i] = 0.0;
            }
        }
        Ok(())
    }
}

/// Convenience wrapper matching the `adam_step(params, state)` shape.
pub fn adam_step(params: &mut ParamSet, state: &mut AdamState) -> Result<()> {
    state.step(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn single(value: f32, grad: Option<f32>) -> ParamSet {
        let mut p = ParamSet::new();
        let mut t = Tensor::scalar(value);
        if let Some(g) = grad {
            t.accumulate_grad(&[g]).unwrap();
        }
        p.insert("w", t);
        p
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = single(0.0, Some(1.0));
        let mut s = AdamState::new(
            &p,
            AdamConfig {
                lr: 0.1,
                ..Default::default()
            },
        );
        adam_step(&mut p, &mut s).unwrap();
        let w = p.get("w").unwrap();
        assert!((w.data()[0] + 0.1).abs() < 1e-6);
        assert_eq!(s.step_count, 1);
        assert_eq!(w.grad().unwrap(), &[0.0]);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = single(0.75, Some(0.0));
        let mut s = AdamState::new(&p, AdamConfig::default());
        for _ in 0..3 {
            s.step(&mut p).unwrap();
        }
        assert_eq!(p.get("w").unwrap().data(), &[0.75]);
        assert_eq!(s.step_count, 3);
    }

    #[test]
    fn missing_gradient_is_rejected() {
        let mut p = single(0.0, None);
        let mut s = AdamState::new(&p, AdamConfig::default());
        assert!(matches!(s.step(&mut p), Err(TensorError::Contract(_))));
        assert_eq!(s.step_count, 0);
    }
}
