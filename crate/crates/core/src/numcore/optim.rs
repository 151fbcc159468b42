use crate::error::{Error, Result};

use super::ParamVector;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adaptive-moment optimizer state, owned by the caller.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(num_params: usize) -> Self {
        Self::with_config(num_params, AdamConfig::default())
    }

    pub fn with_config(num_params: usize, config: AdamConfig) -> Self {
        Adam {
            config,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one bias-corrected update. A non-finite gradient leaves both the
    /// parameters and the state untouched.
    pub fn step(&mut self, params: &mut ParamVector, grad: &ParamVector, lr: f64) -> Result<()> {
        if !params.same_layout(grad) || self.m.len() != params.len() {
            return Err(Error::Dimension {
                context: "optimizer step",
                expected: params.len(),
                actual: grad.len(),
            });
        }
        if let Some(segment) = grad.first_non_finite_segment() {
            return Err(Error::NonFiniteGradient { segment });
        }
        let AdamConfig { beta1, beta2, eps } = self.config;
        self.t += 1;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (((p, &g), m), v) in params
            .values_mut()
            .iter_mut()
            .zip(grad.values())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Plain gradient descent; the step is proportional to the gradient.
pub fn sgd_step(params: &mut ParamVector, grad: &ParamVector, lr: f64) -> Result<()> {
    if !params.same_layout(grad) {
        return Err(Error::Dimension {
            context: "optimizer step",
            expected: params.len(),
            actual: grad.len(),
        });
    }
    if let Some(segment) = grad.first_non_finite_segment() {
        return Err(Error::NonFiniteGradient { segment });
    }
    for (p, g) in params.values_mut().iter_mut().zip(grad.values()) {
        *p -= lr * g;
    }
    Ok(())
}

/// Optimizer choice with its state.
#[derive(Clone, Debug, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam(Adam),
}

impl Optimizer {
    pub fn adam(num_params: usize) -> Self {
        Optimizer::Adam(Adam::new(num_params))
    }

    pub fn step(&mut self, params: &mut ParamVector, grad: &ParamVector, lr: f64) -> Result<()> {
        match self {
            Optimizer::Sgd => sgd_step(params, grad, lr),
            Optimizer::Adam(adam) => adam.step(params, grad, lr),
        }
    }
}

pub fn optimizer_step(
    params: &mut ParamVector,
    grad: &ParamVector,
    state: &mut Adam,
    lr: f64,
) -> Result<()> {
    state.step(params, grad, lr)
}
