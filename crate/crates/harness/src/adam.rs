//! Full-batch Adam with a step-decay schedule.

use serde::{Deserialize, Serialize};
use sosp_core::network::risk_and_gradient;
use sosp_core::numerics::Vector;
use sosp_core::{Dataset, Error, LossModel, NetworkParams, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub iterations: usize,
    /// The learning rate is multiplied by this every `decay_period` steps.
    pub decay_factor: f64,
    pub decay_period: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            iterations: 20_000,
            decay_factor: 0.2,
            decay_period: 2_000,
        }
    }
}

impl AdamConfig {
    /// Learning rate used at 0-based step `t`.
    pub fn rate_at(&self, t: usize) -> f64 {
        let decays = t.checked_div(self.decay_period).unwrap_or(0);
        self.learning_rate * self.decay_factor.powi(decays as i32)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.iterations >= 1
            && self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.decay_factor > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!("invalid Adam configuration {self:?}")))
        }
    }
}

/// First and second moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub first: Vector,
    pub second: Vector,
    pub step: usize,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            first: Vector::zeros(len),
            second: Vector::zeros(len),
            step: 0,
        }
    }

    /// One bias-corrected update of `x` with gradient `g` and rate `lr`.
    pub fn update(&mut self, x: &mut Vector, g: &Vector, lr: f64, cfg: &AdamConfig) {
        self.step += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.step as i32);
        let c2 = 1.0 - cfg.beta2.powi(self.step as i32);
        for j in 0..x.len() {
            self.first[j] = cfg.beta1 * self.first[j] + (1.0 - cfg.beta1) * g[j];
            self.second[j] = cfg.beta2 * self.second[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            let m = self.first[j] / c1;
            let v = self.second[j] / c2;
            x[j] -= lr * m / (v.sqrt() + cfg.epsilon);
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub params: NetworkParams,
    /// Risk before every step, then the final risk.
    pub risk_trace: Vec<f64>,
}

pub fn adam_train(
    start: &NetworkParams,
    data: &Dataset,
    loss: &dyn LossModel,
    cfg: &AdamConfig,
) -> Result<TrainResult> {
    cfg.validate()?;
    let dims = start.dims();
    let activation = start.activation;
    let mut params = start.clone();
    let mut x = params.to_flat();
    let mut state = AdamState::new(x.len());
    let mut risk_trace = Vec::with_capacity(cfg.iterations + 1);
    for t in 0..cfg.iterations {
        let (risk, grad) = risk_and_gradient(&params, data, loss)?;
        risk_trace.push(risk);
        state.update(&mut x, &grad, cfg.rate_at(t), cfg);
        params = NetworkParams::from_flat(dims, activation, &x)?;
    }
    let (risk, _) = risk_and_gradient(&params, data, loss)?;
    risk_trace.push(risk);
    Ok(TrainResult { params, risk_trace })
}
