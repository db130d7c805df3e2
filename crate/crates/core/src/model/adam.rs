//! Adaptive-moment optimizer with a two-phase step-decay schedule.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// `initial` for the first `decay_after` epochs, `decayed` afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial: f64,
    pub decayed: f64,
    pub decay_after: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            initial: 5e-5,
            decayed: 5e-6,
            decay_after: 10,
        }
    }
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        Self {
            initial: lr,
            decayed: lr,
            decay_after: usize::MAX,
        }
    }

    /// Rate for the 0-based `epoch`.
    pub fn lr(&self, epoch: usize) -> f64 {
        if epoch < self.decay_after {
            self.initial
        } else {
            self.decayed
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Moments {
    first: Vec<f64>,
    second: Vec<f64>,
}

/// Per-tensor moment accumulators keyed by tensor name.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    moments: BTreeMap<String, Moments>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Advance the shared step counter. Call once per optimizer step, before
    /// [`update`](Self::update) on each tensor.
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    /// Bias-corrected update of one tensor.
    pub fn update(&mut self, name: &str, param: &mut [f64], grad: &[f64], lr: f64) {
        assert_eq!(param.len(), grad.len(), "gradient shape for {name}");
        assert!(self.step > 0, "begin_step not called");
        let AdamConfig { beta1, beta2, epsilon } = self.config;
        let m = self.moments.entry(name.into()).or_insert_with(|| Moments {
            first: vec![0.0; param.len()],
            second: vec![0.0; param.len()],
        });
        let t = self.step as i32;
        let c1 = 1.0 - libm::pow(beta1, t as f64);
        let c2 = 1.0 - libm::pow(beta2, t as f64);
        for i in 0..param.len() {
            let g = grad[i];
            m.first[i] = beta1 * m.first[i] + (1.0 - beta1) * g;
            m.second[i] = beta2 * m.second[i] + (1.0 - beta2) * g * g;
            let m_hat = m.first[i] / c1;
            let v_hat = m.second[i] / c2;
            param[i] -= lr * m_hat / (libm::sqrt(v_hat) + epsilon);
        }
    }
}
