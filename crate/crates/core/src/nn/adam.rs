//! Adam with bias correction and a per-epoch multiplicative learning-rate
//! decay.

use super::array::Array2;
use super::{NnError, Param};

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub base_lr: f64,
    /// Learning-rate multiplier applied once per epoch:
    /// `lr(epoch) = base_lr * decay^(epoch - 1)` for 1-based epochs.
    pub decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn new(base_lr: f64, decay: f64) -> AdamConfig {
        AdamConfig {
            base_lr,
            decay,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn lr_for_epoch(&self, epoch: usize) -> f64 {
        debug_assert!(epoch >= 1, "epochs are 1-based");
        self.base_lr * self.decay.powi(epoch as i32 - 1)
    }
}

struct Moments {
    m: Array2,
    v: Array2,
}

/// Optimizer state: first/second moments per parameter group, keyed by the
/// order in which groups are visited (which must be stable).
pub struct Adam {
    cfg: AdamConfig,
    moments: Vec<Moments>,
    /// Update counter, shared across groups.
    step: u64,
    lr: f64,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Adam {
        Adam {
            lr: cfg.base_lr,
            cfg,
            moments: Vec::new(),
            step: 0,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.cfg
    }

    /// Set the effective learning rate for the given 1-based epoch.
    pub fn start_epoch(&mut self, epoch: usize) {
        self.lr = self.cfg.lr_for_epoch(epoch);
    }

    pub fn effective_lr(&self) -> f64 {
        self.lr
    }

    /// Begin one update over all parameter groups. Groups must then be fed
    /// to [`AdamStep::update`] in the same order every time.
    pub fn begin_step(&mut self) -> AdamStep<'_> {
        self.step += 1;
        AdamStep { adam: self, index: 0 }
    }
}

/// In-progress update; visits parameter groups in a fixed order.
pub struct AdamStep<'a> {
    adam: &'a mut Adam,
    index: usize,
}

impl AdamStep<'_> {
    /// Apply the Adam update for one parameter group. `name` is used in
    /// error messages when a non-finite gradient is encountered.
    pub fn update(&mut self, name: &str, param: &mut Param) -> Result<(), NnError> {
        let adam = &mut *self.adam;
        if self.index == adam.moments.len() {
            adam.moments.push(Moments {
                m: Array2::zeros(param.value.rows(), param.value.cols()),
                v: Array2::zeros(param.value.rows(), param.value.cols()),
            });
        }
        let moments = &mut adam.moments[self.index];
        self.index += 1;
        assert_eq!(
            moments.m.len(),
            param.value.len(),
            "parameter group order changed between steps"
        );
        if !param.grad.is_finite() {
            return Err(NnError::NonFiniteGradient { name: name.to_string() });
        }
        let cfg = &adam.cfg;
        let t = adam.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        let m = moments.m.as_mut_slice();
        let v = moments.v.as_mut_slice();
        let g = param.grad.as_slice();
        let p = param.value.as_mut_slice();
        for k in 0..g.len() {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            p[k] -= adam.lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
        Ok(())
    }
}
