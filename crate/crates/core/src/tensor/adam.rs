//! Adam optimizer with bias-corrected moment estimates.

use crate::Scalar;

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

struct Slot<F> {
    m: Vec<F>,
    v: Vec<F>,
}

/// Optimizer state: first and second moment estimates per parameter slot
/// plus the shared step counter.
///
/// Callers must use a stable slot index per parameter and call [`Adam::advance`]
/// once per optimization step before updating slots.
pub struct Adam<F: Scalar> {
    config: AdamConfig,
    step: u64,
    slots: Vec<Option<Slot<F>>>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(config: AdamConfig, slot_count: usize) -> Self {
        let mut slots = Vec::with_capacity(slot_count);
        slots.resize_with(slot_count, || None);
        Self {
            config,
            step: 0,
            slots,
        }
    }

    pub fn config(&self) -> AdamConfig {
        self.config
    }

    /// Begins a new optimization step (increments the bias-correction power).
    pub fn advance(&mut self) {
        self.step += 1;
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one Adam update to a parameter slot in place.
    pub fn update(&mut self, slot: usize, value: &mut [F], grad: &[F]) {
        debug_assert!(self.step > 0, "advance() must be called before update()");
        debug_assert_eq!(value.len(), grad.len());
        let state = self.slots[slot].get_or_insert_with(|| Slot {
            m: vec![F::zero(); grad.len()],
            v: vec![F::zero(); grad.len()],
        });
        let b1 = F::from_config(self.config.beta1);
        let b2 = F::from_config(self.config.beta2);
        let one = F::one();
        let lr = F::from_config(self.config.learning_rate);
        let eps = F::from_config(self.config.epsilon);
        let corr1 = F::from_config(1.0 - self.config.beta1.powi(self.step as i32));
        let corr2 = F::from_config(1.0 - self.config.beta2.powi(self.step as i32));
        for ((p, &g), (m, v)) in value
            .iter_mut()
            .zip(grad)
            .zip(state.m.iter_mut().zip(state.v.iter_mut()))
        {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / corr1;
            let v_hat = *v / corr2;
            *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}
