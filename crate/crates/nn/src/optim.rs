use crate::{ParameterStore, Tensor};

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(store: &ParameterStore, lr: f64) -> Self {
        assert!(lr > 0.0, "learning rate must be positive");
        let zeros: Vec<Tensor> = store
            .ids()
            .map(|id| Tensor::zeros(store.value(id).shape()))
            .collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Update every parameter from its accumulated gradient.
    pub fn step(&mut self, store: &mut ParameterStore) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let ids: Vec<_> = store.ids().collect();
        for (k, id) in ids.into_iter().enumerate() {
            let grad = store.grad(id).data().to_vec();
            let (m, v) = (self.m[k].data_mut(), self.v[k].data_mut());
            let w = store.value_mut(id).data_mut();
            for i in 0..grad.len() {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                w[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Rescale gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(store: &mut ParameterStore, max_norm: f64) -> f64 {
    let ids: Vec<_> = store.ids().collect();
    let norm = ids
        .iter()
        .flat_map(|&id| store.grad(id).data().iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        for id in ids {
            for g in store.grad_mut(id).data_mut() {
                *g *= s;
            }
        }
    }
    norm
}
