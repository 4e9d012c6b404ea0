use super::{Grads, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Multiplicative learning-rate drop.
    pub decay: f64,
    /// Steps between drops; 0 keeps the rate constant.
    pub decay_every: u64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            decay: 0.999,
            decay_every: 0,
        }
    }
}

/// Drop interval so that `lr · decay^(total/k)` reaches `final_lr` by step `total`.
pub fn decay_interval(total_steps: u64, lr: f64, final_lr: f64, decay: f64) -> u64 {
    if !(decay > 0.0 && decay < 1.0) || final_lr >= lr || final_lr <= 0.0 {
        return 0;
    }
    let drops = libm::ceil(libm::log(final_lr / lr) / libm::log(decay)) as u64;
    (total_steps / drops.max(1)).max(1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Grads,
    pub v: Grads,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        Adam {
            config,
            step: 0,
            m: Grads::zeros(store),
            v: Grads::zeros(store),
        }
    }

    /// Learning rate used by the next step.
    pub fn current_lr(&self) -> f64 {
        let c = &self.config;
        if c.decay_every == 0 {
            return c.lr;
        }
        c.lr * libm::pow(c.decay, (self.step / c.decay_every) as f64)
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Grads) {
        let lr = self.current_lr();
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - libm::pow(c.beta1, self.step as f64);
        let bc2 = 1.0 - libm::pow(c.beta2, self.step as f64);
        for id in store.ids().collect::<alloc::vec::Vec<_>>() {
            let g = grads.get(id);
            let m = self.m.get_mut(id);
            for (mi, gi) in m.iter_mut().zip(g) {
                *mi = c.beta1 * *mi + (1.0 - c.beta1) * gi;
            }
            let v = self.v.get_mut(id);
            for (vi, gi) in v.iter_mut().zip(g) {
                *vi = c.beta2 * *vi + (1.0 - c.beta2) * gi * gi;
            }
            let (m, v) = (self.m.get(id), self.v.get(id));
            let p = store.get_mut(id).data_mut();
            for k in 0..p.len() {
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                p[k] -= lr * mhat / (libm::sqrt(vhat) + c.eps);
            }
        }
    }
}
