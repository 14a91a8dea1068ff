//! Adam optimizer over a parameter store.

use crate::num::Real;
use crate::params::{Binding, ParamStore};

pub struct Adam<F: Real> {
    lr: F,
    beta1: F,
    beta2: F,
    epsilon: F,
    step_count: u32,
    first_moment: Vec<Vec<F>>,
    second_moment: Vec<Vec<F>>,
}

impl<F: Real> Adam<F> {
    pub fn new(store: &ParamStore<F>, lr: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let first_moment = store.iter().map(|(_, p)| vec![F::ZERO; p.values.len()]).collect();
        let second_moment = store.iter().map(|(_, p)| vec![F::ZERO; p.values.len()]).collect();
        Adam {
            lr: F::from_f64(lr),
            beta1: F::from_f64(beta1),
            beta2: F::from_f64(beta2),
            epsilon: F::from_f64(epsilon),
            step_count: 0,
            first_moment,
            second_moment,
        }
    }

    /// One update from the gradients accumulated on `binding`. Parameters
    /// that received no gradient this step are treated as having a zero
    /// gradient.
    pub fn step(&mut self, store: &mut ParamStore<F>, binding: &Binding<F>) {
        self.step_count += 1;
        let t = self.step_count as i32;
        let bias1 = F::ONE - pow(self.beta1, t);
        let bias2 = F::ONE - pow(self.beta2, t);
        let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
        for (slot, id) in ids.into_iter().enumerate() {
            let grad = binding.grad(id);
            let m = &mut self.first_moment[slot];
            let v = &mut self.second_moment[slot];
            let values = store.values_mut(id);
            for i in 0..values.len() {
                let g = grad.as_ref().map_or(F::ZERO, |g| g[i]);
                m[i] = self.beta1 * m[i] + (F::ONE - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (F::ONE - self.beta2) * g * g;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                values[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

fn pow<F: Real>(base: F, n: i32) -> F {
    let mut out = F::ONE;
    for _ in 0..n {
        out *= base;
    }
    out
}
