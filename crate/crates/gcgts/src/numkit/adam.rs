//! Adam optimizer over a [`ParamStore`]. Moment buffers are aligned with the
//! store's registration order, and every arithmetic step happens in the
//! scalar type of the parameters, so f32 runs are bitwise reproducible.

use super::{ParamStore, Scalar};

pub struct Adam<S: Scalar> {
    lr: S,
    beta1: S,
    beta2: S,
    eps: S,
    step_count: u64,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(lr: f64, store: &ParamStore<S>) -> Self {
        Self::with_hyper(lr, 0.9, 0.999, 1e-8, store)
    }

    pub fn with_hyper(lr: f64, beta1: f64, beta2: f64, eps: f64, store: &ParamStore<S>) -> Self {
        let m = (0..store.len()).map(|i| vec![S::ZERO; store.tensor(i).len()]).collect();
        let v = (0..store.len()).map(|i| vec![S::ZERO; store.tensor(i).len()]).collect();
        Adam {
            lr: S::from_f64(lr),
            beta1: S::from_f64(beta1),
            beta2: S::from_f64(beta2),
            eps: S::from_f64(eps),
            step_count: 0,
            m,
            v,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One update over every parameter. Each parameter must carry an
    /// accumulated gradient; a missing one is a contract violation.
    pub fn step(&mut self, store: &mut ParamStore<S>) {
        assert_eq!(self.m.len(), store.len(), "adam: state sized for {} params, store has {}", self.m.len(), store.len());
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = S::ONE - self.beta1.powi(t);
        let c2 = S::ONE - self.beta2.powi(t);
        let one = S::ONE;
        for i in 0..store.len() {
            let name = store.name(i).to_owned();
            let tensor = store.tensor_mut(i);
            let grad: Vec<S> = tensor
                .grad()
                .unwrap_or_else(|| panic!("adam: parameter '{name}' has no gradient"))
                .to_vec();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let data = tensor.data_mut();
            for e in 0..data.len() {
                let g = grad[e];
                m[e] = self.beta1 * m[e] + (one - self.beta1) * g;
                v[e] = self.beta2 * v[e] + (one - self.beta2) * g * g;
                let m_hat = m[e] / c1;
                let v_hat = v[e] / c2;
                data[e] = data[e] - self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}
