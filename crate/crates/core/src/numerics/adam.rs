use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::params::{Gradients, ParamStore};
use crate::error::{Error, Result};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 5e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment accumulators, zero-initialized.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        AdamState {
            first: params.iter().map(|p| vec![0.0; p.data.len()]).collect(),
            second: params.iter().map(|p| vec![0.0; p.data.len()]).collect(),
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, index: usize) -> &[f64] {
        &self.first[index]
    }

    pub fn second_moment(&self, index: usize) -> &[f64] {
        &self.second[index]
    }
}

/// One bias-corrected Adam update of every parameter.
pub fn adam_step(params: &mut ParamStore, grads: &Gradients, state: &mut AdamState, hyper: &AdamConfig) -> Result<()> {
    adam_step_filtered(params, grads, state, hyper, |_| true)
}

/// Like [`adam_step`], but only parameters whose name passes `trainable` move.
/// The step counter and moments of frozen parameters are left untouched.
pub fn adam_step_filtered(
    params: &mut ParamStore,
    grads: &Gradients,
    state: &mut AdamState,
    hyper: &AdamConfig,
    trainable: impl Fn(&str) -> bool,
) -> Result<()> {
    if grads.len() != params.len() {
        return Err(Error::shape("adam_step", "gradient count", params.len(), grads.len()));
    }
    if state.first.len() != params.len() {
        return Err(Error::shape("adam_step", "moment count", params.len(), state.first.len()));
    }
    for id in params.ids() {
        let n = params.get(id).data.len();
        if grads.by_id(id).len() != n {
            return Err(Error::shape("adam_step", "gradient size", n, grads.by_id(id).len()));
        }
        if state.first[id.index()].len() != n {
            return Err(Error::shape("adam_step", "moment size", n, state.first[id.index()].len()));
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - libm::pow(hyper.beta1, t);
    let c2 = 1.0 - libm::pow(hyper.beta2, t);
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        if !trainable(&params.get(id).name) {
            continue;
        }
        let g = grads.by_id(id);
        let m = &mut state.first[id.index()];
        let v = &mut state.second[id.index()];
        let p = params.data_mut(id);
        for i in 0..p.len() {
            m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g[i];
            v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= hyper.lr * m_hat / (libm::sqrt(v_hat) + hyper.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(v: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("p", &[1], vec![v]).unwrap();
        s
    }

    fn grads_of(store: &ParamStore, g: f64) -> Gradients {
        let mut grads = Gradients::zeros_like(store);
        grads.by_id_mut(store.id("p").unwrap())[0] = g;
        grads
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = scalar_store(0.3);
        let mut st = AdamState::new(&s);
        let g = grads_of(&s, 0.0);
        adam_step(&mut s, &g, &mut st, &AdamConfig::default()).unwrap();
        assert_eq!(s.by_name("p").unwrap().data[0], 0.3);
        assert_eq!(st.step(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m_hat = g = 1, v_hat = g^2 = 1, step = 0.1 * 1 / (1 + 1e-8).
        let mut s = scalar_store(0.0);
        let mut st = AdamState::new(&s);
        let g = grads_of(&s, 1.0);
        let hyper = AdamConfig { lr: 0.1, ..AdamConfig::default() };
        adam_step(&mut s, &g, &mut st, &hyper).unwrap();
        let p = s.by_name("p").unwrap().data[0];
        assert!((p - (-0.1 / (1.0 + 1e-8))).abs() < 1e-15, "{p}");
    }

    #[test]
    fn identical_inputs_give_identical_updates() {
        let run = || {
            let mut s = scalar_store(0.2);
            let mut st = AdamState::new(&s);
            for k in 0..5 {
                let g = grads_of(&s, 0.3 - k as f64 * 0.1);
                adam_step(&mut s, &g, &mut st, &AdamConfig::default()).unwrap();
            }
            (s, st)
        };
        let (a, sa) = run();
        let (b, sb) = run();
        assert_eq!(a.by_name("p").unwrap().data[0].to_bits(), b.by_name("p").unwrap().data[0].to_bits());
        assert_eq!(sa, sb);
        assert_eq!(sa.step(), 5);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut s = scalar_store(0.0);
        let mut st = AdamState::new(&s);
        let other = {
            let mut o = ParamStore::new();
            o.insert("p", &[2], vec![0.0, 0.0]).unwrap();
            o
        };
        let g = Gradients::zeros_like(&other);
        assert!(adam_step(&mut s, &g, &mut st, &AdamConfig::default()).is_err());
    }
}
