//! Adam and parameter EMA.

use alloc::vec::Vec;

use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Adam with a per-parameter learning rate and per-parameter step counts
/// (a parameter that received no gradient in a step is left untouched).
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    lr: Vec<f64>,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: Vec<u64>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: impl Fn(&str) -> f64, beta1: f64, beta2: f64) -> Self {
        let shapes = || store.iter().map(|(_, t)| Tensor::zeros(t.shape()));
        Self {
            beta1,
            beta2,
            eps: 1e-8,
            lr: store.iter().map(|(n, _)| lr(n)).collect(),
            m: shapes().collect(),
            v: shapes().collect(),
            t: alloc::vec![0; store.len()],
        }
    }

    pub fn lr(&self, id: ParamId) -> f64 {
        self.lr[id.index()]
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &[(ParamId, Tensor)]) {
        for (id, g) in grads {
            let i = id.index();
            self.t[i] += 1;
            let t = self.t[i] as i32;
            let (b1, b2) = (self.beta1, self.beta2);
            let c1 = 1.0 - libm::pow(b1, t as f64);
            let c2 = 1.0 - libm::pow(b2, t as f64);
            let lr = self.lr[i];
            let eps = self.eps;
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let p = store.get_mut(*id).data_mut();
            for k in 0..p.len() {
                let gk = g.data()[k];
                m[k] = b1 * m[k] + (1.0 - b1) * gk;
                v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
                let mh = m[k] / c1;
                let vh = v[k] / c2;
                p[k] -= lr * mh / (libm::sqrt(vh) + eps);
            }
        }
    }

    /// First moments, second moments and step counts, in parameter order.
    pub fn state(&self) -> (Vec<&Tensor>, Vec<&Tensor>, &[u64]) {
        (self.m.iter().collect(), self.v.iter().collect(), &self.t)
    }

    pub fn restore(&mut self, m: Vec<Tensor>, v: Vec<Tensor>, t: Vec<u64>) -> bool {
        let ok = m.len() == self.m.len()
            && v.len() == self.v.len()
            && t.len() == self.t.len()
            && m.iter().zip(&self.m).all(|(a, b)| a.shape() == b.shape())
            && v.iter().zip(&self.v).all(|(a, b)| a.shape() == b.shape());
        if ok {
            self.m = m;
            self.v = v;
            self.t = t;
        }
        ok
    }
}

/// `ema <- decay * ema + (1 - decay) * current` for the selected parameters.
pub fn ema_update(ema: &mut ParamStore, current: &ParamStore, ids: &[ParamId], decay: f64) {
    for &id in ids {
        let src = current.get(id).data();
        for (e, &c) in ema.get_mut(id).data_mut().iter_mut().zip(src) {
            *e = decay * *e + (1.0 - decay) * c;
        }
    }
}
