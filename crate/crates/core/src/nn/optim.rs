use super::network::{LayerParams, ParamSet};
use super::scalar::Scalar;
use super::spec::{LayerSpec, NetworkSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, kept in f64.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

fn flat_slots<T>(params: &[Option<LayerParams<T>>]) -> impl Iterator<Item = usize> + '_ {
    params
        .iter()
        .flatten()
        .flat_map(|p| [p.kernel.data.len(), p.bias.data.len()])
}

impl AdamState {
    pub fn new<T>(params: &[Option<LayerParams<T>>]) -> Self {
        let m: Vec<Vec<f64>> = flat_slots(params).map(|n| vec![0.0; n]).collect();
        Self {
            step: 0,
            v: m.clone(),
            m,
        }
    }

    /// One Adam update with `grads` (already averaged over the batch).
    pub fn update<T: Scalar>(
        &mut self,
        cfg: &AdamConfig,
        params: &mut ParamSet<T>,
        grads: &[Option<LayerParams<f64>>],
    ) -> Result<()> {
        if !(cfg.lr > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        let slots = params
            .iter_mut()
            .flatten()
            .zip(grads.iter().flatten())
            .flat_map(|(p, g)| [(&mut p.kernel.data, &g.kernel.data), (&mut p.bias.data, &g.bias.data)]);
        let mut k = 0;
        for (w, g) in slots {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            if m.len() != w.len() || g.len() != w.len() {
                return Err(Error::invalid("optimizer state does not match parameters"));
            }
            for i in 0..w.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                let step = cfg.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.eps);
                w[i] = T::from_f64(w[i].to_f64() - step);
            }
            k += 1;
        }
        if k != self.m.len() {
            return Err(Error::invalid("optimizer state does not match parameters"));
        }
        Ok(())
    }
}

/// Rescales every `row_len`-long row of `kernel` whose L2 norm exceeds `cap`
/// to norm exactly `cap`.
pub fn max_norm_rows<T: Scalar>(kernel: &mut [T], row_len: usize, cap: f64) {
    for row in kernel.chunks_exact_mut(row_len) {
        let norm = row.iter().map(|v| v.to_f64() * v.to_f64()).sum::<f64>().sqrt();
        if norm > cap {
            let s = cap / norm;
            for v in row.iter_mut() {
                *v = T::from_f64(v.to_f64() * s);
            }
        }
    }
}

/// Applies each layer's max-norm cap: per incoming weight vector for dense
/// units, per whole filter for convolutions.
pub fn apply_max_norm<T: Scalar>(spec: &NetworkSpec, params: &mut ParamSet<T>) {
    for (layer, p) in spec.layers.iter().zip(params.iter_mut()) {
        let cap = match layer {
            LayerSpec::Conv2d { max_norm, .. } | LayerSpec::Dense { max_norm, .. } => *max_norm,
            _ => None,
        };
        if let (Some(cap), Some(p)) = (cap, p) {
            let rows = p.kernel.dims[0];
            let row_len = p.kernel.len() / rows;
            max_norm_rows(&mut p.kernel.data, row_len, cap);
        }
    }
}
