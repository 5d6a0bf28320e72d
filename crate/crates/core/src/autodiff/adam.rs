use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Grads, ParamStore, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global-norm clipping threshold applied before the update.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(5.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum AdamError {
    #[error("non-finite gradient for {param}; step skipped")]
    NonFinite { param: String },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamReport {
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    pub clipped: bool,
}

/// Adam with bias correction. Parameters missing from `grads` are treated as
/// having zero gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub t: u64,
    pub m: BTreeMap<String, Vec<T>>,
    pub v: BTreeMap<String, Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &ParamStore<T>) -> Self {
        let zeros: BTreeMap<String, Vec<T>> = params
            .iter()
            .map(|(k, t)| (k.clone(), vec![T::ZERO; t.len()]))
            .collect();
        Adam {
            config,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(
        &mut self,
        params: &mut ParamStore<T>,
        grads: &Grads<T>,
    ) -> Result<AdamReport, AdamError> {
        let mut sq = 0.0f64;
        for (name, g) in grads {
            for &x in &g.data {
                if !x.is_finite() {
                    return Err(AdamError::NonFinite {
                        param: name.clone(),
                    });
                }
                sq += x.to_f64() * x.to_f64();
            }
        }
        let norm = sq.sqrt();
        let scale = match self.config.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            ..
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (name, p) in params.iter_mut() {
            let m = self.m.get_mut(name).expect("moment for every parameter");
            let v = self.v.get_mut(name).expect("moment for every parameter");
            let g = grads.get(name).map(|g| g.data.as_slice());
            for i in 0..p.data.len() {
                let gi = g.map_or(0.0, |g| g[i].to_f64()) * scale;
                let mi = beta1 * m[i].to_f64() + (1.0 - beta1) * gi;
                let vi = beta2 * v[i].to_f64() + (1.0 - beta2) * gi * gi;
                m[i] = T::from_f64(mi);
                v[i] = T::from_f64(vi);
                let update = lr * (mi / c1) / ((vi / c2).sqrt() + eps);
                p.data[i] = T::from_f64(p.data[i].to_f64() - update);
            }
        }
        Ok(AdamReport {
            grad_norm: norm,
            clipped: scale < 1.0,
        })
    }
}
