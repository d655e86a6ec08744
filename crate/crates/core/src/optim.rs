//! Parameter update rules.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::fusion::Kid3Model;
use crate::train::Gradients;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// `θ ← θ − lr·v`, `v ← μ·v + g` (plain gradient descent when μ = 0).
    Sgd,
    /// Bias-corrected first/second moment scaling.
    #[default]
    Adam,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Clone, Copy)]
struct AdamStep {
    /// `lr * sqrt(1 - beta2^t) / (1 - beta1^t)`
    scale: f64,
    /// `eps * sqrt(1 - beta2^t)`
    eps: f64,
}

#[inline(always)]
fn adam_update(step: AdamStep, p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]) {
    for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        *p -= step.scale * *m / (sqrt(*v) + step.eps);
    }
}

// Correctly rounded either way; the std one lets the loop vectorize.
#[cfg(feature = "std")]
#[inline(always)]
fn sqrt(x: f64) -> f64 {
    x.sqrt()
}

#[cfg(not(feature = "std"))]
#[inline(always)]
fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

/// Wider-vector builds of the same element-wise update, picked at runtime.
/// Every operation is IEEE-exact, so results do not depend on the path.
#[cfg(all(feature = "std", target_arch = "x86_64"))]
mod dispatch {
    use super::{adam_update, AdamStep};

    #[target_feature(enable = "avx512f")]
    unsafe fn adam_avx512(step: AdamStep, p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]) {
        adam_update(step, p, g, m, v)
    }

    #[target_feature(enable = "avx")]
    unsafe fn adam_avx(step: AdamStep, p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]) {
        adam_update(step, p, g, m, v)
    }

    pub(super) fn adam(step: AdamStep, p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]) {
        // SAFETY: each variant runs only after its feature was detected.
        unsafe {
            if std::is_x86_feature_detected!("avx512f") {
                adam_avx512(step, p, g, m, v)
            } else if std::is_x86_feature_detected!("avx") {
                adam_avx(step, p, g, m, v)
            } else {
                adam_update(step, p, g, m, v)
            }
        }
    }
}

#[cfg(not(all(feature = "std", target_arch = "x86_64")))]
mod dispatch {
    pub(super) use super::adam_update as adam;
}

/// Update rule plus its per-parameter state, laid out in
/// [`Kid3Model::trainable_parameters`] order.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    momentum: f64,
    steps: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, momentum: f64, model: &Kid3Model) -> Self {
        let zeros: Vec<Vec<f64>> = model.trainable_parameters().iter().map(|t| vec![0.0; t.tensor.as_slice().len()]).collect();
        let second = if kind == OptimizerKind::Adam { zeros.clone() } else { Vec::new() };
        Self { kind, learning_rate, momentum, steps: 0, first: zeros, second }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn apply(&mut self, model: &mut Kid3Model, grads: &Gradients) {
        self.steps += 1;
        let lr = self.learning_rate;
        let named = grads.named();
        let params = model.trainable_parameters_mut();
        debug_assert_eq!(named.len(), params.len());
        match self.kind {
            OptimizerKind::Sgd if self.momentum == 0.0 => {
                for ((_, p), g) in params.into_iter().zip(&named) {
                    p.add_scaled(-lr, g.tensor);
                }
            }
            OptimizerKind::Sgd => {
                for (((_, p), g), v) in params.into_iter().zip(&named).zip(&mut self.first) {
                    for ((p, &g), v) in p.as_mut_slice().iter_mut().zip(g.tensor.as_slice()).zip(v.iter_mut()) {
                        *v = self.momentum * *v + g;
                        *p -= lr * *v;
                    }
                }
            }
            OptimizerKind::Adam => {
                let t = self.steps as i32;
                let c1 = 1.0 - libm::pow(ADAM_BETA1, t as f64);
                let c2 = 1.0 - libm::pow(ADAM_BETA2, t as f64);
                let root_c2 = sqrt(c2);
                let step = AdamStep { scale: lr * root_c2 / c1, eps: ADAM_EPSILON * root_c2 };
                let state = self.first.iter_mut().zip(self.second.iter_mut());
                for (((_, p), g), (m, v)) in params.into_iter().zip(&named).zip(state) {
                    dispatch::adam(step, p.as_mut_slice(), g.tensor.as_slice(), m, v);
                }
            }
        }
    }
}
