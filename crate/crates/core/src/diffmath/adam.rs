use alloc::string::ToString;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Matrix, ParamStore};
use crate::math;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
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

/// First/second moment estimates, aligned with a [`ParamStore`]'s order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl AdamState {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros = || {
            store
                .iter()
                .map(|p| Matrix::zeros(p.value.rows(), p.value.cols()))
                .collect::<Vec<_>>()
        };
        Self {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    /// Rebuilds state from a checkpoint; moment shapes must match `store`.
    pub fn from_parts(
        config: AdamConfig,
        step: u64,
        first: Vec<Matrix>,
        second: Vec<Matrix>,
        store: &ParamStore,
    ) -> Result<Self> {
        if first.len() != store.len() || second.len() != store.len() {
            return Err(Error::ShapeMismatch {
                op: "adam_state",
                lhs: (first.len(), second.len()),
                rhs: (store.len(), store.len()),
            });
        }
        for ((m, v), p) in first.iter().zip(&second).zip(store.iter()) {
            if m.shape() != p.value.shape() || v.shape() != p.value.shape() {
                return Err(Error::ShapeMismatch {
                    op: "adam_state",
                    lhs: m.shape(),
                    rhs: p.value.shape(),
                });
            }
        }
        Ok(Self {
            config,
            step,
            first,
            second,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Matrix] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Matrix] {
        &self.second
    }
}

/// One bias-corrected Adam update of every parameter; clears the gradients.
pub fn adam_step(store: &mut ParamStore, state: &mut AdamState) -> Result<()> {
    if state.first.len() != store.len() {
        return Err(Error::ShapeMismatch {
            op: "adam_step",
            lhs: (state.first.len(), 1),
            rhs: (store.len(), 1),
        });
    }
    if let Some(p) = store.iter().find(|p| p.grad.is_none()) {
        return Err(Error::MissingGradient(p.name.to_string()));
    }
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - math::powf(beta1, t);
    let c2 = 1.0 - math::powf(beta2, t);
    for id in 0..store.len() {
        let p = store.by_id_mut(id);
        let grad = p.grad.take().expect("checked above");
        let (m, v) = (&mut state.first[id], &mut state.second[id]);
        let params = p.value.as_mut_slice();
        for (k, &g) in grad.as_slice().iter().enumerate() {
            let mk = beta1 * m.as_slice()[k] + (1.0 - beta1) * g;
            let vk = beta2 * v.as_slice()[k] + (1.0 - beta2) * g * g;
            m.as_mut_slice()[k] = mk;
            v.as_mut_slice()[k] = vk;
            let update = lr * (mk / c1) / (math::sqrt(vk / c2) + eps);
            params[k] -= update;
        }
    }
    Ok(())
}
