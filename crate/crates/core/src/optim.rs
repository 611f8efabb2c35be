//! Adam over flat parameter buffers, with lazy updates for sparse gradients.

use fnv::FnvHashMap;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Gradient accumulator keyed by parameter index.
#[derive(Debug, Clone, Default)]
pub struct SparseGrad {
    entries: FnvHashMap<usize, f64>,
}

impl SparseGrad {
    pub fn new() -> Self {
        SparseGrad::default()
    }

    #[inline]
    pub fn add(&mut self, i: usize, g: f64) {
        *self.entries.entry(i).or_insert(0.0) += g;
    }

    pub fn get(&self, i: usize) -> f64 {
        self.entries.get(&i).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Entries in ascending index order, so updates are deterministic.
    pub fn sorted(&self) -> Vec<(usize, f64)> {
        let mut v: Vec<_> = self.entries.iter().map(|(&i, &g)| (i, g)).collect();
        v.sort_unstable_by_key(|e| e.0);
        v
    }
}

/// Adam state for one parameter buffer. Only touched coordinates have their
/// moments updated; bias correction uses the global step count.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n_params: usize, config: AdamConfig) -> Self {
        Adam {
            config,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grad: &SparseGrad) {
        self.t += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        for (i, g) in grad.sorted() {
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g;
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g;
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= c.lr * mh / (vh.sqrt() + c.eps);
        }
    }
}
