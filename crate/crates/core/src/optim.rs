//! Adam, L2 regularization and a central-difference gradient checker.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moments for a list of parameter tensors.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    /// One moment table per entry of `shapes` (flat lengths).
    pub fn new(config: AdamConfig, shapes: &[usize]) -> Self {
        Self {
            config,
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Bias-corrected Adam update. Nothing is modified when any gradient entry
    /// is non-finite or shapes disagree.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::Config(format!(
                "optimizer tracks {} tensors, got {} params / {} grads",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, ((p, g), m)) in params.iter().zip(grads).zip(&self.first).enumerate() {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::Config(format!(
                    "tensor {i}: expected length {}, params {} grads {}",
                    m.len(),
                    p.len(),
                    g.len()
                )));
            }
            if let Some(j) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite gradient {} at tensor {i}, coordinate {j} (step {})",
                    g[j],
                    self.t + 1
                )));
            }
        }

        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powf(self.t as f64);
        let bc2 = 1.0 - beta2.powf(self.t as f64);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            for j in 0..p.len() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Free-function form of [`AdamState::step`].
pub fn adam_step(params: &mut [&mut [f64]], grads: &[&[f64]], state: &mut AdamState) -> Result<()> {
    state.step(params, grads)
}

/// `λ Σθ²` and its gradient `2λθ`, one gradient table per parameter tensor.
pub fn l2_penalty(params: &[&[f64]], lambda: f64) -> (f64, Vec<Vec<f64>>) {
    let loss = lambda * params.iter().flat_map(|p| p.iter()).map(|v| v * v).sum::<f64>();
    let grads = params
        .iter()
        .map(|p| p.iter().map(|v| 2.0 * lambda * v).collect())
        .collect();
    (loss, grads)
}

/// Adds `2λθ` into existing gradient tables and returns the penalty value.
pub fn add_l2_penalty(params: &[&[f64]], grads: &mut [&mut [f64]], lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let mut loss = 0.0;
    for (p, g) in params.iter().zip(grads.iter_mut()) {
        for (pv, gv) in p.iter().zip(g.iter_mut()) {
            loss += pv * pv;
            *gv += 2.0 * lambda * pv;
        }
    }
    lambda * loss
}

/// Absolute floor on the denominator of the relative error; keeps roundoff
/// on near-zero gradient coordinates from dominating.
pub const GRAD_CHECK_FLOOR: f64 = 1e-4;

/// Worst relative error between the analytic gradient returned by `loss_fn`
/// and central differences, over every coordinate.
pub fn grad_check<F>(loss_fn: F, params: &[f64], step: f64) -> f64
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    grad_check_sampled(loss_fn, params, step, usize::MAX, 0)
}

/// Like [`grad_check`] but compares at most `max_coords` coordinates drawn
/// without replacement under `seed`.
pub fn grad_check_sampled<F>(mut loss_fn: F, params: &[f64], step: f64, max_coords: usize, seed: u64) -> f64
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = loss_fn(params);
    assert_eq!(analytic.len(), params.len(), "gradient length mismatch");
    let coords: Vec<usize> = if params.len() <= max_coords {
        (0..params.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = sample(&mut rng, params.len(), max_coords).into_vec();
        c.sort_unstable();
        c
    };
    let mut probe = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in coords {
        let orig = probe[i];
        probe[i] = orig + step;
        let (up, _) = loss_fn(&probe);
        probe[i] = orig - step;
        let (down, _) = loss_fn(&probe);
        probe[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        let err = (analytic[i] - numeric).abs() / numeric.abs().max(GRAD_CHECK_FLOOR);
        worst = worst.max(err);
    }
    worst
}
