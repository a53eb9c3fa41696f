//! Optimal-price oracles and per-step regret accounting.
//!
//! Regret is measured against the noiseless mean reward: the oracle value
//! `f*(x) = max_p f(x, p)` minus the mean reward of the price actually
//! played. The quadratic family has a closed-form optimum (clamped vertex);
//! the bump family peaks at the bump center whose covariate ball contains
//! `x`. A grid oracle with min-argmax tie-breaking backs both up and serves
//! as the independent cross-check.

use thiserror::Error;

use crate::env::{phi, BumpReward, QuadraticReward, RewardModel};
use crate::geometry::linf_slice;

/// Default grid resolution; per-step regret error stays below the reward's
/// Lipschitz constant times this.
pub const GRID_RESOLUTION: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("price response is not concave (theta_tilde = {0} >= 0); use the grid oracle")]
    NotConcave(f64),
}

/// Argmax and max of `f(x, .)` over the grid `{0, res, 2 res, ..., 1}`.
/// Ties go to the smallest price.
pub fn optimal_price_grid(model: &RewardModel, x: &[f64], resolution: f64) -> (f64, f64) {
    debug_assert!(resolution > 0.0 && resolution <= 0.01);
    let profile = model.price_profile(x);
    let steps = (1.0 / resolution).ceil() as u64;
    let mut best_p = 0.0;
    let mut best_f = f64::NEG_INFINITY;
    for k in 0..=steps {
        let p = (k as f64 * resolution).min(1.0);
        let f = profile(p);
        if f > best_f {
            best_f = f;
            best_p = p;
        }
        if p == 1.0 {
            break;
        }
    }
    (best_p, best_f)
}

/// Closed-form optimum of the price-quadratic reward: the vertex
/// `-theta.x / (2 theta_tilde)` clamped to `[0,1]`. Requires strict
/// concavity in the price.
pub fn optimal_price_quadratic(
    model: &QuadraticReward,
    x: &[f64],
) -> Result<(f64, f64), OracleError> {
    if model.theta_tilde() >= 0.0 {
        return Err(OracleError::NotConcave(model.theta_tilde()));
    }
    let slope: f64 = model.theta().iter().zip(x).map(|(t, xi)| t * xi).sum();
    let p = (-slope / (2.0 * model.theta_tilde())).clamp(0.0, 1.0);
    Ok((p, model.mean(x, p)))
}

/// Closed-form optimal value of the bump reward. Inside a gating covariate
/// ball the best price is the bump's price coordinate, leaving only the
/// covariate gap in the plateau argument; outside every ball the reward is
/// flat at the floor.
pub fn optimal_value_bump(model: &BumpReward, x: &[f64]) -> f64 {
    let mut best = 0.25f64;
    for c in model.centers() {
        let gap = linf_slice(x, c.covariate());
        if gap <= model.r_star() {
            best = best.max(0.25 + 0.75 * phi(gap));
        }
    }
    best
}

/// `f*(x)`: closed form where available, grid search otherwise.
pub fn optimal_value(model: &RewardModel, x: &[f64]) -> f64 {
    match model {
        RewardModel::Quadratic(m) => match optimal_price_quadratic(m, x) {
            Ok((_, value)) => value,
            Err(_) => optimal_price_grid(model, x, GRID_RESOLUTION).1,
        },
        RewardModel::Bump(m) => optimal_value_bump(m, x),
    }
}

/// One-step regret `f*(x) - f(x, p_chosen)`, always on mean rewards.
pub fn instantaneous_regret(model: &RewardModel, x: &[f64], p_chosen: f64) -> f64 {
    optimal_value(model, x) - model.mean(x, p_chosen)
}

/// Per-step and cumulative regret of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    pub per_step: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub seed: u64,
    pub config_id: String,
}

impl RegretTrace {
    pub fn new(seed: u64, config_id: String) -> Self {
        Self {
            per_step: Vec::new(),
            cumulative: Vec::new(),
            seed,
            config_id,
        }
    }

    pub fn push(&mut self, regret: f64) {
        let total = self.cumulative.last().copied().unwrap_or(0.0) + regret;
        self.per_step.push(regret);
        self.cumulative.push(total);
    }

    pub fn len(&self) -> usize {
        self.per_step.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_step.is_empty()
    }

    pub fn final_cumulative(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }
}
