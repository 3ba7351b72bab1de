//! Estimating the stochastic-gradient deviation `σ` and checking the
//! mini-batch variance bound.

use serde::Serialize;

use super::mbsga::{minibatch_direction, split_rng};
use super::params::{mbsga_derive_params, MbsgaParams};
use super::sampler::BatchSampler;
use crate::envelope::EnvelopeAnchor;
use crate::error::{check_dim, Error, Result};
use crate::loss::{sq_dist, ErmObjective};
use crate::regularizer::Regularizer;

pub const DEFAULT_TRIAL_ITERS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaEstimate {
    /// `max_k σ̂_k`.
    pub sigma: f64,
    /// `σ̂_k` for each trial iteration.
    pub per_iteration: Vec<f64>,
    pub params: MbsgaParams,
}

/// Runs `trial_iters` MBSGA iterations with `γ = 1/L_E` and returns the
/// largest per-iteration sample deviation
/// `σ̂_k² = (1/M) Σ_j ‖∇f_{ξ_j}(w_k) − ∇f(w_k)‖²`.
///
/// Use a seed distinct from the one the main run will use.
pub fn estimate_sigma<G: Regularizer>(
    obj: &ErmObjective<'_>,
    g: &G,
    n_iters: usize,
    alpha: f64,
    theta: f64,
    trial_iters: usize,
    seed: u64,
) -> Result<SigmaEstimate> {
    let (_, mut sampler) = split_rng(seed);
    estimate_sigma_with(obj, g, n_iters, alpha, theta, trial_iters, &mut sampler)
}

pub fn estimate_sigma_with<G: Regularizer, S: BatchSampler>(
    obj: &ErmObjective<'_>,
    g: &G,
    n_iters: usize,
    alpha: f64,
    theta: f64,
    trial_iters: usize,
    sampler: &mut S,
) -> Result<SigmaEstimate> {
    // σ = 0 leaves γ = 1/L_E
    let params = mbsga_derive_params(n_iters, alpha, theta, obj.l_mean(), 0.0)?;
    let (lambda, gamma) = (params.lambda, params.gamma);
    let mut w = vec![0.0; obj.dim()];
    let mut batch = Vec::new();
    let mut full = vec![0.0; obj.dim()];
    let mut per_iteration = Vec::with_capacity(trial_iters);

    for _ in 0..trial_iters {
        let zeta = g.prox(lambda, &w)?.point;
        sampler.sample(obj.n(), params.batch, &mut batch);
        obj.full_gradient_into(&w, &mut full)?;
        let mut total = 0.0;
        for &j in &batch {
            total += sq_dist(&obj.sample_gradient(j, &w)?, &full);
        }
        per_iteration.push((total / batch.len() as f64).sqrt());

        let dir = minibatch_direction(obj, lambda, &w, &zeta, &batch)?;
        for (x, d) in w.iter_mut().zip(&dir) {
            *x -= gamma * d;
        }
    }
    let sigma = per_iteration.iter().copied().fold(0.0, f64::max);
    Ok(SigmaEstimate {
        sigma,
        per_iteration,
        params,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceCheck {
    /// Mean of `‖∇A − ∇E‖²` over the trials.
    pub empirical: f64,
    /// Standard error of that mean.
    pub std_error: f64,
    /// `σ²(w)/M` with `σ²(w)` enumerated exactly.
    pub bound: f64,
    pub exact_variance: f64,
}

impl VarianceCheck {
    /// `empirical ≤ bound · (1 + 5/√trials)`.
    pub fn within_contract(&self, trials: usize) -> bool {
        self.empirical <= self.bound * (1.0 + 5.0 / (trials as f64).sqrt())
    }
}

/// Compares the empirical mean-square deviation of the mini-batch direction
/// from `∇E(w)` against `σ²(w)/M`.
pub fn variance_bound_check<G: Regularizer, S: BatchSampler>(
    obj: &ErmObjective<'_>,
    g: &G,
    w: &[f64],
    lambda: f64,
    batch_size: usize,
    trials: usize,
    sampler: &mut S,
) -> Result<VarianceCheck> {
    check_dim(obj.dim(), w.len())?;
    if batch_size == 0 || trials == 0 {
        return Err(Error::InvalidParameter(
            "batch size and trials must be positive".into(),
        ));
    }
    let anchor = EnvelopeAnchor::new(g, lambda, w)?;
    let exact_grad = anchor.gradient(obj, w)?;
    let exact_variance = obj.gradient_variance(w)?;
    let mut batch = Vec::with_capacity(batch_size);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..trials {
        sampler.sample(obj.n(), batch_size, &mut batch);
        let dir = minibatch_direction(obj, lambda, w, anchor.prox_point(), &batch)?;
        let dev = sq_dist(&dir, &exact_grad);
        sum += dev;
        sum_sq += dev * dev;
    }
    let t = trials as f64;
    let empirical = sum / t;
    let var = (sum_sq / t - empirical * empirical).max(0.0);
    let std_error = (var / (t - 1.0).max(1.0)).sqrt();
    Ok(VarianceCheck {
        empirical,
        std_error,
        bound: exact_variance / batch_size as f64,
        exact_variance,
    })
}
