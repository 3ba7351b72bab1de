//! Variance-reduced (SVRG-style) method for finite sums.
//!
//! Outer iterations take a full gradient `G = ∇f(w̃)` at a snapshot; the `m`
//! inner steps use
//! `V = (1/b) Σ_{j∈I} (∇f_j(w) − ∇f_j(w̃)) + G + (w − ζ)/λ` with `|I| = b`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::mbsga::split_rng;
use super::params::{OutputRule, VrsgaConfig, VrsgaParams};
use super::sampler::BatchSampler;
use super::trace::{check_finite, Counters, Recorder, RunOptions, RunTrace};
use crate::error::{check_dim, Result};
use crate::loss::ErmObjective;
use crate::regularizer::Regularizer;

/// Variance-reduced direction at inner iterate `w` for snapshot `snapshot`
/// with `snapshot_grad = ∇f(snapshot)` and `prox_point = ζ^λ(w)`.
///
/// Evaluated as `A + (G − C) + (w − ζ)/λ`, where `A` and `C` are the batch
/// means at `w` and at the snapshot. When `w` is the snapshot the correction
/// is exactly zero, and a batch covering every sample once in order makes
/// `G − C` exactly zero, so `V` then equals `∇E(w)` bit for bit.
pub fn variance_reduced_direction(
    obj: &ErmObjective<'_>,
    lambda: f64,
    w: &[f64],
    prox_point: &[f64],
    snapshot: &[f64],
    snapshot_grad: &[f64],
    batch: &[usize],
) -> Result<Vec<f64>> {
    check_dim(obj.dim(), w.len())?;
    check_dim(obj.dim(), prox_point.len())?;
    check_dim(obj.dim(), snapshot.len())?;
    check_dim(obj.dim(), snapshot_grad.len())?;
    let mut dir = if w == snapshot {
        // validates the batch even though the correction cancels
        obj.minibatch_gradient(w, batch)?;
        snapshot_grad.to_vec()
    } else {
        let at_w = obj.minibatch_gradient(w, batch)?;
        let at_snapshot = obj.minibatch_gradient(snapshot, batch)?;
        at_w.iter()
            .zip(snapshot_grad.iter().zip(&at_snapshot))
            .map(|(a, (g, c))| a + (g - c))
            .collect()
    };
    for ((d, x), z) in dir.iter_mut().zip(w).zip(prox_point) {
        *d += (x - z) / lambda;
    }
    Ok(dir)
}

pub fn vrsga_run<G: Regularizer>(
    obj: &ErmObjective<'_>,
    g: &G,
    cfg: &VrsgaConfig,
    opts: &RunOptions,
) -> Result<RunTrace> {
    let (mut control, mut sampler) = split_rng(cfg.seed);
    let params = cfg.derive(obj.n(), obj.l_max())?;
    run(obj, g, cfg, &params, opts, &mut control, &mut sampler)
}

/// As [`vrsga_run`] with a caller-supplied index source for the inner batches.
pub fn vrsga_run_with<G: Regularizer, S: BatchSampler>(
    obj: &ErmObjective<'_>,
    g: &G,
    cfg: &VrsgaConfig,
    opts: &RunOptions,
    sampler: &mut S,
) -> Result<RunTrace> {
    let (mut control, _) = split_rng(cfg.seed);
    let params = cfg.derive(obj.n(), obj.l_max())?;
    run(obj, g, cfg, &params, opts, &mut control, sampler)
}

fn run<G: Regularizer, S: BatchSampler>(
    obj: &ErmObjective<'_>,
    g: &G,
    cfg: &VrsgaConfig,
    params: &VrsgaParams,
    opts: &RunOptions,
    control: &mut ChaCha8Rng,
    sampler: &mut S,
) -> Result<RunTrace> {
    let (m, lambda, gamma) = (params.inner, params.lambda, params.gamma);
    let (outer, pick) = match cfg.output_rule {
        OutputRule::RandomR => {
            let r = control.random_range(1..=params.outer);
            let t = control.random_range(1..=m);
            (r, Some(t))
        }
        OutputRule::LastIterate => (params.outer, None),
    };
    let n = obj.n();
    let mut snapshot = opts.initial_point(obj.dim())?;
    let mut snapshot_grad = vec![0.0; obj.dim()];
    let mut counters = Counters::default();
    let mut batch = Vec::with_capacity(params.batch);
    let mut picked = None;
    let mut recorder = Recorder::new(obj, g, lambda, opts);
    recorder.record(0, &snapshot, counters)?;

    let mut step = 0usize;
    for k in 1..=outer {
        obj.full_gradient_into(&snapshot, &mut snapshot_grad)?;
        counters.grad_calls += n as u64;
        let mut w = snapshot.clone();
        for t in 1..=m {
            let zeta = g.prox(lambda, &w)?.point;
            counters.prox_calls += 1;
            if k == outer && pick == Some(t) {
                picked = Some(zeta.clone());
            }
            sampler.sample(n, params.batch, &mut batch);
            let dir = variance_reduced_direction(
                obj,
                lambda,
                &w,
                &zeta,
                &snapshot,
                &snapshot_grad,
                &batch,
            )?;
            counters.grad_calls += batch.len() as u64;
            for (x, d) in w.iter_mut().zip(&dir) {
                *x -= gamma * d;
            }
            step += 1;
            check_finite(step, &w)?;
            if recorder.due(step) {
                recorder.record(step, &w, counters)?;
            }
        }
        snapshot = w;
    }

    let output = match picked {
        Some(p) => p,
        None => snapshot.clone(),
    };
    recorder.record_final(step, &snapshot, counters)?;
    Ok(RunTrace {
        records: recorder.records,
        final_iterate: snapshot,
        output,
        counters,
        iterations: step,
        outer_iterations: Some(outer),
    })
}
