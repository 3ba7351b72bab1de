//! Mini-batch stochastic gradient method on the envelope majorant.
//!
//! Each iteration takes `ζ = prox_{λg}(w)`, draws `M` samples and steps along
//! `(1/M) Σ ∇f_j(w) + (w − ζ)/λ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::{MbsgaConfig, MbsgaParams, OutputRule};
use super::sampler::{BatchSampler, UniformSampler};
use super::trace::{check_finite, Counters, Recorder, RunOptions, RunTrace};
use crate::error::{check_dim, Result};
use crate::loss::ErmObjective;
use crate::regularizer::Regularizer;

/// Seeds the R draw (stream 0) and the sampler (stream 1) from one seed.
pub(crate) fn split_rng(seed: u64) -> (ChaCha8Rng, UniformSampler) {
    let control = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = ChaCha8Rng::seed_from_u64(seed);
    samples.set_stream(1);
    (control, UniformSampler::from_rng(samples))
}

/// Stochastic majorant gradient `(1/M) Σ_{j∈batch} ∇f_j(w) + (w − ζ)/λ`,
/// given the prox point `ζ` of `w`.
pub fn minibatch_direction(
    obj: &ErmObjective<'_>,
    lambda: f64,
    w: &[f64],
    prox_point: &[f64],
    batch: &[usize],
) -> Result<Vec<f64>> {
    check_dim(w.len(), prox_point.len())?;
    let mut dir = obj.minibatch_gradient(w, batch)?;
    for ((d, x), z) in dir.iter_mut().zip(w).zip(prox_point) {
        *d += (x - z) / lambda;
    }
    Ok(dir)
}

pub fn mbsga_run<G: Regularizer>(
    obj: &ErmObjective<'_>,
    g: &G,
    cfg: &MbsgaConfig,
    opts: &RunOptions,
) -> Result<RunTrace> {
    let (mut control, mut sampler) = split_rng(cfg.seed);
    let params = cfg.derive(obj.l_mean())?;
    run(obj, g, cfg, &params, opts, &mut control, &mut sampler)
}

/// As [`mbsga_run`] with a caller-supplied index source.
pub fn mbsga_run_with<G: Regularizer, S: BatchSampler>(
    obj: &ErmObjective<'_>,
    g: &G,
    cfg: &MbsgaConfig,
    opts: &RunOptions,
    sampler: &mut S,
) -> Result<RunTrace> {
    let (mut control, _) = split_rng(cfg.seed);
    let params = cfg.derive(obj.l_mean())?;
    run(obj, g, cfg, &params, opts, &mut control, sampler)
}

fn run<G: Regularizer, S: BatchSampler>(
    obj: &ErmObjective<'_>,
    g: &G,
    cfg: &MbsgaConfig,
    params: &MbsgaParams,
    opts: &RunOptions,
    control: &mut ChaCha8Rng,
    sampler: &mut S,
) -> Result<RunTrace> {
    let steps = match cfg.output_rule {
        OutputRule::RandomR => control.random_range(1..=cfg.iterations) - 1,
        OutputRule::LastIterate => cfg.iterations,
    };
    let (lambda, gamma) = (params.lambda, params.gamma);
    let n = obj.n();
    let mut w = opts.initial_point(obj.dim())?;
    let mut counters = Counters::default();
    let mut batch = Vec::with_capacity(params.batch);
    let mut recorder = Recorder::new(obj, g, lambda, opts);
    recorder.record(0, &w, counters)?;

    for k in 1..=steps {
        let zeta = g.prox(lambda, &w)?.point;
        counters.prox_calls += 1;
        sampler.sample(n, params.batch, &mut batch);
        let dir = minibatch_direction(obj, lambda, &w, &zeta, &batch)?;
        counters.grad_calls += batch.len() as u64;
        for (x, d) in w.iter_mut().zip(&dir) {
            *x -= gamma * d;
        }
        check_finite(k, &w)?;
        if recorder.due(k) {
            recorder.record(k, &w, counters)?;
        }
    }

    let output = match cfg.output_rule {
        OutputRule::RandomR => {
            counters.prox_calls += 1;
            g.prox(lambda, &w)?.point
        }
        OutputRule::LastIterate => w.clone(),
    };
    recorder.record_final(steps, &w, counters)?;
    Ok(RunTrace {
        records: recorder.records,
        final_iterate: w,
        output,
        counters,
        iterations: steps,
        outer_iterations: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthetic_separable, SparseDataset};
    use crate::optim::sampler::ScriptedSampler;
    use crate::regularizer::LogSumRegularizer;

    fn tiny() -> SparseDataset {
        SparseDataset::from_dense(
            &[
                vec![1.0, 0.5],
                vec![-0.3, 1.2],
                vec![0.8, -0.9],
                vec![0.2, 0.1],
            ],
            vec![1.0, -1.0, 1.0, -1.0],
        )
        .unwrap()
    }

    #[test]
    fn one_step_matches_straight_line_oracle() {
        let ds = tiny();
        let obj = ErmObjective::new(&ds);
        let (kappa, nu) = (0.3, 0.5);
        let g = LogSumRegularizer::new(kappa, nu, 2).unwrap();
        let mut cfg = MbsgaConfig::new(16, 0.7, 1);
        cfg.output_rule = OutputRule::LastIterate;
        cfg.iterations = 1;
        let w1 = vec![0.4, -0.6];
        let batch = vec![2, 0, 2];
        let trace = mbsga_run_with(
            &obj,
            &g,
            &MbsgaConfig {
                iterations: 1,
                ..cfg
            },
            &RunOptions::every(1).starting_at(w1.clone()),
            &mut ScriptedSampler::new([batch.clone()]),
        )
        .unwrap();

        // Hand-rolled: N = 1 → M = 1, λ = 1, γ = min(1/(L+1), 1/σ).
        let rows = [[1.0, 0.5], [-0.3, 1.2], [0.8, -0.9], [0.2, 0.1]];
        let ys = [1.0, -1.0, 1.0, -1.0];
        let l_mean = 2.0 * rows.iter().map(|r| r[0] * r[0] + r[1] * r[1]).sum::<f64>() / 4.0;
        let lambda = 1.0;
        let gamma = (1.0 / (l_mean + 1.0)).min(1.0 / 0.7);
        let prox = |w: f64| {
            // brute force on a fine grid, good to ~1e-7
            let phi = |x: f64| (x - w).powi(2) / (2.0 * lambda) + kappa * (1.0 + x.abs() / nu).ln();
            let mut best = 0.0;
            for k in -2_000_000..=2_000_000 {
                let x = k as f64 * 5e-7;
                if phi(x) < phi(best) {
                    best = x;
                }
            }
            best
        };
        let zeta = [prox(w1[0]), prox(w1[1])];
        let mut grad = [0.0, 0.0];
        for &j in &batch {
            let m = ys[j] * (rows[j][0] * w1[0] + rows[j][1] * w1[1]);
            let u = m - 1.0;
            let d = if m >= 1.0 {
                0.0
            } else {
                2.0 * u / (1.0 + u * u)
            };
            grad[0] += d * ys[j] * rows[j][0] / 3.0;
            grad[1] += d * ys[j] * rows[j][1] / 3.0;
        }
        for i in 0..2 {
            let expected = w1[i] - gamma * (grad[i] + (w1[i] - zeta[i]) / lambda);
            assert!(
                (trace.final_iterate[i] - expected).abs() < 1e-6,
                "coord {i}"
            );
        }
        assert_eq!(trace.counters.grad_calls, 3);
        assert_eq!(trace.counters.prox_calls, 1);
    }

    #[test]
    fn fixed_point_stays_put() {
        let ds =
            SparseDataset::from_dense(&[vec![1.0, 0.5], vec![-0.3, 1.2]], vec![1.0, -1.0]).unwrap();
        let obj = ErmObjective::new(&ds);
        let g = LogSumRegularizer::new(0.0, 1.0, 2).unwrap();
        // all margins > 1 gives ∇f = 0, and κ = 0 gives ζ = w
        let w = vec![10.0, -10.0];
        assert!((0..2).all(|j| obj.margin(j, &w) > 1.0));
        let mut cfg = MbsgaConfig::new(50, 0.0, 3);
        cfg.output_rule = OutputRule::LastIterate;
        let trace = mbsga_run(
            &obj,
            &g,
            &cfg,
            &RunOptions::every(10).starting_at(w.clone()),
        )
        .unwrap();
        assert_eq!(trace.final_iterate, w);
        assert_eq!(trace.output, w);
    }

    #[test]
    fn deterministic_given_seed() {
        let ds = synthetic_separable(60, 5, 0.1, 4).unwrap();
        let obj = ErmObjective::new(&ds);
        let g = LogSumRegularizer::new(0.2, 1.0, 5).unwrap();
        let cfg = MbsgaConfig::new(300, 0.5, 42);
        let a = mbsga_run(&obj, &g, &cfg, &RunOptions::every(7)).unwrap();
        let b = mbsga_run(&obj, &g, &cfg, &RunOptions::every(7)).unwrap();
        assert_eq!(a.final_iterate, b.final_iterate);
        assert_eq!(a.output, b.output);
        assert_eq!(a.iterations, b.iterations);
        let strip = |t: &RunTrace| {
            t.records
                .iter()
                .map(|r| (r.iteration, r.objective.to_bits()))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a), strip(&b));
    }

    #[test]
    fn random_output_rule_counts() {
        let ds = synthetic_separable(30, 3, 0.1, 2).unwrap();
        let obj = ErmObjective::new(&ds);
        let g = LogSumRegularizer::new(0.1, 1.0, 3).unwrap();
        for seed in 0..20 {
            let cfg = MbsgaConfig::new(81, 0.0, seed);
            let trace = mbsga_run(&obj, &g, &cfg, &RunOptions::every(1)).unwrap();
            let k = trace.iterations as u64;
            assert!(k < 81);
            assert_eq!(trace.counters.grad_calls, 3 * k);
            assert_eq!(trace.counters.prox_calls, k + 1);
            assert_eq!(
                trace.output,
                g.prox(
                    cfg.derive(obj.l_mean()).unwrap().lambda,
                    &trace.final_iterate
                )
                .unwrap()
                .point
            );
        }
    }

    #[test]
    fn divergence_is_reported() {
        let ds = synthetic_separable(10, 2, 0.1, 2).unwrap();
        let obj = ErmObjective::new(&ds);
        let g = LogSumRegularizer::new(0.1, 1.0, 2).unwrap();
        let cfg = MbsgaConfig {
            output_rule: OutputRule::LastIterate,
            ..MbsgaConfig::new(5, 0.0, 1)
        };
        let start = vec![f64::NAN, 0.0];
        let err = mbsga_run(&obj, &g, &cfg, &RunOptions::every(1).starting_at(start)).unwrap_err();
        assert!(matches!(err, crate::Error::Divergence { .. }));
    }
}
