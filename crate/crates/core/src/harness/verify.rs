//! Self-checks of the numerical building blocks against independent oracles.
//!
//! Each suite returns a [`SuiteReport`] of named checks with the measured
//! value, the tolerance it was held to and whether it passed. The default
//! sizes are the full ones; [`VerifyOptions::quick`] shrinks them for smoke
//! runs.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::{synthetic_clusters, synthetic_separable, SparseDataset};
use crate::envelope::{aux_objective, EnvelopeAnchor};
use crate::error::{Error, Result};
use crate::loss::{norm, sq_dist, ErmObjective};
use crate::optim::{
    estimate_sigma, mbsga_derive_params, mbsga_iterations_for_passes, mbsga_run, mbsga_run_with,
    minibatch_direction, variance_bound_check, variance_reduced_direction,
    vrsga_iterations_for_passes, vrsga_run, vrsga_run_with, BatchSampler, ExhaustiveSampler,
    MbsgaConfig, OutputRule, RunOptions, RunTrace, UniformSampler, VrsgaConfig,
    DEFAULT_TRIAL_ITERS,
};
use crate::regularizer::{
    prox_oracle_scalar, prox_oracle_scalar_refined, LogSumRegularizer, Regularizer,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Prox,
    Gradient,
    Envelope,
    Variance,
    Rate,
    Convergence,
    Counters,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Prox,
        Suite::Gradient,
        Suite::Envelope,
        Suite::Variance,
        Suite::Rate,
        Suite::Convergence,
        Suite::Counters,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Prox => "prox",
            Suite::Gradient => "gradient",
            Suite::Envelope => "envelope",
            Suite::Variance => "variance",
            Suite::Rate => "rate",
            Suite::Convergence => "convergence",
            Suite::Counters => "counters",
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown suite {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    /// Passes when `measured ≤ tolerance`.
    pub fn at_most(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            measured,
            tolerance,
            passed: measured <= tolerance,
            note: None,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub passed: bool,
    pub elapsed_s: f64,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    fn new(suite: Suite, checks: Vec<Check>, started: Instant) -> Self {
        SuiteReport {
            suite,
            passed: checks.iter().all(|c| c.passed),
            elapsed_s: started.elapsed().as_secs_f64(),
            checks,
        }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Divides the randomized case counts (floored at a handful).
    pub shrink: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: 20_170_801,
            shrink: 1,
        }
    }
}

impl VerifyOptions {
    pub fn quick(seed: u64) -> Self {
        VerifyOptions { seed, shrink: 100 }
    }

    fn cases(&self, full: usize) -> usize {
        (full / self.shrink.max(1)).max(full.min(5))
    }
}

pub fn run_verification(suite: Suite, opts: &VerifyOptions) -> Result<SuiteReport> {
    match suite {
        Suite::Prox => prox_suite(opts),
        Suite::Gradient => gradient_suite(opts),
        Suite::Envelope => envelope_suite(opts),
        Suite::Variance => variance_suite(opts),
        Suite::Rate => rate_suite(opts),
        Suite::Convergence => convergence_suite(opts),
        Suite::Counters => counters_suite(opts),
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..hi.ln()).exp()
}

fn uniform_vec(rng: &mut ChaCha8Rng, d: usize, r: f64) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-r..r)).collect()
}

fn random_logsum(rng: &mut ChaCha8Rng, dim: usize) -> Result<LogSumRegularizer> {
    LogSumRegularizer::new(
        log_uniform(rng, 1e-3, 10.0),
        log_uniform(rng, 1e-2, 10.0),
        dim,
    )
}

/// Closed-form scalar prox against a step-`1e-6` lattice search.
pub fn prox_suite(opts: &VerifyOptions) -> Result<SuiteReport> {
    const STEP: f64 = 1e-6;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut worst = f64::NEG_INFINITY;
    let cases = opts.cases(1000);
    for _ in 0..cases {
        let g = random_logsum(&mut rng, 1)?;
        let lambda = log_uniform(&mut rng, 1e-3, 10.0);
        let w = rng.random_range(-20.0..20.0);
        let closed = g.prox_coord(lambda, w)?;
        let grid = prox_oracle_scalar_refined(&g, lambda, w, 1e-3, STEP);
        worst = worst.max(g.prox_objective(lambda, w, closed) - g.prox_objective(lambda, w, grid));
    }

    // the plain lattice scan, on narrower intervals where it is affordable
    let mut worst_plain = f64::NEG_INFINITY;
    for _ in 0..opts.cases(40) {
        let g = random_logsum(&mut rng, 1)?;
        let lambda = log_uniform(&mut rng, 1e-3, 10.0);
        let w = rng.random_range(-2.0..2.0);
        let closed = g.prox_coord(lambda, w)?;
        let grid = prox_oracle_scalar(&g, lambda, w, STEP);
        worst_plain = worst_plain
            .max(g.prox_objective(lambda, w, closed) - g.prox_objective(lambda, w, grid));
    }

    let g = LogSumRegularizer::new(1.0, 1.0, 1)?;
    let pinned = (g.prox_coord(1.0, 3.0)? - (1.0 + 3f64.sqrt())).abs();

    let checks = vec![
        Check::at_most("closed_form_vs_grid_gap", worst, 1e-8).with_note(format!(
            "max objective excess over {cases} cases, w in [-20, 20]"
        )),
        Check::at_most("closed_form_vs_exhaustive_grid_gap", worst_plain, 1e-8),
        Check::at_most("pinned_example_error", pinned, 1e-12),
    ];
    Ok(SuiteReport::new(Suite::Prox, checks, started))
}

fn central_difference<F: Fn(&[f64]) -> Result<f64>>(f: F, w: &[f64], h: f64) -> Result<Vec<f64>> {
    let mut x = w.to_vec();
    let mut out = Vec::with_capacity(w.len());
    for i in 0..w.len() {
        x[i] = w[i] + h;
        let up = f(&x)?;
        x[i] = w[i] - h;
        let down = f(&x)?;
        x[i] = w[i];
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

fn relative_error(approx: &[f64], exact: &[f64]) -> f64 {
    (sq_dist(approx, exact).sqrt()) / norm(exact).max(1e-12)
}

/// `∇f` and `∇E` against central differences on a synthetic `n = 50, d = 10` instance.
pub fn gradient_suite(opts: &VerifyOptions) -> Result<SuiteReport> {
    const H: f64 = 1e-5;
    let started = Instant::now();
    let ds = synthetic_separable(50, 10, 0.1, opts.seed)?;
    let obj = ErmObjective::new(&ds);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9);
    let (mut worst_f, mut worst_e) = (0.0f64, 0.0f64);
    for _ in 0..opts.cases(100) {
        let w = uniform_vec(&mut rng, 10, 3.0);
        let fd = central_difference(|x| obj.value(x), &w, H)?;
        worst_f = worst_f.max(relative_error(&fd, &obj.full_gradient(&w)?));

        let g = random_logsum(&mut rng, 10)?;
        let lambda = log_uniform(&mut rng, 1e-2, 10.0);
        let anchor = EnvelopeAnchor::new(&g, lambda, &uniform_vec(&mut rng, 10, 3.0))?;
        let fd = central_difference(|x| anchor.majorant_value(&obj, x), &w, H)?;
        worst_e = worst_e.max(relative_error(&fd, &anchor.gradient(&obj, &w)?));
    }
    let checks = vec![
        Check::at_most("loss_gradient_rel_error", worst_f, 1e-5),
        Check::at_most("majorant_gradient_rel_error", worst_e, 1e-5),
    ];
    Ok(SuiteReport::new(Suite::Gradient, checks, started))
}

/// Majorization, touching and smoothness of `E` over random anchors.
pub fn majorization_checks(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let ds = synthetic_separable(50, 10, 0.1, opts.seed)?;
    let obj = ErmObjective::new(&ds);
    let l = obj.l_mean();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5151);
    let (mut below, mut touch, mut ratio) = (f64::NEG_INFINITY, 0.0f64, f64::NEG_INFINITY);
    for _ in 0..opts.cases(10_000) {
        let g = random_logsum(&mut rng, 10)?;
        let lambda = log_uniform(&mut rng, 1e-2, 10.0);
        let wk = uniform_vec(&mut rng, 10, 5.0);
        let w = uniform_vec(&mut rng, 10, 5.0);
        let x = uniform_vec(&mut rng, 10, 5.0);
        let anchor = EnvelopeAnchor::new(&g, lambda, &wk)?;

        below = below.max(aux_objective(&obj, &g, lambda, &w)? - anchor.majorant_value(&obj, &w)?);
        touch = touch
            .max((anchor.majorant_value(&obj, &wk)? - aux_objective(&obj, &g, lambda, &wk)?).abs());
        let dg = sq_dist(&anchor.gradient(&obj, &w)?, &anchor.gradient(&obj, &x)?).sqrt();
        ratio = ratio.max(dg / sq_dist(&w, &x).sqrt() / anchor.smoothness(l));
    }
    Ok(vec![
        Check::at_most("majorant_shortfall", below, 1e-9).with_note("max of h~(w) - E(w)"),
        Check::at_most("touching_gap", touch, 1e-9),
        Check::at_most("smoothness_ratio", ratio, 1.0 + 1e-8)
            .with_note("max of |grad E(w) - grad E(x)| / (|w - x| (L + 1/lambda))"),
    ])
}

pub fn envelope_suite(opts: &VerifyOptions) -> Result<SuiteReport> {
    let started = Instant::now();
    let mut checks = majorization_checks(opts)?;
    checks.extend(moreau_checks(opts)?);
    Ok(SuiteReport::new(Suite::Envelope, checks, started))
}

/// Moreau gap, prox displacement and Lipschitz bounds of the penalty.
pub fn moreau_checks(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x3333);
    let (mut gap, mut disp, mut lip) = (0usize, 0usize, 0usize);
    let (mut gap_ratio, mut disp_ratio, mut lip_ratio) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..opts.cases(10_000) {
        let d = rng.random_range(1..=12);
        let g = random_logsum(&mut rng, d)?;
        let lambda = log_uniform(&mut rng, 1e-3, 10.0);
        let w = uniform_vec(&mut rng, d, 20.0);
        let z = uniform_vec(&mut rng, d, 20.0);
        let l = g.lipschitz();
        let prox = g.prox(lambda, &w)?;
        let gw = g.value(&w)?;
        // allowance for rounding in the two sums
        let slack = 1e-12 * gw.abs().max(1.0);

        let moreau_gap = gw - prox.envelope_value;
        let gap_bound = l * l * lambda / 2.0;
        gap += (moreau_gap > gap_bound + slack) as usize;
        gap_ratio = gap_ratio.max(moreau_gap / gap_bound);

        let shift = sq_dist(&w, &prox.point).sqrt();
        disp += (shift > 2.0 * l * lambda * (1.0 + 1e-12)) as usize;
        disp_ratio = disp_ratio.max(shift / (2.0 * l * lambda));

        let change = (g.value(&z)? - gw).abs();
        let lip_bound = l * sq_dist(&z, &w).sqrt();
        lip += (change > lip_bound + slack) as usize;
        lip_ratio = lip_ratio.max(change / lip_bound);
    }
    Ok(vec![
        Check::at_most("moreau_gap_violations", gap as f64, 0.0).with_note(format!(
            "max (g - e_lambda g) / (l^2 lambda / 2) = {gap_ratio:.6}"
        )),
        Check::at_most("prox_displacement_violations", disp as f64, 0.0)
            .with_note(format!("max |w - prox| / (2 l lambda) = {disp_ratio:.6}")),
        Check::at_most("lipschitz_violations", lip as f64, 0.0)
            .with_note(format!("max |g(z) - g(w)| / (l |z - w|) = {lip_ratio:.6}")),
    ])
}

/// The five-point instance the variance checks enumerate exactly.
pub fn five_point_instance() -> SparseDataset {
    SparseDataset::from_dense(
        &[
            vec![1.0, 0.3],
            vec![-0.5, 1.0],
            vec![0.2, -0.8],
            vec![1.5, 0.5],
            vec![-1.0, -1.0],
        ],
        vec![1.0, -1.0, 1.0, -1.0, 1.0],
    )
    .expect("static instance")
}

/// Mini-batch variance against `σ²(w)/M` for `M ∈ {1, 2, 5}`.
pub fn minibatch_variance_checks(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let ds = five_point_instance();
    let obj = ErmObjective::new(&ds);
    let g = LogSumRegularizer::new(0.2, 1.0, 2)?;
    let (w, lambda) = ([0.3, -0.2], 0.5);
    let trials = opts.cases(100_000);
    let mut checks = Vec::new();
    let mut sampler = UniformSampler::new(opts.seed);
    for m in [1usize, 2, 5] {
        let vc = variance_bound_check(&obj, &g, &w, lambda, m, trials, &mut sampler)?;
        checks.push(
            Check::at_most(
                format!("minibatch_variance_M{m}_std_errors"),
                (vc.empirical - vc.bound).abs() / vc.std_error,
                3.0,
            )
            .with_note(format!(
                "empirical {:.6e}, sigma^2/M {:.6e}",
                vc.empirical, vc.bound
            )),
        );
        checks.push(Check::at_most(
            format!("minibatch_variance_M{m}_ratio"),
            vc.empirical / vc.bound,
            1.05,
        ));
    }
    Ok(checks)
}

/// Mini-batch variance plus the variance-reduced direction's degenerate and
/// unbiased cases.
pub fn variance_suite(opts: &VerifyOptions) -> Result<SuiteReport> {
    let started = Instant::now();
    let mut checks = minibatch_variance_checks(opts)?;
    checks.extend(vrsga_direction_checks(opts)?);
    Ok(SuiteReport::new(Suite::Variance, checks, started))
}

/// Exhaustive-batch identity and Monte-Carlo unbiasedness of the
/// variance-reduced direction.
pub fn vrsga_direction_checks(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let ds = synthetic_separable(20, 4, 0.15, opts.seed)?;
    let obj = ErmObjective::new(&ds);
    let g = LogSumRegularizer::new(0.3, 0.8, 4)?;
    let lambda = 0.4;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x7777);
    let all: Vec<usize> = (0..ds.n()).collect();

    let mut mismatches = 0usize;
    for _ in 0..opts.cases(1000) {
        let snapshot = uniform_vec(&mut rng, 4, 3.0);
        let w = uniform_vec(&mut rng, 4, 3.0);
        let anchor = EnvelopeAnchor::new(&g, lambda, &w)?;
        let snap_grad = obj.full_gradient(&snapshot)?;
        let v = variance_reduced_direction(
            &obj,
            lambda,
            &w,
            anchor.prox_point(),
            &snapshot,
            &snap_grad,
            &all,
        )?;
        mismatches += (v != anchor.gradient(&obj, &w)?) as usize;
    }
    // and along an actual run driven by the exhaustive sampler
    let cfg = VrsgaConfig {
        output_rule: OutputRule::LastIterate,
        ..VrsgaConfig::new(12, opts.seed)
    };
    let traced = vrsga_run_with(
        &obj,
        &g,
        &cfg,
        &RunOptions::every(1),
        &mut ExhaustiveSampler,
    )?;
    let p = cfg.derive(ds.n(), obj.l_max())?;
    let mut w = vec![0.0; 4];
    for _ in 0..traced.iterations {
        let anchor = EnvelopeAnchor::new(&g, p.lambda, &w)?;
        let d = anchor.gradient(&obj, &w)?;
        w = w.iter().zip(&d).map(|(x, d)| x - p.gamma * d).collect();
    }
    mismatches += (w != traced.final_iterate) as usize;

    let snapshot = uniform_vec(&mut rng, 4, 2.0);
    let w = uniform_vec(&mut rng, 4, 2.0);
    let anchor = EnvelopeAnchor::new(&g, lambda, &w)?;
    let exact = anchor.gradient(&obj, &w)?;
    let snap_grad = obj.full_gradient(&snapshot)?;
    let mut sampler = UniformSampler::new(opts.seed.wrapping_add(5));
    let trials = opts.cases(100_000);
    let mut sum = [0.0; 4];
    let mut sum_sq = [0.0; 4];
    let mut batch = Vec::new();
    for _ in 0..trials {
        sampler.sample(ds.n(), 3, &mut batch);
        let v = variance_reduced_direction(
            &obj,
            lambda,
            &w,
            anchor.prox_point(),
            &snapshot,
            &snap_grad,
            &batch,
        )?;
        for i in 0..4 {
            sum[i] += v[i];
            sum_sq[i] += v[i] * v[i];
        }
    }
    let t = trials as f64;
    let mut worst = 0.0f64;
    for i in 0..4 {
        let mean = sum[i] / t;
        let var = (sum_sq[i] / t - mean * mean).max(0.0);
        let se = (var / (t - 1.0)).sqrt();
        worst = worst.max((mean - exact[i]).abs() / se.max(f64::MIN_POSITIVE));
    }
    Ok(vec![
        Check::at_most("vr_exhaustive_bitwise_mismatches", mismatches as f64, 0.0),
        Check::at_most("vr_unbiased_std_errors", worst, 3.0)
            .with_note(format!("{trials} redraws, worst coordinate")),
    ])
}

/// The four-point instance of the rate-bound check.
pub fn four_point_instance() -> SparseDataset {
    SparseDataset::from_dense(
        &[
            vec![1.0, 0.5],
            vec![-0.3, 1.2],
            vec![0.8, -0.9],
            vec![0.6, 0.4],
        ],
        vec![1.0, -1.0, 1.0, -1.0],
    )
    .expect("static instance")
}

/// Dense-grid minimum of `h̃_λ` on `[−r, r]²`, refined once around the best cell.
fn grid_minimum(
    obj: &ErmObjective<'_>,
    g: &LogSumRegularizer,
    lambda: f64,
    r: f64,
    step: f64,
) -> Result<(Vec<f64>, f64)> {
    let mut best = (vec![0.0, 0.0], aux_objective(obj, g, lambda, &[0.0, 0.0])?);
    let k = (r / step).round() as i64;
    for i in -k..=k {
        for j in -k..=k {
            let w = [i as f64 * step, j as f64 * step];
            let v = aux_objective(obj, g, lambda, &w)?;
            if v < best.1 {
                best = (w.to_vec(), v);
            }
        }
    }
    let fine = step / 100.0;
    let centre = best.0.clone();
    for i in -100..=100 {
        for j in -100..=100 {
            let w = [centre[0] + i as f64 * fine, centre[1] + j as f64 * fine];
            let v = aux_objective(obj, g, lambda, &w)?;
            if v < best.1 {
                best = (w.to_vec(), v);
            }
        }
    }
    Ok(best)
}

fn max_variance_on_grid(obj: &ErmObjective<'_>, r: f64, step: f64) -> Result<f64> {
    let k = (r / step).round() as i64;
    let mut worst = 0.0f64;
    for i in -k..=k {
        for j in -k..=k {
            worst = worst.max(obj.gradient_variance(&[i as f64 * step, j as f64 * step])?);
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateOutcome {
    pub mean_sq_grad: f64,
    pub bound: f64,
    pub delta: f64,
    pub sigma: f64,
    pub aux_min: f64,
    pub runs: usize,
    /// Runs where the library and the straight-line replay diverged.
    pub disagreements: usize,
}

/// Average `‖∇E_k(w_k)‖²` over `k = 1..N` and `runs` seeded MBSGA runs on
/// the four-point instance, against
/// `Δ̃/N·(L + N^θ) + σ/√N·(Δ̃ + (L + N^θ)/M)`.
///
/// `σ²` is the largest exact variance over a grid and over every iterate
/// visited; if the runs leave the grid's envelope, they are repeated with
/// the enlarged `σ`.
pub fn rate_bound(runs: usize, iterations: usize, seed: u64) -> Result<RateOutcome> {
    let (alpha, theta) = (0.25, 0.25);
    let ds = four_point_instance();
    let obj = ErmObjective::new(&ds);
    let g = LogSumRegularizer::new(0.25, 1.0, 2)?;
    let l = obj.l_mean();
    let base = mbsga_derive_params(iterations, alpha, theta, l, 0.0)?;
    let (_, aux_min) = grid_minimum(&obj, &g, base.lambda, 6.0, 0.01)?;
    let delta = 2.0 * (aux_objective(&obj, &g, base.lambda, &[0.0, 0.0])? - aux_min);

    let mut sigma_sq = max_variance_on_grid(&obj, 6.0, 0.02)?;
    for _ in 0..5 {
        let sigma = sigma_sq.sqrt();
        let mut total = 0.0;
        let mut count = 0usize;
        let mut visited = 0.0f64;
        let mut disagreements = 0usize;
        for r in 0..runs as u64 {
            let cfg = MbsgaConfig {
                alpha,
                theta,
                output_rule: OutputRule::LastIterate,
                ..MbsgaConfig::new(iterations, sigma, seed.wrapping_add(r))
            };
            let (trace, iterates, agree) = mbsga_with_iterates(&obj, &g, &cfg)?;
            disagreements += (!agree) as usize;
            for rec in trace
                .records
                .iter()
                .filter(|rec| rec.iteration < iterations)
            {
                let gn = rec.envelope_grad_norm.expect("tracked");
                total += gn * gn;
                count += 1;
            }
            for w in &iterates {
                visited = visited.max(obj.gradient_variance(w)?);
            }
        }
        if visited > sigma_sq {
            sigma_sq = visited;
            continue;
        }
        let n = iterations as f64;
        let scale = l + n.powf(theta);
        let bound = delta / n * scale + sigma / n.sqrt() * (delta + scale / base.batch as f64);
        return Ok(RateOutcome {
            mean_sq_grad: total / count as f64,
            bound,
            delta,
            sigma,
            aux_min,
            runs,
            disagreements,
        });
    }
    Err(Error::Config(
        "sigma did not stabilize over the visited iterates".into(),
    ))
}

/// A straight-line MBSGA loop that keeps every iterate, next to the library
/// run with the same sampler seed. Returns the library trace, the iterates
/// and whether both ended on the same point.
fn mbsga_with_iterates(
    obj: &ErmObjective<'_>,
    g: &LogSumRegularizer,
    cfg: &MbsgaConfig,
) -> Result<(RunTrace, Vec<Vec<f64>>, bool)> {
    let params = cfg.derive(obj.l_mean())?;
    let mut sampler = UniformSampler::new(cfg.seed);
    let mut w = vec![0.0; obj.dim()];
    let mut iterates = vec![w.clone()];
    let mut batch = Vec::new();
    for _ in 0..cfg.iterations {
        let zeta = g.prox(params.lambda, &w)?.point;
        sampler.sample(obj.n(), params.batch, &mut batch);
        let dir = minibatch_direction(obj, params.lambda, &w, &zeta, &batch)?;
        for (x, d) in w.iter_mut().zip(&dir) {
            *x -= params.gamma * d;
        }
        iterates.push(w.clone());
    }
    let trace = mbsga_run_with(
        obj,
        g,
        cfg,
        &RunOptions::every(1).with_envelope_grad(),
        &mut UniformSampler::new(cfg.seed),
    )?;
    let agree = trace.final_iterate == w;
    Ok((trace, iterates, agree))
}

pub fn rate_suite(opts: &VerifyOptions) -> Result<SuiteReport> {
    let started = Instant::now();
    let runs = opts.cases(50).min(50);
    let out = rate_bound(runs, 200, opts.seed)?;
    let checks = vec![
        Check::at_most("mean_sq_envelope_grad", out.mean_sq_grad, out.bound).with_note(format!(
            "delta {:.6}, sigma {:.6}, grid min {:.6}, {} runs",
            out.delta, out.sigma, out.aux_min, out.runs
        )),
        Check::at_most("replay_disagreements", out.disagreements as f64, 0.0),
    ];
    Ok(SuiteReport::new(Suite::Rate, checks, started))
}

/// Generator settings of the convergence instance: two noisy clusters with
/// 10% label noise, `n = 200`, `d = 20`.
pub fn convergence_instance(seed: u64) -> Result<SparseDataset> {
    synthetic_clusters(200, 20, 3.0, 0.2, 0.1, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceOutcome {
    pub initial_objective: f64,
    pub final_objective: f64,
    pub initial_grad_norm: f64,
    pub min_grad_norm: f64,
    pub tail_mean_objective: f64,
    pub iterations: usize,
}

impl ConvergenceOutcome {
    fn from_trace(trace: &RunTrace) -> Self {
        let recs = &trace.records;
        let tail_len = (recs.len() / 10).max(1);
        let tail = &recs[recs.len() - tail_len..];
        ConvergenceOutcome {
            initial_objective: recs[0].objective,
            final_objective: recs[recs.len() - 1].objective,
            initial_grad_norm: recs[0].envelope_grad_norm.unwrap_or(f64::NAN),
            min_grad_norm: trace.min_envelope_grad_norm().unwrap_or(f64::NAN),
            tail_mean_objective: tail.iter().map(|r| r.objective).sum::<f64>() / tail_len as f64,
            iterations: trace.iterations,
        }
    }
}

/// Both methods on [`convergence_instance`] with `κ = 1/d`, `ν = 1` and a
/// 15-pass budget, each record tracking `‖∇E‖`.
pub fn convergence_runs(
    data_seed: u64,
    run_seed: u64,
) -> Result<(ConvergenceOutcome, ConvergenceOutcome)> {
    let ds = convergence_instance(data_seed)?;
    let obj = ErmObjective::new(&ds);
    let g = LogSumRegularizer::new(1.0 / ds.dim() as f64, 1.0, ds.dim())?;
    let opts = RunOptions::every(1).with_envelope_grad();

    let n_mb = mbsga_iterations_for_passes(ds.n(), 15.0, 0.25)?;
    let sigma = estimate_sigma(
        &obj,
        &g,
        n_mb,
        0.25,
        0.25,
        DEFAULT_TRIAL_ITERS,
        run_seed.wrapping_add(1 << 32),
    )?;
    let cfg = MbsgaConfig {
        output_rule: OutputRule::LastIterate,
        ..MbsgaConfig::new(n_mb, sigma.sigma, run_seed)
    };
    let mb = mbsga_run(&obj, &g, &cfg, &opts)?;

    let (_, n_vr) = vrsga_iterations_for_passes(ds.n(), 15.0, 1.0 / 3.0)?;
    let cfg = VrsgaConfig {
        output_rule: OutputRule::LastIterate,
        ..VrsgaConfig::new(n_vr, run_seed)
    };
    let vr = vrsga_run(&obj, &g, &cfg, &opts)?;
    Ok((
        ConvergenceOutcome::from_trace(&mb),
        ConvergenceOutcome::from_trace(&vr),
    ))
}

pub fn convergence_suite(opts: &VerifyOptions) -> Result<SuiteReport> {
    let started = Instant::now();
    let (mb, vr) = convergence_runs(opts.seed, opts.seed)?;
    let mut checks = Vec::new();
    for (name, o) in [("mbsga", &mb), ("vrsga", &vr)] {
        checks.push(Check::at_most(
            format!("{name}_final_over_initial_objective"),
            o.final_objective / o.initial_objective,
            1.0 - f64::EPSILON,
        ));
        checks.push(Check::at_most(
            format!("{name}_min_over_initial_grad_norm"),
            o.min_grad_norm / o.initial_grad_norm,
            0.2,
        ));
        checks.push(Check::at_most(
            format!("{name}_tail_mean_over_initial_objective"),
            o.tail_mean_objective / o.initial_objective,
            1.0 - f64::EPSILON,
        ));
    }
    Ok(SuiteReport::new(Suite::Convergence, checks, started))
}

/// Counter totals against the closed-form counts for three budgets per method.
pub fn counters_suite(opts: &VerifyOptions) -> Result<SuiteReport> {
    let started = Instant::now();
    let ds = synthetic_separable(60, 5, 0.1, opts.seed)?;
    let obj = ErmObjective::new(&ds);
    let g = LogSumRegularizer::new(0.2, 1.0, 5)?;
    let n = ds.n() as u64;
    let mut mismatches = 0usize;
    let mut cases = 0usize;

    for (iters, alpha) in [(50usize, 0.25), (300, 0.5), (1000, 1.0 / 3.0)] {
        for rule in [OutputRule::LastIterate, OutputRule::RandomR] {
            let cfg = MbsgaConfig {
                alpha,
                output_rule: rule,
                ..MbsgaConfig::new(iters, 0.0, opts.seed)
            };
            let m = cfg.derive(obj.l_mean())?.batch as u64;
            let t = mbsga_run(&obj, &g, &cfg, &RunOptions::every(iters))?;
            let k = t.iterations as u64;
            let extra = (rule == OutputRule::RandomR) as u64;
            let expected_k = if rule == OutputRule::LastIterate {
                iters as u64
            } else {
                k
            };
            mismatches += (k != expected_k
                || t.counters.grad_calls != k * m
                || t.counters.prox_calls != k + extra) as usize;
            cases += 1;
        }
    }
    for (iters, alpha) in [(40usize, 1.0 / 3.0), (90, 0.25), (25, 0.5)] {
        for rule in [OutputRule::LastIterate, OutputRule::RandomR] {
            let cfg = VrsgaConfig {
                alpha,
                output_rule: rule,
                ..VrsgaConfig::new(iters, opts.seed)
            };
            let p = cfg.derive(ds.n(), obj.l_max())?;
            let t = vrsga_run(&obj, &g, &cfg, &RunOptions::every(iters))?;
            let k = t.outer_iterations.expect("outer count") as u64;
            let (m, b) = (p.inner as u64, p.batch as u64);
            let k_ok = rule == OutputRule::RandomR || k == p.outer as u64;
            mismatches += (!k_ok
                || t.counters.grad_calls != k * n + k * m * b
                || t.counters.prox_calls != k * m) as usize;
            cases += 1;
        }
    }
    let checks = vec![Check::at_most("counter_mismatches", mismatches as f64, 0.0)
        .with_note(format!("{cases} runs"))];
    Ok(SuiteReport::new(Suite::Counters, checks, started))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("all".parse::<Suite>().is_err());
    }

    #[test]
    fn quick_suites_pass() {
        let opts = VerifyOptions::quick(3);
        for s in [
            Suite::Prox,
            Suite::Gradient,
            Suite::Envelope,
            Suite::Counters,
        ] {
            let r = run_verification(s, &opts).unwrap();
            assert!(r.passed, "{r:#?}");
        }
    }
}
