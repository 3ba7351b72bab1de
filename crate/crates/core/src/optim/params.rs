//! Step-size and batch-size schedules derived from the iteration budget.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which point a run returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutputRule {
    /// Stop at a uniformly drawn iteration and return the prox of that iterate.
    #[default]
    RandomR,
    /// Run the whole budget and return the last iterate without a final prox.
    LastIterate,
}

impl std::str::FromStr for OutputRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random_r" | "random-r" | "random_R" => Ok(OutputRule::RandomR),
            "last_iterate" | "last-iterate" => Ok(OutputRule::LastIterate),
            other => Err(Error::Config(format!("unknown output rule {other:?}"))),
        }
    }
}

/// `⌈x⌉`, except values within relative 1e-9 of an integer snap to it so that
/// e.g. `10000^0.25` yields 10 regardless of `powf` rounding.
pub fn ceil_power(base: f64, exponent: f64) -> usize {
    let x = base.powf(exponent);
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MbsgaConfig {
    /// Iteration budget `N`.
    pub iterations: usize,
    pub alpha: f64,
    pub theta: f64,
    /// Bound on the stochastic gradient deviation; zero disables that step-size cap.
    pub sigma: f64,
    pub seed: u64,
    pub output_rule: OutputRule,
}

impl MbsgaConfig {
    /// Theory-backed exponents `α = θ = 1/4`.
    pub fn new(iterations: usize, sigma: f64, seed: u64) -> Self {
        MbsgaConfig {
            iterations,
            alpha: 0.25,
            theta: 0.25,
            sigma,
            seed,
            output_rule: OutputRule::RandomR,
        }
    }

    pub fn derive(&self, l_smooth: f64) -> Result<MbsgaParams> {
        mbsga_derive_params(
            self.iterations,
            self.alpha,
            self.theta,
            l_smooth,
            self.sigma,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MbsgaParams {
    pub batch: usize,
    pub lambda: f64,
    pub l_envelope: f64,
    pub gamma: f64,
}

/// `M = ⌈N^α⌉`, `λ = N^{−θ}`, `L_E = L + 1/λ`, `γ = min{1/L_E, 1/(σ√N)}`.
pub fn mbsga_derive_params(
    n_iters: usize,
    alpha: f64,
    theta: f64,
    l_smooth: f64,
    sigma: f64,
) -> Result<MbsgaParams> {
    if n_iters < 1 {
        return Err(Error::InvalidParameter(
            "iteration budget must be >= 1".into(),
        ));
    }
    if !(l_smooth >= 0.0) || !l_smooth.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "smoothness must be >= 0, got {l_smooth}"
        )));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "sigma must be >= 0, got {sigma}"
        )));
    }
    let n = n_iters as f64;
    let batch = ceil_power(n, alpha).max(1);
    let lambda = n.powf(-theta);
    let l_envelope = l_smooth + 1.0 / lambda;
    let mut gamma = 1.0 / l_envelope;
    if sigma > 0.0 {
        gamma = gamma.min(1.0 / (sigma * n.sqrt()));
    }
    Ok(MbsgaParams {
        batch,
        lambda,
        l_envelope,
        gamma,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VrsgaConfig {
    /// Total inner-iteration budget `N`.
    pub iterations: usize,
    pub alpha: f64,
    pub theta: f64,
    pub seed: u64,
    pub output_rule: OutputRule,
}

impl VrsgaConfig {
    /// Theory-backed exponents `α = θ = 1/3`.
    pub fn new(iterations: usize, seed: u64) -> Self {
        VrsgaConfig {
            iterations,
            alpha: 1.0 / 3.0,
            theta: 1.0 / 3.0,
            seed,
            output_rule: OutputRule::RandomR,
        }
    }

    pub fn derive(&self, n_samples: usize, l_smooth: f64) -> Result<VrsgaParams> {
        vrsga_derive_params(self.iterations, n_samples, self.alpha, self.theta, l_smooth)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VrsgaParams {
    /// Inner loop length `m`.
    pub inner: usize,
    /// Inner batch size `b = m²`.
    pub batch: usize,
    /// Outer loop count `S`.
    pub outer: usize,
    pub lambda: f64,
    pub l_envelope: f64,
    pub gamma: f64,
}

/// `m = ⌈n^α⌉`, `b = m²`, `S = ⌈N/m⌉`, `λ = (Sm)^{−θ}`, `γ = 1/(6 L_E)`.
pub fn vrsga_derive_params(
    n_iters: usize,
    n_samples: usize,
    alpha: f64,
    theta: f64,
    l_smooth: f64,
) -> Result<VrsgaParams> {
    if n_iters < 1 {
        return Err(Error::InvalidParameter(
            "iteration budget must be >= 1".into(),
        ));
    }
    if n_samples < 1 {
        return Err(Error::EmptyDataset);
    }
    if !(l_smooth >= 0.0) || !l_smooth.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "smoothness must be >= 0, got {l_smooth}"
        )));
    }
    let inner = ceil_power(n_samples as f64, alpha).max(1);
    let batch = inner * inner;
    let outer = n_iters.div_ceil(inner);
    let lambda = ((outer * inner) as f64).powf(-theta);
    let l_envelope = l_smooth + 1.0 / lambda;
    Ok(VrsgaParams {
        inner,
        batch,
        outer,
        lambda,
        l_envelope,
        gamma: 1.0 / (6.0 * l_envelope),
    })
}

/// Largest `N` with `N·⌈N^α⌉ ≤ passes·n`.
pub fn mbsga_iterations_for_passes(n_samples: usize, passes: f64, alpha: f64) -> Result<usize> {
    let budget = passes * n_samples as f64;
    let cost = |k: usize| (k * ceil_power(k as f64, alpha).max(1)) as f64;
    if !(budget >= 1.0) || cost(1) > budget {
        return Err(Error::InvalidParameter(format!(
            "budget of {passes} passes is below one iteration"
        )));
    }
    let (mut lo, mut hi) = (1usize, budget.floor() as usize);
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if cost(mid) <= budget {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    Ok(lo)
}

/// Largest `S` with `S·(n + m·b) ≤ passes·n`, returned with the nominal `N = S·m`.
pub fn vrsga_iterations_for_passes(
    n_samples: usize,
    passes: f64,
    alpha: f64,
) -> Result<(usize, usize)> {
    let m = ceil_power(n_samples as f64, alpha).max(1);
    let per_outer = (n_samples + m * m * m) as f64;
    let outer = (passes * n_samples as f64 / per_outer).floor() as usize;
    if outer < 1 {
        return Err(Error::InvalidParameter(format!(
            "budget of {passes} passes is below one outer iteration"
        )));
    }
    Ok((outer, outer * m))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mbsga_params_example() {
        let p = mbsga_derive_params(10_000, 0.25, 0.25, 1.0, 0.0).unwrap();
        assert_eq!(p.batch, 10);
        assert!((p.lambda - 0.1).abs() < 1e-15);
        assert!((p.l_envelope - 11.0).abs() < 1e-12);
        assert!((p.gamma - 1.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn mbsga_sigma_branch() {
        let p = mbsga_derive_params(100, 0.25, 0.25, 1.0, 1000.0).unwrap();
        assert!((p.gamma - 1e-4).abs() < 1e-18);
        assert!(p.gamma < 1.0 / p.l_envelope);
        assert!(mbsga_derive_params(0, 0.25, 0.25, 1.0, 0.0).is_err());
        assert!(mbsga_derive_params(10, 0.25, 0.25, -1.0, 0.0).is_err());
    }

    #[test]
    fn vrsga_params() {
        let p = vrsga_derive_params(42, 200, 1.0 / 3.0, 1.0 / 3.0, 2.0).unwrap();
        assert_eq!(p.inner, 6);
        assert_eq!(p.batch, 36);
        assert_eq!(p.outer, 7);
        assert!((p.lambda - 42f64.powf(-1.0 / 3.0)).abs() < 1e-15);
        assert_eq!(p.gamma * 6.0 * p.l_envelope, 1.0);

        // n = 1000 → m = 10 exactly despite powf rounding
        let p = vrsga_derive_params(95, 1000, 1.0 / 3.0, 1.0 / 3.0, 0.0).unwrap();
        assert_eq!((p.inner, p.batch, p.outer), (10, 100, 10));
    }

    #[test]
    fn pass_budgets() {
        let n = mbsga_iterations_for_passes(200, 15.0, 0.25).unwrap();
        assert!(n * ceil_power(n as f64, 0.25) <= 3000);
        let next = n + 1;
        assert!(next * ceil_power(next as f64, 0.25) > 3000);

        let (s, nominal) = vrsga_iterations_for_passes(200, 15.0, 1.0 / 3.0).unwrap();
        assert_eq!((s, nominal), (7, 42));
        assert!(vrsga_iterations_for_passes(200, 0.5, 1.0 / 3.0).is_err());
        assert!(mbsga_iterations_for_passes(10, 0.0, 0.25).is_err());
    }

    #[test]
    fn output_rule_parsing() {
        assert_eq!(
            "random_r".parse::<OutputRule>().unwrap(),
            OutputRule::RandomR
        );
        assert_eq!(
            "last-iterate".parse::<OutputRule>().unwrap(),
            OutputRule::LastIterate
        );
        assert!("best".parse::<OutputRule>().is_err());
    }
}
