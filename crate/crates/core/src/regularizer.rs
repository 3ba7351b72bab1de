//! Separable non-convex regularizers and their proximal operators.

use crate::error::{check_dim, Error, Result};

/// A coordinate-separable penalty `g(w) = Σ_i g_i(w_i)` with a computable prox.
///
/// Only the log-sum penalty is implemented; SCAD, MCP and capped-ℓ1 fit the
/// same shape.
pub trait Regularizer {
    fn dim(&self) -> usize;

    /// Value of a single coordinate term `g_i(x)`.
    fn coord_value(&self, x: f64) -> f64;

    /// A global minimizer of `(1/2λ)(x − w)² + g_i(x)`.
    fn prox_coord(&self, lambda: f64, w: f64) -> Result<f64>;

    /// Lipschitz constant of `g` with respect to the Euclidean norm.
    fn lipschitz(&self) -> f64;

    fn value(&self, w: &[f64]) -> Result<f64> {
        check_dim(self.dim(), w.len())?;
        Ok(w.iter().map(|&x| self.coord_value(x)).sum())
    }

    /// Coordinate-wise prox together with the Moreau envelope value at `w`.
    fn prox(&self, lambda: f64, w: &[f64]) -> Result<ProxResult> {
        check_dim(self.dim(), w.len())?;
        let point = w
            .iter()
            .map(|&x| self.prox_coord(lambda, x))
            .collect::<Result<Vec<_>>>()?;
        let envelope_value = moreau_value(self, lambda, w, &point);
        Ok(ProxResult {
            point,
            envelope_value,
        })
    }

    /// Moreau envelope `e_λg(w)`.
    fn envelope(&self, lambda: f64, w: &[f64]) -> Result<f64> {
        Ok(self.prox(lambda, w)?.envelope_value)
    }
}

fn moreau_value<G: Regularizer + ?Sized>(g: &G, lambda: f64, w: &[f64], point: &[f64]) -> f64 {
    let quad: f64 = w.iter().zip(point).map(|(a, b)| (a - b) * (a - b)).sum();
    let penalty: f64 = point.iter().map(|&x| g.coord_value(x)).sum();
    quad / (2.0 * lambda) + penalty
}

/// `ζ^λ(w)` and `e_λg(w) = (1/2λ)‖w − ζ‖² + g(ζ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxResult {
    pub point: Vec<f64>,
    pub envelope_value: f64,
}

/// `g(w) = κ Σ_i log(1 + |w_i|/ν)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogSumRegularizer {
    kappa: f64,
    nu: f64,
    dim: usize,
}

impl LogSumRegularizer {
    /// `kappa = 0` is accepted and turns the prox into the identity.
    pub fn new(kappa: f64, nu: f64, dim: usize) -> Result<Self> {
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "kappa must be >= 0, got {kappa}"
            )));
        }
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::InvalidParameter(format!("nu must be > 0, got {nu}")));
        }
        Ok(LogSumRegularizer { kappa, nu, dim })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Scalar prox objective `φ(x) = (1/2λ)(x − w)² + κ log(1 + |x|/ν)`.
    pub fn prox_objective(&self, lambda: f64, w: f64, x: f64) -> f64 {
        let d = x - w;
        d * d / (2.0 * lambda) + self.coord_value(x)
    }
}

impl Regularizer for LogSumRegularizer {
    fn dim(&self) -> usize {
        self.dim
    }

    fn coord_value(&self, x: f64) -> f64 {
        self.kappa * (x.abs() / self.nu).ln_1p()
    }

    /// Reduces to `w ≥ 0` by symmetry. Stationary points on `x > 0` solve
    /// `x² + (ν − w)x + (λκ − wν) = 0`; the minimizer is whichever of `0` and
    /// those roots has the smallest objective, preferring the smaller point.
    fn prox_coord(&self, lambda: f64, w: f64) -> Result<f64> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be > 0, got {lambda}"
            )));
        }
        if self.kappa == 0.0 {
            return Ok(w);
        }
        let a = w.abs();
        if a == 0.0 {
            return Ok(0.0);
        }
        let (nu, lk) = (self.nu, lambda * self.kappa);
        let b = nu - a;
        let c = lk - a * nu;
        let disc = (a + nu) * (a + nu) - 4.0 * lk;

        let mut candidates = [0.0, f64::NAN, f64::NAN];
        if disc >= 0.0 {
            let q = -0.5 * (b + b.signum() * disc.sqrt());
            let (r1, r2) = if q != 0.0 { (q, c / q) } else { (0.0, -b) };
            candidates[1] = r1.min(r2);
            candidates[2] = r1.max(r2);
        }

        let mut best = 0.0;
        let mut best_val = self.prox_objective(lambda, a, 0.0);
        for &x in &candidates[1..] {
            if x.is_nan() || x <= 0.0 {
                continue;
            }
            let x = x.min(a);
            let val = self.prox_objective(lambda, a, x);
            if val < best_val {
                best = x;
                best_val = val;
            }
        }
        Ok(best.copysign(w))
    }

    fn lipschitz(&self) -> f64 {
        self.kappa / self.nu * (self.dim as f64).sqrt()
    }
}

pub fn reg_value(g: &LogSumRegularizer, w: &[f64]) -> Result<f64> {
    g.value(w)
}

pub fn prox_scalar(g: &LogSumRegularizer, lambda: f64, w: f64) -> Result<f64> {
    g.prox_coord(lambda, w)
}

pub fn prox_vector(g: &LogSumRegularizer, lambda: f64, w: &[f64]) -> Result<ProxResult> {
    g.prox(lambda, w)
}

pub fn lipschitz_const(g: &LogSumRegularizer) -> f64 {
    g.lipschitz()
}

/// Brute-force scalar prox: argmin of `φ` over `{0, ±step, ±2·step, …} ∩ [−|w|, |w|]`.
///
/// Cost is linear in `|w| / step`; see [`prox_oracle_scalar_refined`] for
/// fine steps on wide intervals.
pub fn prox_oracle_scalar(g: &LogSumRegularizer, lambda: f64, w: f64, grid_step: f64) -> f64 {
    let a = w.abs();
    let steps = (a / grid_step).floor() as i64;
    let mut best = 0.0;
    let mut best_val = g.prox_objective(lambda, w, 0.0);
    for k in 1..=steps {
        for x in [k as f64 * grid_step, -(k as f64) * grid_step] {
            let val = g.prox_objective(lambda, w, x);
            if val < best_val {
                best = x;
                best_val = val;
            }
        }
    }
    best
}

/// Two-level grid search on the same fine lattice as [`prox_oracle_scalar`].
///
/// A coarse pass over `[−|w|, |w|]` locates every local minimum of the
/// coarse samples; each is then re-searched on the fine lattice within one
/// coarse step on either side.
pub fn prox_oracle_scalar_refined(
    g: &LogSumRegularizer,
    lambda: f64,
    w: f64,
    coarse_step: f64,
    fine_step: f64,
) -> f64 {
    let a = w.abs();
    let ratio = (coarse_step / fine_step).round().max(1.0) as i64;
    let max_k = (a / fine_step).floor() as i64;
    let phi = |k: i64| g.prox_objective(lambda, w, k as f64 * fine_step);

    let edge = max_k - max_k % ratio;
    let mut coarse: Vec<i64> = (-edge..=edge).step_by(ratio as usize).collect();
    if edge != max_k {
        coarse.insert(0, -max_k);
        coarse.push(max_k);
    }
    let vals: Vec<f64> = coarse.iter().map(|&k| phi(k)).collect();

    let mut best_k = 0i64;
    let mut best_val = phi(0);
    for i in 0..coarse.len() {
        let left = if i > 0 { vals[i - 1] } else { f64::INFINITY };
        let right = vals.get(i + 1).copied().unwrap_or(f64::INFINITY);
        if vals[i] > left || vals[i] > right {
            continue;
        }
        let lo = (coarse[i] - ratio).max(-max_k);
        let hi = (coarse[i] + ratio).min(max_k);
        for k in lo..=hi {
            let v = phi(k);
            if v < best_val || (v == best_val && k.abs() < best_k.abs()) {
                best_k = k;
                best_val = v;
            }
        }
    }
    best_k as f64 * fine_step
}
