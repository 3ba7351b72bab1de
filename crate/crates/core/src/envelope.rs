//! Smooth majorants of `f + e_λg` anchored at an iterate.
//!
//! Writing the Moreau envelope as `e_λg(w) = ‖w‖²/(2λ) − D(w)` with `D`
//! convex and attained at `ζ = ζ^λ(w)`, linearizing `D` at an anchor `w_k`
//! gives
//!
//! ```text
//! E_k(w) = f(w) + ‖w‖²/(2λ) − D(w_k) − ζ_kᵀ(w − w_k)/λ
//! ∇E_k(w) = ∇f(w) + (w − ζ_k)/λ
//! ```
//!
//! which lies above `f + e_λg` everywhere, touches it at `w_k`, and is
//! `(L + 1/λ)`-smooth.

use crate::error::{check_dim, Error, Result};
use crate::loss::{norm, ErmObjective};
use crate::regularizer::Regularizer;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeAnchor {
    anchor: Vec<f64>,
    prox_point: Vec<f64>,
    lambda: f64,
    g_at_prox: f64,
    envelope_value: f64,
}

impl EnvelopeAnchor {
    pub fn new<G: Regularizer>(g: &G, lambda: f64, anchor: &[f64]) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be > 0, got {lambda}"
            )));
        }
        let prox = g.prox(lambda, anchor)?;
        let g_at_prox = g.value(&prox.point)?;
        Ok(EnvelopeAnchor {
            anchor: anchor.to_vec(),
            prox_point: prox.point,
            lambda,
            g_at_prox,
            envelope_value: prox.envelope_value,
        })
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    pub fn prox_point(&self) -> &[f64] {
        &self.prox_point
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn g_at_prox(&self) -> f64 {
        self.g_at_prox
    }

    /// `e_λg(w_k)` as returned by the prox.
    pub fn envelope_value(&self) -> f64 {
        self.envelope_value
    }

    /// `D(w_k) = w_kᵀζ/λ − ‖ζ‖²/(2λ) − g(ζ)`, reconstructed from the prox point.
    pub fn conjugate_value(&self) -> f64 {
        let inner: f64 = self
            .anchor
            .iter()
            .zip(&self.prox_point)
            .map(|(a, b)| a * b)
            .sum();
        let zz: f64 = self.prox_point.iter().map(|x| x * x).sum();
        inner / self.lambda - zz / (2.0 * self.lambda) - self.g_at_prox
    }

    /// `e_λg(w_k)` via the difference-of-convex form `‖w_k‖²/(2λ) − D(w_k)`.
    pub fn envelope_value_dc(&self) -> f64 {
        let ww: f64 = self.anchor.iter().map(|x| x * x).sum();
        ww / (2.0 * self.lambda) - self.conjugate_value()
    }

    /// Majorant constant `L + 1/λ`.
    pub fn smoothness(&self, l: f64) -> f64 {
        l + 1.0 / self.lambda
    }

    /// `U_k(w) = ‖w‖²/(2λ) − D(w_k) − ζᵀ(w − w_k)/λ`.
    pub fn upper_value(&self, w: &[f64]) -> Result<f64> {
        check_dim(self.anchor.len(), w.len())?;
        let ww: f64 = w.iter().map(|x| x * x).sum();
        let lin: f64 = self
            .prox_point
            .iter()
            .zip(w.iter().zip(&self.anchor))
            .map(|(z, (a, b))| z * (a - b))
            .sum();
        Ok(ww / (2.0 * self.lambda) - self.conjugate_value() - lin / self.lambda)
    }

    /// `E_k(w) = f(w) + U_k(w)`.
    pub fn majorant_value(&self, obj: &ErmObjective<'_>, w: &[f64]) -> Result<f64> {
        Ok(obj.value(w)? + self.upper_value(w)?)
    }

    pub fn gradient_into(&self, obj: &ErmObjective<'_>, w: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim(self.anchor.len(), w.len())?;
        obj.full_gradient_into(w, out)?;
        for ((o, x), z) in out.iter_mut().zip(w).zip(&self.prox_point) {
            *o += (x - z) / self.lambda;
        }
        Ok(())
    }

    /// `∇E_k(w) = ∇f(w) + (w − ζ_k)/λ`.
    pub fn gradient(&self, obj: &ErmObjective<'_>, w: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; w.len()];
        self.gradient_into(obj, w, &mut out)?;
        Ok(out)
    }

    /// `‖∇E_k(w_k)‖ + 2 l λ L`, an upper bound on `dist(0, ∂h(ζ_k))`.
    pub fn stationarity_bound<G: Regularizer>(
        &self,
        obj: &ErmObjective<'_>,
        g: &G,
        l_smooth: f64,
    ) -> Result<f64> {
        let grad = self.gradient(obj, &self.anchor)?;
        Ok(norm(&grad) + 2.0 * g.lipschitz() * self.lambda * l_smooth)
    }

    /// `∇f(ζ_k) + (w_k − ζ_k)/λ`, an explicit element of `∂h(ζ_k)`.
    pub fn subgradient_at_prox(&self, obj: &ErmObjective<'_>) -> Result<Vec<f64>> {
        let mut out = obj.full_gradient(&self.prox_point)?;
        for ((o, a), z) in out.iter_mut().zip(&self.anchor).zip(&self.prox_point) {
            *o += (a - z) / self.lambda;
        }
        Ok(out)
    }
}

pub fn envelope_majorant_value(
    a: &EnvelopeAnchor,
    obj: &ErmObjective<'_>,
    w: &[f64],
) -> Result<f64> {
    a.majorant_value(obj, w)
}

pub fn envelope_gradient(
    a: &EnvelopeAnchor,
    obj: &ErmObjective<'_>,
    w: &[f64],
) -> Result<Vec<f64>> {
    a.gradient(obj, w)
}

/// `h̃_λ(w) = f(w) + e_λg(w)`.
pub fn aux_objective<G: Regularizer>(
    obj: &ErmObjective<'_>,
    g: &G,
    lambda: f64,
    w: &[f64],
) -> Result<f64> {
    Ok(obj.value(w)? + g.envelope(lambda, w)?)
}

/// `h(w) = f(w) + g(w)`.
pub fn objective<G: Regularizer>(obj: &ErmObjective<'_>, g: &G, w: &[f64]) -> Result<f64> {
    Ok(obj.value(w)? + g.value(w)?)
}

pub fn stationarity_bound<G: Regularizer>(
    a: &EnvelopeAnchor,
    obj: &ErmObjective<'_>,
    g: &G,
    l_smooth: f64,
) -> Result<f64> {
    a.stationarity_bound(obj, g, l_smooth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthetic_separable, SparseDataset};
    use crate::loss::sq_dist;
    use crate::regularizer::LogSumRegularizer;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, d: usize, r: f64) -> Vec<f64> {
        (0..d).map(|_| rng.random_range(-r..r)).collect()
    }

    #[test]
    fn touches_and_majorizes() {
        let ds = synthetic_separable(25, 4, 0.2, 13).unwrap();
        let obj = ErmObjective::new(&ds);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let g =
                LogSumRegularizer::new(rng.random_range(0.01..2.0), rng.random_range(0.1..3.0), 4)
                    .unwrap();
            let lambda = rng.random_range(0.01..3.0);
            let wk = rand_vec(&mut rng, 4, 4.0);
            let a = EnvelopeAnchor::new(&g, lambda, &wk).unwrap();
            let at_anchor = a.majorant_value(&obj, &wk).unwrap();
            let aux = aux_objective(&obj, &g, lambda, &wk).unwrap();
            assert!((at_anchor - aux).abs() <= 1e-10);
            assert!((a.envelope_value() - a.envelope_value_dc()).abs() <= 1e-10);

            let w = rand_vec(&mut rng, 4, 6.0);
            let e = a.majorant_value(&obj, &w).unwrap();
            assert!(e >= aux_objective(&obj, &g, lambda, &w).unwrap() - 1e-9);
        }
    }

    #[test]
    fn zero_penalty_reduces_to_proximal_quadratic() {
        let ds = synthetic_separable(10, 3, 0.1, 2).unwrap();
        let obj = ErmObjective::new(&ds);
        let g = LogSumRegularizer::new(0.0, 1.0, 3).unwrap();
        let wk = [0.5, -1.0, 2.0];
        let a = EnvelopeAnchor::new(&g, 0.7, &wk).unwrap();
        assert_eq!(a.prox_point(), &wk);
        let w = [1.0, 0.0, -0.5];
        let expected = obj.value(&w).unwrap() + sq_dist(&w, &wk) / 1.4;
        assert!((a.majorant_value(&obj, &w).unwrap() - expected).abs() < 1e-12);

        // l = 0 so the bound is just ‖∇f(w_k)‖
        let bound = a.stationarity_bound(&obj, &g, obj.l_mean()).unwrap();
        assert!((bound - norm(&obj.full_gradient(&wk).unwrap())).abs() < 1e-15);

        let aux = aux_objective(&obj, &g, 0.7, &w).unwrap();
        assert_eq!(aux, objective(&obj, &g, &w).unwrap());
    }

    #[test]
    fn gradient_vanishes_at_flat_fixed_point() {
        let ds =
            SparseDataset::from_dense(&[vec![1.0, 0.0], vec![0.0, -1.0]], vec![1.0, -1.0]).unwrap();
        let obj = ErmObjective::new(&ds);
        let g = LogSumRegularizer::new(0.0, 1.0, 2).unwrap();
        let w = [3.0, 3.0];
        let a = EnvelopeAnchor::new(&g, 0.5, &w).unwrap();
        assert_eq!(a.gradient(&obj, a.prox_point()).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let ds = synthetic_separable(30, 5, 0.2, 17).unwrap();
        let obj = ErmObjective::new(&ds);
        let g = LogSumRegularizer::new(0.2, 1.0, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h = 1e-5;
        for _ in 0..30 {
            let a = EnvelopeAnchor::new(&g, 0.3, &rand_vec(&mut rng, 5, 2.0)).unwrap();
            let w = rand_vec(&mut rng, 5, 2.0);
            let grad = a.gradient(&obj, &w).unwrap();
            let fd: Vec<f64> = (0..5)
                .map(|i| {
                    let (mut p, mut m) = (w.clone(), w.clone());
                    p[i] += h;
                    m[i] -= h;
                    (a.majorant_value(&obj, &p).unwrap() - a.majorant_value(&obj, &m).unwrap())
                        / (2.0 * h)
                })
                .collect();
            let rel = sq_dist(&grad, &fd).sqrt() / norm(&fd).max(1e-12);
            assert!(rel < 1e-5, "relative error {rel}");
        }
    }

    #[test]
    fn majorant_smoothness() {
        let ds = synthetic_separable(20, 3, 0.2, 5).unwrap();
        let obj = ErmObjective::new(&ds);
        let g = LogSumRegularizer::new(0.5, 0.5, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..2000 {
            let lambda = rng.random_range(0.01..2.0);
            let a = EnvelopeAnchor::new(&g, lambda, &rand_vec(&mut rng, 3, 3.0)).unwrap();
            let w = rand_vec(&mut rng, 3, 3.0);
            let x = rand_vec(&mut rng, 3, 3.0);
            let diff = sq_dist(
                &a.gradient(&obj, &w).unwrap(),
                &a.gradient(&obj, &x).unwrap(),
            )
            .sqrt();
            assert!(diff <= a.smoothness(obj.l_mean()) * sq_dist(&w, &x).sqrt() * (1.0 + 1e-8));
        }
    }

    #[test]
    fn stationarity_bound_dominates_subgradient() {
        let ds = synthetic_separable(40, 6, 0.15, 8).unwrap();
        let obj = ErmObjective::new(&ds);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..300 {
            let g =
                LogSumRegularizer::new(rng.random_range(0.01..1.0), rng.random_range(0.1..2.0), 6)
                    .unwrap();
            let lambda = rng.random_range(0.01..1.0);
            let a = EnvelopeAnchor::new(&g, lambda, &rand_vec(&mut rng, 6, 3.0)).unwrap();
            let sub = norm(&a.subgradient_at_prox(&obj).unwrap());
            let bound = a.stationarity_bound(&obj, &g, obj.l_mean()).unwrap();
            assert!(sub <= bound + 1e-12);
        }
    }

    #[test]
    fn bound_additive_term_is_linear_in_lambda() {
        let ds = synthetic_separable(10, 2, 0.0, 1).unwrap();
        let obj = ErmObjective::new(&ds);
        let g = LogSumRegularizer::new(0.5, 1.0, 2).unwrap();
        let extra = |lambda: f64| 2.0 * g.lipschitz() * lambda * obj.l_mean();
        assert!((extra(1e-3) * 10.0 - extra(1e-2)).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_lambda_and_dims() {
        let g = LogSumRegularizer::new(0.5, 1.0, 2).unwrap();
        assert!(EnvelopeAnchor::new(&g, 0.0, &[0.0, 0.0]).is_err());
        assert!(EnvelopeAnchor::new(&g, 1.0, &[0.0]).is_err());
        let a = EnvelopeAnchor::new(&g, 1.0, &[0.0, 0.0]).unwrap();
        assert!(a.upper_value(&[1.0]).is_err());
    }
}
