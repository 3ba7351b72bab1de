//! Lorenz loss and the empirical-risk objective built on it.

use crate::data::SparseDataset;
use crate::error::{check_dim, Error, Result};

/// The Lorenz loss `ℒ(v) = log(1 + (v-1)²)` for `v ≤ 1`, zero above.
///
/// It is 2-smooth, bounded below by zero and has `|ℒ′| ≤ 1`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LorenzLoss;

impl LorenzLoss {
    /// Smoothness constant of the scalar loss.
    pub const SMOOTHNESS: f64 = 2.0;

    pub fn value(v: f64) -> f64 {
        if v > 1.0 {
            0.0
        } else {
            let u = v - 1.0;
            (u * u).ln_1p()
        }
    }

    pub fn deriv(v: f64) -> f64 {
        if v >= 1.0 {
            0.0
        } else {
            let u = v - 1.0;
            2.0 * u / (1.0 + u * u)
        }
    }

    /// Convex-minus-convex split `ℒ = ℒ¹ - ℒ²` with `ℒ² = v²/8`.
    pub fn dc_parts(v: f64) -> (f64, f64) {
        let concave_part = v * v / 8.0;
        (concave_part + Self::value(v), concave_part)
    }
}

pub fn lorenz_value(v: f64) -> f64 {
    LorenzLoss::value(v)
}

pub fn lorenz_deriv(v: f64) -> f64 {
    LorenzLoss::deriv(v)
}

pub fn dc_parts(v: f64) -> (f64, f64) {
    LorenzLoss::dc_parts(v)
}

/// `f(w) = (1/n) Σ_j ℒ(y_j wᵀx_j)` over a borrowed dataset.
#[derive(Debug, Clone, Copy)]
pub struct ErmObjective<'a> {
    data: &'a SparseDataset,
    l_mean: f64,
    l_max: f64,
}

impl<'a> ErmObjective<'a> {
    pub fn new(data: &'a SparseDataset) -> Self {
        let s = LorenzLoss::SMOOTHNESS;
        ErmObjective {
            data,
            l_mean: s * data.mean_row_sq_norm(),
            l_max: s * data.max_row_sq_norm(),
        }
    }

    pub fn data(&self) -> &'a SparseDataset {
        self.data
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    /// Smoothness of the average, `(2/n) Σ ‖x_j‖²`.
    pub fn l_mean(&self) -> f64 {
        self.l_mean
    }

    /// Smoothness shared by every summand, `2 max_j ‖x_j‖²`.
    pub fn l_max(&self) -> f64 {
        self.l_max
    }

    pub fn margin(&self, j: usize, w: &[f64]) -> f64 {
        self.data.label(j) * self.data.row(j).dot(w)
    }

    pub fn sample_value(&self, j: usize, w: &[f64]) -> f64 {
        LorenzLoss::value(self.margin(j, w))
    }

    pub fn value(&self, w: &[f64]) -> Result<f64> {
        check_dim(self.dim(), w.len())?;
        let total: f64 = (0..self.n()).map(|j| self.sample_value(j, w)).sum();
        Ok(total / self.n() as f64)
    }

    /// Scalar `ℒ′(y_j wᵀx_j) · y_j`; the per-sample gradient is this times `x_j`.
    pub fn sample_coefficient(&self, j: usize, w: &[f64]) -> f64 {
        LorenzLoss::deriv(self.margin(j, w)) * self.data.label(j)
    }

    /// `out += scale · ∇f_j(w)`
    pub fn add_sample_gradient(&self, j: usize, w: &[f64], scale: f64, out: &mut [f64]) {
        let c = self.sample_coefficient(j, w);
        if c != 0.0 {
            self.data.row(j).axpy(scale * c, out);
        }
    }

    pub fn sample_gradient(&self, j: usize, w: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), w.len())?;
        let mut out = vec![0.0; self.dim()];
        self.add_sample_gradient(j, w, 1.0, &mut out);
        Ok(out)
    }

    /// Average of per-sample gradients over `indices`, accumulated in the
    /// given order and divided once at the end.
    pub fn minibatch_gradient_into(
        &self,
        w: &[f64],
        indices: &[usize],
        out: &mut [f64],
    ) -> Result<()> {
        check_dim(self.dim(), w.len())?;
        check_dim(self.dim(), out.len())?;
        if indices.is_empty() {
            return Err(Error::InvalidParameter("empty sample index list".into()));
        }
        if let Some(&j) = indices.iter().find(|&&j| j >= self.n()) {
            return Err(Error::InvalidParameter(format!(
                "sample index {j} out of range for n = {}",
                self.n()
            )));
        }
        out.iter_mut().for_each(|o| *o = 0.0);
        for &j in indices {
            self.add_sample_gradient(j, w, 1.0, out);
        }
        let inv = indices.len() as f64;
        out.iter_mut().for_each(|o| *o /= inv);
        Ok(())
    }

    pub fn minibatch_gradient(&self, w: &[f64], indices: &[usize]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.minibatch_gradient_into(w, indices, &mut out)?;
        Ok(out)
    }

    /// Exact `∇f(w)`; identical bit for bit to the minibatch gradient over `0..n`.
    pub fn full_gradient_into(&self, w: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim(self.dim(), w.len())?;
        check_dim(self.dim(), out.len())?;
        out.iter_mut().for_each(|o| *o = 0.0);
        for j in 0..self.n() {
            self.add_sample_gradient(j, w, 1.0, out);
        }
        let inv = self.n() as f64;
        out.iter_mut().for_each(|o| *o /= inv);
        Ok(())
    }

    pub fn full_gradient(&self, w: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.full_gradient_into(w, &mut out)?;
        Ok(out)
    }

    /// Population variance `(1/n) Σ_j ‖∇f_j(w) − ∇f(w)‖²` of a single uniform draw.
    pub fn gradient_variance(&self, w: &[f64]) -> Result<f64> {
        let full = self.full_gradient(w)?;
        let mut total = 0.0;
        for j in 0..self.n() {
            let g = self.sample_gradient(j, w)?;
            total += sq_dist(&g, &full);
        }
        Ok(total / self.n() as f64)
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_separable;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lorenz_values() {
        assert_eq!(lorenz_value(2.0), 0.0);
        assert_eq!(lorenz_value(1.0), 0.0);
        assert!((lorenz_value(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((lorenz_value(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn lorenz_derivatives() {
        assert_eq!(lorenz_deriv(1.5), 0.0);
        assert_eq!(lorenz_deriv(1.0), 0.0);
        assert_eq!(lorenz_deriv(0.0), -1.0);
        let h = 1e-5;
        let fd = (lorenz_value(-2.0 + h) - lorenz_value(-2.0 - h)) / (2.0 * h);
        assert!((fd - lorenz_deriv(-2.0)).abs() < 1e-6);
    }

    #[test]
    fn dc_split() {
        assert_eq!(dc_parts(2.0), (0.5, 0.5));
        let (a, b) = dc_parts(0.0);
        assert!((a - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(b, 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let u: f64 = rng.random_range(-10.0..10.0);
            let v: f64 = rng.random_range(-10.0..10.0);
            let t: f64 = rng.random_range(0.0..1.0);
            let l1 = |x: f64| dc_parts(x).0;
            assert!(l1(t * u + (1.0 - t) * v) <= t * l1(u) + (1.0 - t) * l1(v) + 1e-10);
        }
    }

    #[test]
    fn gradient_at_zero_single_sample() {
        let ds = SparseDataset::from_dense(&[vec![1.0, 0.0]], vec![1.0]).unwrap();
        let obj = ErmObjective::new(&ds);
        assert_eq!(obj.full_gradient(&[0.0, 0.0]).unwrap(), vec![-1.0, 0.0]);
    }

    #[test]
    fn flat_region_has_zero_gradient() {
        let ds =
            SparseDataset::from_dense(&[vec![1.0, 0.5], vec![-1.0, 2.0]], vec![1.0, -1.0]).unwrap();
        let obj = ErmObjective::new(&ds);
        let w = [5.0, 0.0];
        assert!(obj.margin(0, &w) > 1.0 && obj.margin(1, &w) > 1.0);
        assert_eq!(obj.full_gradient(&w).unwrap(), vec![0.0, 0.0]);
        assert_eq!(obj.value(&w).unwrap(), 0.0);
    }

    #[test]
    fn full_gradient_matches_finite_differences() {
        let ds = synthetic_separable(20, 5, 0.2, 3).unwrap();
        let obj = ErmObjective::new(&ds);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 1e-5;
        for _ in 0..20 {
            let w: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
            let g = obj.full_gradient(&w).unwrap();
            let fd: Vec<f64> = (0..5)
                .map(|i| {
                    let mut p = w.clone();
                    let mut m = w.clone();
                    p[i] += h;
                    m[i] -= h;
                    (obj.value(&p).unwrap() - obj.value(&m).unwrap()) / (2.0 * h)
                })
                .collect();
            let rel = norm(&g.iter().zip(&fd).map(|(a, b)| a - b).collect::<Vec<_>>())
                / norm(&fd).max(1e-12);
            assert!(rel < 1e-5, "relative error {rel}");
        }
    }

    #[test]
    fn minibatch_over_all_is_full_gradient_bitwise() {
        let ds = synthetic_separable(17, 4, 0.1, 9).unwrap();
        let obj = ErmObjective::new(&ds);
        let w = [0.3, -0.2, 1.1, 0.0];
        let all: Vec<usize> = (0..17).collect();
        assert_eq!(
            obj.minibatch_gradient(&w, &all).unwrap(),
            obj.full_gradient(&w).unwrap()
        );
        assert_eq!(
            obj.minibatch_gradient(&w, &[4]).unwrap(),
            obj.sample_gradient(4, &w).unwrap()
        );
    }

    #[test]
    fn minibatch_errors() {
        let ds = synthetic_separable(5, 2, 0.0, 1).unwrap();
        let obj = ErmObjective::new(&ds);
        assert!(obj.minibatch_gradient(&[0.0, 0.0], &[]).is_err());
        assert!(obj.minibatch_gradient(&[0.0, 0.0], &[5]).is_err());
        assert!(matches!(
            obj.full_gradient(&[0.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn single_draw_is_unbiased() {
        let ds = synthetic_separable(8, 3, 0.25, 21).unwrap();
        let obj = ErmObjective::new(&ds);
        let w = [0.4, -0.7, 0.2];
        let exact = obj.full_gradient(&w).unwrap();
        let trials = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut sum = [0.0; 3];
        let mut sum_sq = [0.0; 3];
        for _ in 0..trials {
            let j = rng.random_range(0..8);
            let g = obj.minibatch_gradient(&w, &[j]).unwrap();
            for i in 0..3 {
                sum[i] += g[i];
                sum_sq[i] += g[i] * g[i];
            }
        }
        for i in 0..3 {
            let mean = sum[i] / trials as f64;
            let var = sum_sq[i] / trials as f64 - mean * mean;
            let se = (var / trials as f64).sqrt();
            assert!((mean - exact[i]).abs() <= 3.0 * se + 1e-12, "coord {i}");
        }
    }

    #[test]
    fn smoothness_constants() {
        let ds = synthetic_separable(30, 6, 0.1, 2).unwrap();
        let obj = ErmObjective::new(&ds);
        assert!(obj.l_mean() <= obj.l_max());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..1000 {
            let w: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
            let dist = sq_dist(&w, &x).sqrt();
            let gw = obj.full_gradient(&w).unwrap();
            let gx = obj.full_gradient(&x).unwrap();
            assert!(sq_dist(&gw, &gx).sqrt() <= obj.l_mean() * dist * (1.0 + 1e-12));
            let j = rng.random_range(0..30);
            let gw = obj.sample_gradient(j, &w).unwrap();
            let gx = obj.sample_gradient(j, &x).unwrap();
            let lj = 2.0 * ds.row_sq_norms()[j];
            assert!(sq_dist(&gw, &gx).sqrt() <= lj * dist * (1.0 + 1e-12));
        }
    }

    proptest! {
        #[test]
        fn scalar_loss_is_two_smooth(u in -50.0f64..50.0, v in -50.0f64..50.0) {
            let lhs = (lorenz_deriv(v) - lorenz_deriv(u)).abs();
            prop_assert!(lhs <= 2.0 * (v - u).abs() + 1e-15);
        }

        #[test]
        fn deriv_bounded_and_value_nonnegative(v in -1e6f64..1e6) {
            prop_assert!(lorenz_deriv(v).abs() <= 1.0);
            prop_assert!(lorenz_value(v) >= 0.0);
        }

        #[test]
        fn dc_parts_recombine(v in -1e3f64..1e3) {
            let (a, b) = dc_parts(v);
            prop_assert!(((a - b) - lorenz_value(v)).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn scalar_smoothness_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100_000 {
            let u: f64 = rng.random_range(-20.0..20.0);
            let v: f64 = rng.random_range(-20.0..20.0);
            assert!((lorenz_deriv(v) - lorenz_deriv(u)).abs() <= 2.0 * (v - u).abs() + 1e-15);
        }
    }
}
