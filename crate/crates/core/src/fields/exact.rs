use nalgebra::{Cholesky, DMatrix};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{CovarianceModel, FieldSample, FieldSampler, GridSpec};
use crate::error::{Error, Result};
use crate::rng::{experiment_id, substream, StreamRng};

const JITTER_START: f64 = 1e-14;
const JITTER_MAX: f64 = 1e-10;
/// Dense factorization is cubic in the grid size.
pub const MAX_EXACT_POINTS: usize = 8192;

/// Dense Cholesky sampler: `x = L z` with `L L^T = R + jitter I`.
#[derive(Debug, Clone)]
pub struct ExactSampler {
    factor: DMatrix<f64>,
    jitter: f64,
}

impl ExactSampler {
    pub fn from_covariance(mut cov: DMatrix<f64>) -> Result<Self> {
        let n = cov.nrows();
        let scale = cov.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = if scale > 0.0 { scale } else { 1.0 };
        let mut jitter = 0.0;
        loop {
            if let Some(ch) = Cholesky::new(cov.clone()) {
                return Ok(ExactSampler { factor: ch.unpack(), jitter });
            }
            let next = if jitter == 0.0 { JITTER_START } else { jitter * 10.0 };
            if next > JITTER_MAX * (1.0 + 1e-9) {
                return Err(Error::Factorization { jitter });
            }
            for i in 0..n {
                cov[(i, i)] += (next - jitter) * scale;
            }
            jitter = next;
        }
    }

    pub fn new(grid: &GridSpec, cov: &CovarianceModel) -> Result<Self> {
        let n = grid.len();
        if n > MAX_EXACT_POINTS {
            return Err(Error::domain(format!(
                "exact sampler limited to {MAX_EXACT_POINTS} grid points, got {n}"
            )));
        }
        let points = grid.points();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = cov.eval(&points[i], &points[j])?;
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Self::from_covariance(m)
    }

    /// Relative diagonal jitter that made the factorization succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }
}

impl FieldSampler for ExactSampler {
    fn points(&self) -> usize {
        self.factor.nrows()
    }

    fn draw(&self, rng: &mut StreamRng, out: &mut [f64]) {
        let n = self.factor.nrows();
        let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        for (i, o) in out.iter_mut().enumerate().take(n) {
            let row = self.factor.row(i);
            *o = (0..=i).map(|k| row[k] * z[k]).sum();
        }
    }
}

/// `replicas` independent draws of the centered field with covariance `cov`
/// on `grid`. Replica `r` uses substream `r` of `seed`.
pub fn sample_field_exact(
    grid: &GridSpec,
    cov: &CovarianceModel,
    seed: u64,
    replicas: usize,
) -> Result<FieldSample> {
    let p = grid.len();
    if replicas == 0 {
        return FieldSample::new(grid.clone(), 0, Vec::new());
    }
    let sampler = ExactSampler::new(grid, cov)?;
    let exp = experiment_id("field/exact");
    let mut values = vec![0.0; replicas * p];
    values.par_chunks_mut(p).enumerate().for_each(|(r, out)| {
        let mut rng = substream(seed, exp, r as u64);
        sampler.draw(&mut rng, out);
    });
    FieldSample::new(grid.clone(), replicas, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Hurst;
    use std::sync::Arc;

    #[test]
    fn zero_replicas_is_empty() {
        let g = GridSpec::interval(1.0, 2.0, 4).unwrap();
        let s = sample_field_exact(&g, &CovarianceModel::Fbm(Hurst::new(0.3).unwrap()), 1, 0).unwrap();
        assert!(s.is_empty());
        assert!(s.values().is_empty());
    }

    #[test]
    fn deterministic_under_seed() {
        let g = GridSpec::interval(1.0, 2.0, 8).unwrap();
        let cov = CovarianceModel::Fbm(Hurst::new(0.7).unwrap());
        let a = sample_field_exact(&g, &cov, 9, 50).unwrap();
        let b = sample_field_exact(&g, &cov, 9, 50).unwrap();
        assert_eq!(a, b);
        let c = sample_field_exact(&g, &cov, 10, 50).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn unit_variance_at_one() {
        let g = GridSpec::point(1.0).unwrap();
        let cov = CovarianceModel::Fbm(Hurst::new(0.3).unwrap());
        let s = sample_field_exact(&g, &cov, 5, 100_000).unwrap();
        let xs = s.values();
        let n = xs.len() as f64;
        let var = xs.iter().map(|x| x * x).sum::<f64>() / n;
        // standard error of the second moment of N(0,1) is sqrt(2/n)
        let se = (2.0 / n).sqrt();
        assert!((var - 1.0).abs() < 5.0 * se, "var {var}");
    }

    #[test]
    fn semidefinite_kernel_uses_jitter() {
        // rank-one kernel R(s,t) = s t
        let cov = CovarianceModel::Custom { dim: 1, kernel: Arc::new(|s, t| s[0] * t[0]) };
        let g = GridSpec::interval(1.0, 2.0, 5).unwrap();
        let sampler = ExactSampler::new(&g, &cov).unwrap();
        assert!(sampler.jitter() > 0.0 && sampler.jitter() <= JITTER_MAX);
    }

    #[test]
    fn indefinite_kernel_is_rejected() {
        let cov = CovarianceModel::Custom { dim: 1, kernel: Arc::new(|s, t| -(s[0] - t[0]).abs()) };
        let g = GridSpec::interval(1.0, 2.0, 5).unwrap();
        assert!(matches!(ExactSampler::new(&g, &cov), Err(Error::Factorization { .. })));
    }
}
