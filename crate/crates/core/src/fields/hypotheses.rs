//! Empirical constants of the regularity hypotheses on a finite grid.
//!
//! (H1): `E[xi(t)^2] >= c21` and
//! `c22 * sigma(s,t) <= E[(xi(s) - xi(t))^2] <= c23 * sigma(s,t)`;
//! (H2): `Var[xi(t) | xi(s)] >= c24 * sigma(s,t)`, where
//! `sigma(s,t) = sum_j |s_j - t_j|^{2 H_j}`. A grid scan can only bound the
//! continuum infimum from above.

use serde::{Deserialize, Serialize};

use super::{conditional_variance, CovarianceModel, GridSpec, HurstVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub c21: f64,
    pub c22: f64,
    pub c23: f64,
    pub c24: f64,
    pub pairs: usize,
    /// Some constant came out non-positive or non-finite.
    pub violation: bool,
}

pub fn verify_h1_h2(grid: &GridSpec, cov: &CovarianceModel, h: &HurstVector) -> Result<HypothesisReport> {
    if h.dim() != grid.dim() || cov.dim() != grid.dim() {
        return Err(Error::DimensionMismatch { expected: grid.dim(), got: h.dim() });
    }
    let points = grid.points();
    let variances: Vec<f64> = points.iter().map(|p| cov.eval(p, p)).collect::<Result<_>>()?;
    let c21 = variances.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut c22, mut c23, mut c24) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY);
    let mut pairs = 0;
    for (i, s) in points.iter().enumerate() {
        for (j, t) in points.iter().enumerate() {
            if i == j {
                continue;
            }
            let sigma: f64 = s
                .iter()
                .zip(t)
                .zip(h.components())
                .map(|((a, b), hj)| (a - b).abs().powf(2.0 * hj))
                .sum();
            if sigma <= 0.0 {
                continue;
            }
            pairs += 1;
            if i < j {
                let inc = variances[i] + variances[j] - 2.0 * cov.eval(s, t)?;
                c22 = c22.min(inc / sigma);
                c23 = c23.max(inc / sigma);
            }
            c24 = c24.min(conditional_variance(s, t, cov)? / sigma);
        }
    }
    let ok = |c: f64| c.is_finite() && c > 0.0;
    let violation = !(ok(c21) && ok(c22) && ok(c23) && ok(c24));
    Ok(HypothesisReport { c21, c22, c23, c24, pairs, violation })
}
