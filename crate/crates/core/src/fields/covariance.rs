use std::fmt;
use std::sync::Arc;

use super::{Hurst, HurstVector};
use crate::error::{Error, Result};

/// `E[B_H(s) B_H(t)] = (t^{2H} + s^{2H} - |t - s|^{2H}) / 2`.
pub fn fbm_covariance(s: f64, t: f64, h: Hurst) -> Result<f64> {
    if !(s >= 0.0 && t >= 0.0) {
        return Err(Error::domain(format!("fBm covariance needs s, t >= 0, got ({s}, {t})")));
    }
    let two_h = 2.0 * h.get();
    Ok(0.5 * (t.powf(two_h) + s.powf(two_h) - (t - s).abs().powf(two_h)))
}

/// Autocovariance of unit-step fractional Gaussian noise at integer lag `k`.
pub fn fgn_autocovariance(k: usize, h: Hurst) -> f64 {
    let two_h = 2.0 * h.get();
    let k = k as f64;
    0.5 * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + (k - 1.0).abs().powf(two_h))
}

/// Product kernel of the fractional Brownian sheet.
pub fn sheet_covariance(s: &[f64], t: &[f64], h: &HurstVector) -> Result<f64> {
    if s.len() != h.dim() {
        return Err(Error::DimensionMismatch { expected: h.dim(), got: s.len() });
    }
    if t.len() != h.dim() {
        return Err(Error::DimensionMismatch { expected: h.dim(), got: t.len() });
    }
    s.iter()
        .zip(t)
        .enumerate()
        .try_fold(1.0, |acc, (j, (&sj, &tj))| Ok(acc * fbm_covariance(sj, tj, h.get(j))?))
}

/// User-supplied covariance kernel on `R_+^r`.
pub type Kernel = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum CovarianceModel {
    Fbm(Hurst),
    FractionalSheet(HurstVector),
    Custom { dim: usize, kernel: Kernel },
}

impl fmt::Debug for CovarianceModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CovarianceModel::Fbm(h) => f.debug_tuple("Fbm").field(h).finish(),
            CovarianceModel::FractionalSheet(h) => f.debug_tuple("FractionalSheet").field(h).finish(),
            CovarianceModel::Custom { dim, .. } => f.debug_struct("Custom").field("dim", dim).finish_non_exhaustive(),
        }
    }
}

impl CovarianceModel {
    /// fBm for one parameter, the sheet otherwise.
    pub fn from_hurst(h: &HurstVector) -> Self {
        if h.dim() == 1 {
            CovarianceModel::Fbm(h.get(0))
        } else {
            CovarianceModel::FractionalSheet(h.clone())
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            CovarianceModel::Fbm(_) => 1,
            CovarianceModel::FractionalSheet(h) => h.dim(),
            CovarianceModel::Custom { dim, .. } => *dim,
        }
    }

    pub fn eval(&self, s: &[f64], t: &[f64]) -> Result<f64> {
        let dim = self.dim();
        for p in [s, t] {
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
            }
        }
        match self {
            CovarianceModel::Fbm(h) => fbm_covariance(s[0], t[0], *h),
            CovarianceModel::FractionalSheet(h) => sheet_covariance(s, t, h),
            CovarianceModel::Custom { kernel, .. } => {
                let v = kernel(s, t);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::domain(format!("kernel returned {v}")))
                }
            }
        }
    }

    /// `E[(xi(s) - xi(t))^2]`.
    pub fn increment_variance(&self, s: &[f64], t: &[f64]) -> Result<f64> {
        Ok(self.eval(s, s)? + self.eval(t, t)? - 2.0 * self.eval(s, t)?)
    }
}

/// `Var[xi(t) | xi(s)] = R(t,t) - R(s,t)^2 / R(s,s)`.
pub fn conditional_variance(s: &[f64], t: &[f64], cov: &CovarianceModel) -> Result<f64> {
    let rss = cov.eval(s, s)?;
    if rss <= 0.0 {
        return Err(Error::domain(format!("cannot condition on a point with R(s,s) = {rss}")));
    }
    if s == t {
        return Ok(0.0);
    }
    let rtt = cov.eval(t, t)?;
    let rst = cov.eval(s, t)?;
    Ok((rtt - rst * rst / rss).clamp(0.0, rtt.max(0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn h(x: f64) -> Hurst {
        Hurst::new(x).unwrap()
    }

    #[test]
    fn fbm_examples() {
        assert_eq!(fbm_covariance(1.0, 2.0, h(0.5)).unwrap(), 1.0);
        assert_eq!(fbm_covariance(0.0, 1.7, h(0.3)).unwrap(), 0.0);
        let t: f64 = 1.7;
        assert!((fbm_covariance(t, t, h(0.3)).unwrap() - t.powf(0.6)).abs() < 1e-15);
        assert!(fbm_covariance(-1.0, 1.0, h(0.3)).is_err());
    }

    #[test]
    fn sheet_examples() {
        let hv = HurstVector::new(&[0.5, 0.5]).unwrap();
        assert_eq!(sheet_covariance(&[1.0, 1.0], &[2.0, 2.0], &hv).unwrap(), 1.0);
        let hv = HurstVector::new(&[0.3, 0.7]).unwrap();
        let d = sheet_covariance(&[1.5, 2.0], &[1.5, 2.0], &hv).unwrap();
        assert!((d - 1.5f64.powf(0.6) * 2f64.powf(1.4)).abs() < 1e-14);
        assert!(sheet_covariance(&[1.0], &[1.0, 2.0], &hv).is_err());
        let one = HurstVector::new(&[0.3]).unwrap();
        assert_eq!(
            sheet_covariance(&[0.4], &[1.3], &one).unwrap(),
            fbm_covariance(0.4, 1.3, h(0.3)).unwrap()
        );
    }

    #[test]
    fn fgn_lag_one() {
        assert!((fgn_autocovariance(1, h(0.7)) - 0.5 * (2f64.powf(1.4) - 2.0)).abs() < 1e-15);
        assert_eq!(fgn_autocovariance(0, h(0.7)), 1.0);
        assert_eq!(fgn_autocovariance(3, h(0.5)), 0.0);
    }

    #[test]
    fn conditional_variance_examples() {
        let cov = CovarianceModel::Fbm(h(0.5));
        assert_eq!(conditional_variance(&[1.0], &[2.0], &cov).unwrap(), 1.0);
        assert_eq!(conditional_variance(&[1.3], &[1.3], &cov).unwrap(), 0.0);
        assert!(conditional_variance(&[0.0], &[1.0], &cov).is_err());
    }

    proptest! {
        #[test]
        fn fbm_symmetric(s in 0.0..5.0f64, t in 0.0..5.0f64, hh in 0.01..0.99f64) {
            let hh = h(hh);
            prop_assert_eq!(fbm_covariance(s, t, hh).unwrap(), fbm_covariance(t, s, hh).unwrap());
        }

        #[test]
        fn conditional_variance_bounded(s in 0.1..3.0f64, t in 0.1..3.0f64, hh in 0.05..0.95f64) {
            let cov = CovarianceModel::Fbm(h(hh));
            let v = conditional_variance(&[s], &[t], &cov).unwrap();
            let rtt = cov.eval(&[t], &[t]).unwrap();
            prop_assert!(v >= 0.0 && v <= rtt);
        }
    }
}
