//! Volterra kernel of fBm for `H < 1/2`, used as a covariance cross-check.
//!
//! `B_H(t) = int_0^t K_H(s, t) dW(s)` with
//!
//! ```text
//! K_H(s,t) = c_H [ (t/s)^{H-1/2} (t-s)^{H-1/2}
//!                  - (H-1/2) s^{1/2-H} int_s^t u^{H-3/2} (u-s)^{H-1/2} du ]
//! c_H = sqrt( 2H / ((1-2H) B) ),   B = int_0^1 (1-x)^{-2H} x^{H-1/2} dx
//! ```

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use super::Hurst;
use crate::error::{Error, Result};
use crate::quadrature::tanh_sinh;

const CONSTANT_TOL: f64 = 1e-10;
const INNER_TOL: f64 = 1e-9;

/// `int_0^1 (1-x)^{-2H} x^{H-1/2} dx`, split at 1/2 and desingularized by
/// `y = (1-x)^{1-2H}` on the right half and `z = x^{H+1/2}` on the left.
fn beta_integral(h: f64) -> f64 {
    let p = 1.0 - 2.0 * h; // exponent + 1 at x = 1
    let q = h + 0.5; // exponent + 1 at x = 0
    let left = tanh_sinh(
        |z, _, _| (1.0 - z.powf(1.0 / q)).powf(p - 1.0) / q,
        0.0,
        0.5f64.powf(q),
        CONSTANT_TOL,
    );
    let right = tanh_sinh(
        |y, _, _| (1.0 - y.powf(1.0 / p)).powf(q - 1.0) / p,
        0.0,
        0.5f64.powf(p),
        CONSTANT_TOL,
    );
    left.value + right.value
}

/// Kernel for a fixed Hurst index with its normalizing constant.
#[derive(Debug, Clone, Copy)]
pub struct VolterraKernel {
    h: f64,
    c_h: f64,
}

impl VolterraKernel {
    pub fn new(h: Hurst) -> Result<Self> {
        let h = h.get();
        if h >= 0.5 {
            return Err(Error::domain(format!("Volterra kernel implemented for H < 1/2, got {h}")));
        }
        static CACHE: OnceLock<Mutex<HashMap<u64, f64>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        let c_h = *cache
            .lock()
            .expect("c_H cache poisoned")
            .entry(h.to_bits())
            .or_insert_with(|| (2.0 * h / ((1.0 - 2.0 * h) * beta_integral(h))).sqrt());
        Ok(VolterraKernel { h, c_h })
    }

    pub fn constant(&self) -> f64 {
        self.c_h
    }

    /// `K_H(s, t)`; zero outside `0 < s < t`.
    pub fn eval(&self, s: f64, t: f64) -> f64 {
        if !(s > 0.0 && s < t) {
            return 0.0;
        }
        self.eval_with_gap(s, t - s)
    }

    /// Same as [`eval`](Self::eval) with the gap `t - s` supplied exactly.
    fn eval_with_gap(&self, s: f64, gap: f64) -> f64 {
        let h = self.h;
        let t = s + gap;
        let q = h + 0.5;
        // v = (u - s)^{H+1/2} removes the (u - s)^{H-1/2} singularity.
        let inner = tanh_sinh(
            |v, _, _| (s + v.powf(1.0 / q)).powf(h - 1.5) / q,
            0.0,
            gap.powf(q),
            INNER_TOL,
        )
        .value;
        self.c_h * ((t / s).powf(h - 0.5) * gap.powf(h - 0.5) - (h - 0.5) * s.powf(0.5 - h) * inner)
    }

    /// `int_0^{min(s,t)} K_H(u, s) K_H(u, t) du`, which should equal the fBm
    /// covariance.
    pub fn covariance(&self, s: f64, t: f64, rel_tol: f64) -> f64 {
        let m = s.min(t);
        if m <= 0.0 {
            return 0.0;
        }
        let (ds, dt) = (s - m, t - m);
        tanh_sinh(
            |u, _, to_m| self.eval_with_gap(u, ds + to_m) * self.eval_with_gap(u, dt + to_m),
            0.0,
            m,
            rel_tol,
        )
        .value
    }
}

/// `K_H(s, t)` with `c_H` cached per `H`.
pub fn volterra_kernel(s: f64, t: f64, h: Hurst) -> Result<f64> {
    if !(s > 0.0 && t > 0.0) {
        return Err(Error::domain(format!("Volterra kernel needs s, t > 0, got ({s}, {t})")));
    }
    Ok(VolterraKernel::new(h)?.eval(s, t))
}
