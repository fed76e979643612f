//! Davies–Harte circulant embedding for fractional Gaussian noise.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};

use super::{fgn_autocovariance, ExactSampler, FieldSampler, GridSpec, Hurst};
use crate::error::{Error, Result};
use crate::rng::{experiment_id, substream, StreamRng};

/// Circulant-embedding sampler for `n` increments of fGn with step `dt`.
#[derive(Clone)]
pub struct CirculantFgn {
    n: usize,
    scale: f64,
    /// `sqrt(lambda_k / M)` for the embedding of size `M = 2n`.
    weights: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for CirculantFgn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CirculantFgn").field("n", &self.n).field("scale", &self.scale).finish()
    }
}

impl CirculantFgn {
    /// Returns `Ok(None)` when the embedding has a materially negative eigenvalue.
    pub fn new(n: usize, h: Hurst, dt: f64) -> Result<Option<Self>> {
        if n == 0 {
            return Err(Error::domain("fGn needs at least one increment"));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::domain(format!("time step must be positive, got {dt}")));
        }
        let m = 2 * n;
        let mut row: Vec<Complex64> = (0..m)
            .map(|k| {
                let lag = if k <= n { k } else { m - k };
                Complex64::new(fgn_autocovariance(lag, h), 0.0)
            })
            .collect();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(m);
        fft.process(&mut row);
        let max = row.iter().fold(0.0f64, |a, c| a.max(c.re));
        let mut weights = Vec::with_capacity(m);
        for c in &row {
            if c.re < -1e-10 * max {
                return Ok(None);
            }
            weights.push((c.re.max(0.0) / m as f64).sqrt());
        }
        Ok(Some(CirculantFgn { n, scale: dt.powf(h.get()), weights, fft }))
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Fills two independent increment vectors from the real and imaginary
    /// parts of one transform.
    pub fn draw_pair(&self, rng: &mut StreamRng, first: &mut [f64], second: &mut [f64]) {
        let mut buf: Vec<Complex64> = self
            .weights
            .iter()
            .map(|w| {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                Complex64::new(w * re, w * im)
            })
            .collect();
        self.fft.process(&mut buf);
        for k in 0..self.n {
            first[k] = self.scale * buf[k].re;
            second[k] = self.scale * buf[k].im;
        }
    }
}

/// fGn sampler with an exact fallback when the embedding is not PSD.
#[derive(Debug, Clone)]
pub enum FgnSampler {
    Circulant(CirculantFgn),
    Exact(ExactSampler),
}

impl FgnSampler {
    pub fn new(n: usize, h: Hurst, dt: f64) -> Result<Self> {
        match CirculantFgn::new(n, h, dt)? {
            Some(c) => Ok(FgnSampler::Circulant(c)),
            None => {
                log::warn!("circulant embedding not PSD for n={n}, H={}; using exact sampler", h.get());
                let var = dt.powf(2.0 * h.get());
                let cov = DMatrix::from_fn(n, n, |i, j| var * fgn_autocovariance(i.abs_diff(j), h));
                Ok(FgnSampler::Exact(ExactSampler::from_covariance(cov)?))
            }
        }
    }

    pub fn used_fallback(&self) -> bool {
        matches!(self, FgnSampler::Exact(_))
    }
}

impl FieldSampler for FgnSampler {
    fn points(&self) -> usize {
        match self {
            FgnSampler::Circulant(c) => c.n,
            FgnSampler::Exact(e) => e.points(),
        }
    }

    fn draw(&self, rng: &mut StreamRng, out: &mut [f64]) {
        match self {
            FgnSampler::Circulant(c) => {
                let mut spare = vec![0.0; c.n];
                c.draw_pair(rng, out, &mut spare);
            }
            FgnSampler::Exact(e) => e.draw(rng, out),
        }
    }

    fn draw_pair(&self, rng: &mut StreamRng, first: &mut [f64], second: &mut [f64]) {
        match self {
            FgnSampler::Circulant(c) => c.draw_pair(rng, first, second),
            FgnSampler::Exact(e) => {
                e.draw(rng, first);
                e.draw(rng, second);
            }
        }
    }
}

/// One fGn draw plus whether the exact fallback was needed.
#[derive(Debug, Clone)]
pub struct FgnDraw {
    pub increments: Vec<f64>,
    pub used_fallback: bool,
}

pub fn sample_fgn_circulant(n: usize, h: Hurst, dt: f64, seed: u64) -> Result<FgnDraw> {
    let sampler = FgnSampler::new(n, h, dt)?;
    let mut rng = substream(seed, experiment_id("field/fgn"), 0);
    let mut increments = vec![0.0; n];
    sampler.draw(&mut rng, &mut increments);
    Ok(FgnDraw { increments, used_fallback: sampler.used_fallback() })
}

/// fBm on a uniform one-parameter grid `a, a + h, ..., b` with `a` a
/// multiple of `h`, built from cumulative sums of fGn started at zero.
#[derive(Debug, Clone)]
pub struct FbmGridSampler {
    offset: usize,
    points: usize,
    fgn: FgnSampler,
}

impl FbmGridSampler {
    /// `None` if the grid is not of the supported form.
    pub fn new(grid: &GridSpec, h: Hurst) -> Result<Option<Self>> {
        if grid.dim() != 1 || grid.counts()[0] < 2 {
            return Ok(None);
        }
        let step = grid.mesh()[0];
        let a = grid.lower()[0];
        let ratio = a / step;
        let offset = ratio.round();
        if (ratio - offset).abs() > 1e-9 * ratio.max(1.0) {
            return Ok(None);
        }
        let offset = offset as usize;
        let points = grid.counts()[0];
        let fgn = FgnSampler::new(offset + points - 1, h, step)?;
        Ok(Some(FbmGridSampler { offset, points, fgn }))
    }

    fn integrate(&self, increments: &[f64], out: &mut [f64]) {
        let mut acc: f64 = increments[..self.offset].iter().sum();
        out[0] = acc;
        for k in 1..self.points {
            acc += increments[self.offset + k - 1];
            out[k] = acc;
        }
    }
}

impl FieldSampler for FbmGridSampler {
    fn points(&self) -> usize {
        self.points
    }

    fn draw(&self, rng: &mut StreamRng, out: &mut [f64]) {
        let mut inc = vec![0.0; self.fgn.points()];
        self.fgn.draw(rng, &mut inc);
        self.integrate(&inc, out);
    }

    fn draw_pair(&self, rng: &mut StreamRng, first: &mut [f64], second: &mut [f64]) {
        let n = self.fgn.points();
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        self.fgn.draw_pair(rng, &mut a, &mut b);
        self.integrate(&a, first);
        self.integrate(&b, second);
    }
}
