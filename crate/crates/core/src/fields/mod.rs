//! Scalar Gaussian fields: fractional Brownian motion, the fractional
//! Brownian sheet and user kernels, with exact and circulant samplers.

mod circulant;
mod covariance;
mod exact;
mod hypotheses;
mod volterra;

pub use circulant::{sample_fgn_circulant, CirculantFgn, FbmGridSampler, FgnDraw, FgnSampler};
pub use covariance::{
    conditional_variance, fbm_covariance, fgn_autocovariance, sheet_covariance, CovarianceModel, Kernel,
};
pub use exact::{sample_field_exact, ExactSampler, MAX_EXACT_POINTS};
pub use hypotheses::{verify_h1_h2, HypothesisReport};
pub use volterra::{volterra_kernel, VolterraKernel};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// A Hurst index, strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Hurst(f64);

impl Hurst {
    pub fn new(h: f64) -> Result<Self> {
        if h > 0.0 && h < 1.0 {
            Ok(Hurst(h))
        } else {
            Err(Error::domain(format!("Hurst index {h} outside (0, 1)")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Hurst {
    type Error = Error;
    fn try_from(h: f64) -> Result<Self> {
        Hurst::new(h)
    }
}

impl From<Hurst> for f64 {
    fn from(h: Hurst) -> f64 {
        h.0
    }
}

/// Multiparameter Hurst index `(H_1, ..., H_r)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(into = "Vec<f64>")]
pub struct HurstVector(Vec<Hurst>);

impl HurstVector {
    pub fn new(hs: &[f64]) -> Result<Self> {
        if hs.is_empty() {
            return Err(Error::domain("Hurst vector must have at least one component"));
        }
        Ok(HurstVector(hs.iter().map(|&h| Hurst::new(h)).collect::<Result<_>>()?))
    }

    pub fn scalar(h: Hurst) -> Self {
        HurstVector(vec![h])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().map(|h| h.0)
    }

    pub fn get(&self, j: usize) -> Hurst {
        self.0[j]
    }

    /// Smallest component; governs the roughest direction.
    pub fn min(&self) -> f64 {
        self.components().fold(f64::INFINITY, f64::min)
    }
}

impl From<HurstVector> for Vec<f64> {
    fn from(h: HurstVector) -> Vec<f64> {
        h.components().collect()
    }
}

impl<'de> Deserialize<'de> for HurstVector {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum OneOrMany {
            One(f64),
            Many(Vec<f64>),
        }
        let hs = match OneOrMany::deserialize(de)? {
            OneOrMany::One(h) => vec![h],
            OneOrMany::Many(hs) => hs,
        };
        HurstVector::new(&hs).map_err(serde::de::Error::custom)
    }
}

/// Rectangular grid `prod_j [a_j, b_j]` with `n_j` equispaced points per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    a: Vec<f64>,
    b: Vec<f64>,
    n: Vec<usize>,
}

impl GridSpec {
    /// A single axis with `n >= 2` points may span any `0 <= a < b`; a
    /// one-point axis requires `a == b`.
    pub fn new(a: Vec<f64>, b: Vec<f64>, n: Vec<usize>) -> Result<Self> {
        if a.is_empty() || a.len() != b.len() || a.len() != n.len() {
            return Err(Error::domain("grid endpoints and counts must share a nonzero length"));
        }
        for j in 0..a.len() {
            let (aj, bj, nj) = (a[j], b[j], n[j]);
            if !(aj.is_finite() && bj.is_finite()) || aj < 0.0 || aj > bj {
                return Err(Error::domain(format!("axis {j}: need 0 <= a <= b, got [{aj}, {bj}]")));
            }
            match nj {
                0 => return Err(Error::domain(format!("axis {j}: no points"))),
                1 if aj != bj => {
                    return Err(Error::domain(format!("axis {j}: one point requires a == b")))
                }
                n if n >= 2 && aj == bj => {
                    return Err(Error::domain(format!("axis {j}: {n} points on a degenerate interval")))
                }
                _ => {}
            }
        }
        Ok(GridSpec { a, b, n })
    }

    /// One-parameter grid with `n` points on `[a, b]`.
    pub fn interval(a: f64, b: f64, n: usize) -> Result<Self> {
        GridSpec::new(vec![a], vec![b], vec![n])
    }

    /// One-parameter grid consisting of the single time `t`.
    pub fn point(t: f64) -> Result<Self> {
        GridSpec::new(vec![t], vec![t], vec![1])
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.a
    }

    pub fn upper(&self) -> &[f64] {
        &self.b
    }

    pub fn counts(&self) -> &[usize] {
        &self.n
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Spacing along each axis (zero on one-point axes).
    pub fn mesh(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|j| if self.n[j] > 1 { (self.b[j] - self.a[j]) / (self.n[j] - 1) as f64 } else { 0.0 })
            .collect()
    }

    pub fn axis_value(&self, j: usize, k: usize) -> f64 {
        if self.n[j] == 1 {
            self.a[j]
        } else {
            self.a[j] + (self.b[j] - self.a[j]) * k as f64 / (self.n[j] - 1) as f64
        }
    }

    /// Coordinates of the point with flat (row-major, last axis fastest) index `idx`.
    pub fn point_at(&self, mut idx: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.dim()];
        for j in (0..self.dim()).rev() {
            p[j] = self.axis_value(j, idx % self.n[j]);
            idx /= self.n[j];
        }
        p
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point_at(i)).collect()
    }
}

/// Values of independent replicas of a field on a grid, stored replica-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    grid: GridSpec,
    replicas: usize,
    values: Vec<f64>,
}

impl FieldSample {
    pub fn new(grid: GridSpec, replicas: usize, values: Vec<f64>) -> Result<Self> {
        let expected = replicas * grid.len();
        if values.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: values.len() });
        }
        Ok(FieldSample { grid, replicas, values })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn replicas(&self) -> usize {
        self.replicas
    }

    pub fn is_empty(&self) -> bool {
        self.replicas == 0
    }

    pub fn replica(&self, r: usize) -> &[f64] {
        let p = self.grid.len();
        &self.values[r * p..(r + 1) * p]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Anything that can draw one realization of a field on a fixed grid.
pub trait FieldSampler: Send + Sync {
    fn points(&self) -> usize;

    fn draw(&self, rng: &mut StreamRng, out: &mut [f64]);

    /// Two independent draws. Samplers that produce pairs natively override this.
    fn draw_pair(&self, rng: &mut StreamRng, first: &mut [f64], second: &mut [f64]) {
        self.draw(rng, first);
        self.draw(rng, second);
    }
}
