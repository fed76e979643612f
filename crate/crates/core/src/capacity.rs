//! Bessel–Riesz energies and capacities, box-counting dimension, and the
//! Q-index collision rule.

use std::collections::HashSet;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensembles::{matrix_to_vec, Beta};
use crate::error::{Error, Result};
use crate::fields::HurstVector;
use crate::geometry::{chart_f, CompletedFrame, FrameScalar};
use crate::rng::{experiment_id, substream, StreamRng};
use crate::stats::{hill_tail_index, linear_fit, mean_and_stderr};

/// Pairs closer than this are divergence events for singular kernels.
pub const COINCIDENT_DISTANCE: f64 = 1e-14;
/// Relative tolerance for deciding `Q = beta + 1`.
pub const CRITICAL_TOL: f64 = 1e-9;
const PAIRS_PER_CHUNK: usize = 4096;
const MIN_PAIRS_FOR_TAIL: usize = 1000;

/// `r^-alpha` for `alpha > 0`, `log(e / min(r, 1))` for `alpha = 0`, `1` otherwise.
pub fn f_alpha(r: f64, alpha: f64) -> f64 {
    if alpha > 0.0 {
        if r == 0.0 {
            f64::INFINITY
        } else {
            r.powf(-alpha)
        }
    } else if alpha == 0.0 {
        if r == 0.0 {
            f64::INFINITY
        } else {
            1.0 - r.min(1.0).ln()
        }
    } else {
        1.0
    }
}

pub fn q_index(h: &HurstVector) -> f64 {
    h.components().map(|x| 1.0 / x).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionRegime {
    NoCollision,
    Collision,
    Critical,
}

impl std::fmt::Display for CollisionRegime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CollisionRegime::NoCollision => "no_collision",
            CollisionRegime::Collision => "collision",
            CollisionRegime::Critical => "critical",
        })
    }
}

/// Compare `Q` with `beta + 1`.
pub fn collision_regime(beta: Beta, h: &HurstVector) -> CollisionRegime {
    let q = q_index(h);
    let threshold = beta.value() as f64 + 1.0;
    if (q - threshold).abs() <= CRITICAL_TOL * threshold {
        CollisionRegime::Critical
    } else if q < threshold {
        CollisionRegime::NoCollision
    } else {
        CollisionRegime::Collision
    }
}

/// Hurst value at which a scalar-driven ensemble is critical.
pub fn critical_hurst(beta: Beta) -> f64 {
    1.0 / (beta.value() as f64 + 1.0)
}

/// I.i.d. draws from a probability measure on a subset of `R^n`.
pub trait PointSampler: Sync {
    fn dim(&self) -> usize;
    fn sample(&self, rng: &mut StreamRng, out: &mut [f64]);
}

pub type SampleFn = Arc<dyn Fn(&mut StreamRng, &mut [f64]) + Send + Sync>;

/// [`PointSampler`] from a closure.
#[derive(Clone)]
pub struct FnSampler {
    dim: usize,
    f: SampleFn,
}

impl FnSampler {
    pub fn new(dim: usize, f: impl Fn(&mut StreamRng, &mut [f64]) + Send + Sync + 'static) -> Self {
        FnSampler { dim, f: Arc::new(f) }
    }

    /// Uniform measure on `[0, 1]^dim`.
    pub fn unit_cube(dim: usize) -> Self {
        FnSampler::new(dim, |rng, out| out.iter_mut().for_each(|x| *x = rng.gen::<f64>()))
    }

    /// Point mass.
    pub fn point(p: Vec<f64>) -> Self {
        FnSampler::new(p.len(), move |_, out| out.copy_from_slice(&p))
    }
}

impl PointSampler for FnSampler {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, rng: &mut StreamRng, out: &mut [f64]) {
        (self.f)(rng, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyEstimate {
    /// Mean kernel value over the pairs at positive distance.
    pub value: f64,
    pub stderr: f64,
    pub pairs: usize,
    /// Pairs closer than [`COINCIDENT_DISTANCE`] under a singular kernel.
    pub infinite_pairs: usize,
    /// Hill estimate of the kernel values' tail index, when enough pairs exist.
    pub tail_index: Option<f64>,
    /// Set when some pair was coincident or the tail index is at most 1.
    pub divergent: bool,
}

/// Monte Carlo estimate of `E f_alpha(|X - Y|)` for independent `X, Y` from `sampler`.
pub fn energy_integral(sampler: &dyn PointSampler, alpha: f64, pairs: usize, seed: u64) -> Result<EnergyEstimate> {
    if pairs == 0 {
        return Err(Error::domain("need at least one pair"));
    }
    if !alpha.is_finite() {
        return Err(Error::domain(format!("kernel order must be finite, got {alpha}")));
    }
    if alpha < 0.0 {
        return Ok(EnergyEstimate { value: 1.0, stderr: 0.0, pairs, infinite_pairs: 0, tail_index: None, divergent: false });
    }
    let n = sampler.dim();
    let stream = experiment_id("capacity/energy");
    let chunks = pairs.div_ceil(PAIRS_PER_CHUNK);
    let per_chunk: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(seed, stream, c as u64);
            let count = PAIRS_PER_CHUNK.min(pairs - c * PAIRS_PER_CHUNK);
            let mut x = vec![0.0; n];
            let mut y = vec![0.0; n];
            (0..count)
                .map(|_| {
                    sampler.sample(&mut rng, &mut x);
                    sampler.sample(&mut rng, &mut y);
                    let r = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                    if r < COINCIDENT_DISTANCE {
                        f64::INFINITY
                    } else {
                        f_alpha(r, alpha)
                    }
                })
                .collect()
        })
        .collect();
    let values: Vec<f64> = per_chunk.into_iter().flatten().collect();
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let infinite_pairs = pairs - finite.len();
    let (value, stderr) = if finite.is_empty() { (f64::INFINITY, f64::INFINITY) } else { mean_and_stderr(&finite) };
    let tail_index = if finite.len() >= MIN_PAIRS_FOR_TAIL {
        hill_tail_index(&finite, (finite.len() / 100).max(10))
    } else {
        None
    };
    let divergent = infinite_pairs > 0 || tail_index.is_some_and(|k| k <= 1.0);
    Ok(EnergyEstimate { value, stderr, pairs, infinite_pairs, tail_index, divergent })
}

pub type ChartMap = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// A parametrized set: parameters uniform on `[-scale, scale]^params`, mapped
/// into `R^dim`. Sampling it draws from the pullback of the uniform measure.
#[derive(Clone)]
pub struct ChartSampler {
    params: usize,
    dim: usize,
    scale: f64,
    map: ChartMap,
}

impl ChartSampler {
    pub fn new(params: usize, dim: usize, scale: f64, map: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::domain(format!("chart scale must be positive, got {scale}")));
        }
        Ok(ChartSampler { params, dim, scale, map: Arc::new(map) })
    }

    pub fn params(&self) -> usize {
        self.params
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

impl PointSampler for ChartSampler {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, rng: &mut StreamRng, out: &mut [f64]) {
        let x: Vec<f64> = (0..self.params).map(|_| rng.gen_range(-self.scale..=self.scale)).collect();
        (self.map)(&x, out)
    }
}

/// Chart of degenerate matrices `Pi Lambda(center + x) Pi^*` with the frame
/// held fixed and only the `d - 1` levels varying, flattened to `R^{n_beta(d)}`.
/// For `d = 2` real this covers the whole degenerate set `{cI}` near `center`.
pub fn level_chart<T: FrameScalar>(frame: CompletedFrame<T>, center: Vec<f64>, scale: f64) -> Result<ChartSampler> {
    let d = frame.dim();
    if center.len() != d - 1 {
        return Err(Error::DimensionMismatch { expected: d - 1, got: center.len() });
    }
    let dim = crate::ensembles::n_beta(T::BETA, d);
    ChartSampler::new(d - 1, dim, scale, move |x, out| {
        let levels: Vec<f64> = center.iter().zip(x).map(|(c, u)| c + u).collect();
        let m = chart_f(&frame, &levels).expect("levels have the chart's length");
        out.copy_from_slice(&matrix_to_vec(&m).expect("chart output is Hermitian"));
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityBound {
    /// `1 / energy` for the chart's pullback measure, or 0 when it diverges.
    pub bound: f64,
    pub energy: EnergyEstimate,
}

/// Lower bound on the order-`alpha` capacity of the chart's image.
pub fn capacity_lower_bound(chart: &ChartSampler, alpha: f64, pairs: usize, seed: u64) -> Result<CapacityBound> {
    let energy = energy_integral(chart, alpha, pairs, seed)?;
    let bound = if energy.divergent || !energy.value.is_finite() { 0.0 } else { 1.0 / energy.value };
    Ok(CapacityBound { bound, energy })
}

/// Box-counting estimate, a computable surrogate for Hausdorff dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxCountResult {
    pub scales: Vec<f64>,
    pub counts: Vec<usize>,
    pub slope: f64,
    pub slope_stderr: f64,
    pub residual: f64,
}

/// `hi, hi/2, ..., hi/2^(count-1)`. Boxes at consecutive sizes nest, so the
/// occupied counts are monotone.
pub fn dyadic_scales(hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(hi > 0.0 && hi.is_finite()) || count < 2 {
        return Err(Error::domain("need a positive largest box size and at least two scales"));
    }
    Ok((0..count).map(|k| hi / (1u64 << k) as f64).collect())
}

/// Number of occupied boxes of side `eps` among `points` (row-major, `dim` columns).
pub fn occupied_boxes(points: &[f64], dim: usize, eps: f64) -> usize {
    let mut boxes: HashSet<Vec<i64>> = HashSet::new();
    for p in points.chunks_exact(dim) {
        boxes.insert(p.iter().map(|x| (x / eps).floor() as i64).collect());
    }
    boxes.len()
}

/// Least-squares slope of `log N(eps)` against `log(1/eps)`.
pub fn box_counting_dim(points: &[f64], dim: usize, scales: &[f64]) -> Result<BoxCountResult> {
    if dim == 0 || points.len() % dim != 0 || points.is_empty() {
        return Err(Error::domain("points must be a non-empty multiple of the dimension"));
    }
    if scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::domain("box sizes must be positive"));
    }
    let mut scales = scales.to_vec();
    scales.sort_by(|a, b| b.total_cmp(a));
    scales.dedup();
    if scales.len() < 2 {
        return Err(Error::DegenerateFit("need at least two distinct box sizes".into()));
    }
    let counts: Vec<usize> = scales.iter().map(|&e| occupied_boxes(points, dim, e)).collect();
    let xs: Vec<f64> = scales.iter().map(|e| -e.ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|&c| (c as f64).ln()).collect();
    let fit = linear_fit(&xs, &ys)?;
    Ok(BoxCountResult { scales, counts, slope: fit.slope, slope_stderr: fit.slope_stderr, residual: fit.residual })
}
