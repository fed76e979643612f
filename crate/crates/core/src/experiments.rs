//! Monte Carlo drivers: collision probabilities, grid refinement, small-gap
//! exponents, Hurst sweeps, small-time studies and the `d = 2` oracle.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capacity::{collision_regime, q_index, CollisionRegime};
use crate::ensembles::{entry_scales, matrix_to_vec, n_beta, vec_to_matrix, Beta};
use crate::error::{Error, Result};
use crate::fields::{CovarianceModel, ExactSampler, FbmGridSampler, FieldSampler, GridSpec, HurstVector, MAX_EXACT_POINTS};
use crate::rng::{experiment_id, substream, StreamRng};
use crate::spectral::{flat_gap, ordered_eigenvalues};
use crate::stats::{linear_fit, wilson_interval, WilsonInterval, Z_95};

/// Sweep points closer than this to the critical Hurst index are rejected.
pub const MIN_CRITICAL_DISTANCE: f64 = 0.02;
pub const MIN_GAP_SAMPLES: usize = 10_000;
/// Eigenvalues of the shift closer than this (relative) count as equal.
pub const SPECTRUM_TOL: f64 = 1e-9;
const FIT_POINTS: usize = 12;
const SAMPLE_CHUNK: usize = 4096;

/// Collision threshold `delta` as a function of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ThresholdRule {
    /// `kappa * min_j mesh_j^{H_j}`.
    Holder { kappa: f64 },
    Fixed { delta: f64 },
}

impl Default for ThresholdRule {
    fn default() -> Self {
        ThresholdRule::Holder { kappa: 1.0 }
    }
}

impl ThresholdRule {
    pub fn delta(&self, mesh: &[f64], hurst: &HurstVector) -> f64 {
        match *self {
            ThresholdRule::Holder { kappa } => {
                kappa * mesh.iter().zip(hurst.components()).map(|(m, h)| m.powf(h)).fold(f64::INFINITY, f64::min)
            }
            ThresholdRule::Fixed { delta } => delta,
        }
    }
}

fn default_interval() -> [f64; 2] {
    [1.0, 2.0]
}

fn default_mesh() -> Vec<usize> {
    vec![1024]
}

fn default_replicas() -> usize {
    1000
}

/// Everything needed to reproduce a collision experiment.
///
/// The parameter set is `interval^r` with `r = hurst.dim()`; `mesh` lists the
/// numbers of intervals per axis, finest last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub beta: Beta,
    pub d: usize,
    pub hurst: HurstVector,
    #[serde(default = "default_interval")]
    pub interval: [f64; 2],
    #[serde(default = "default_mesh")]
    pub mesh: Vec<usize>,
    /// Flat coordinates of the shift `A`; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<Vec<f64>>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub threshold: ThresholdRule,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    /// Config with documented defaults for everything but the class, size and Hurst index.
    pub fn new(beta: Beta, d: usize, hurst: HurstVector) -> Self {
        ExperimentConfig {
            beta,
            d,
            hurst,
            interval: default_interval(),
            mesh: default_mesh(),
            shift: None,
            replicas: default_replicas(),
            threshold: ThresholdRule::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::config("d", format!("matrix size must be at least 2, got {}", self.d)));
        }
        let [a, b] = self.interval;
        if !(a.is_finite() && b.is_finite() && 0.0 <= a && a < b) {
            return Err(Error::config("interval", format!("need 0 <= a < b, got [{a}, {b}]")));
        }
        check_ladder(&self.mesh).map_err(|m| Error::config("mesh", m))?;
        if self.replicas == 0 {
            return Err(Error::config("replicas", "need at least one replica"));
        }
        if let Some(shift) = &self.shift {
            let n = n_beta(self.beta, self.d);
            if shift.len() != n {
                return Err(Error::config("shift", format!("expected {n} flat coordinates, got {}", shift.len())));
            }
            if shift.iter().any(|v| !v.is_finite()) {
                return Err(Error::config("shift", "entries must be finite"));
            }
        }
        match self.threshold {
            ThresholdRule::Holder { kappa } if !(kappa > 0.0 && kappa.is_finite()) => {
                return Err(Error::config("threshold", format!("kappa must be positive, got {kappa}")));
            }
            ThresholdRule::Fixed { delta } if !(delta > 0.0) => {
                return Err(Error::config("threshold", format!("delta must be positive, got {delta}")));
            }
            _ => {}
        }
        let r = self.hurst.dim() as u32;
        if r > 1 {
            let finest = *self.mesh.last().expect("ladder checked");
            let points = (finest + 1).checked_pow(r).unwrap_or(usize::MAX);
            if points > MAX_EXACT_POINTS {
                return Err(Error::config(
                    "mesh",
                    format!("{points} grid points exceed the exact-sampler limit {MAX_EXACT_POINTS} for r = {r}"),
                ));
            }
        }
        Ok(())
    }

    pub fn regime(&self) -> CollisionRegime {
        collision_regime(self.beta, &self.hurst)
    }

    pub fn finest_mesh(&self) -> usize {
        self.mesh.iter().copied().max().unwrap_or(1)
    }

    /// `N + 1` points per axis on `interval^r`.
    pub fn grid(&self, intervals: usize) -> Result<GridSpec> {
        let r = self.hurst.dim();
        let [a, b] = self.interval;
        GridSpec::new(vec![a; r], vec![b; r], vec![intervals + 1; r])
    }

    pub fn shift_flat(&self) -> Vec<f64> {
        self.shift.clone().unwrap_or_else(|| vec![0.0; n_beta(self.beta, self.d)])
    }

    pub fn shift_is_zero(&self) -> bool {
        self.shift.as_ref().is_none_or(|s| s.iter().all(|&v| v == 0.0))
    }

    fn with_hurst(&self, hurst: HurstVector) -> Self {
        ExperimentConfig { hurst, ..self.clone() }
    }
}

fn check_ladder(ladder: &[usize]) -> std::result::Result<(), String> {
    if ladder.is_empty() {
        return Err("mesh ladder is empty".into());
    }
    if ladder.contains(&0) {
        return Err("mesh sizes must be positive".into());
    }
    if ladder.windows(2).any(|w| w[0] >= w[1]) {
        return Err("mesh sizes must be strictly increasing".into());
    }
    Ok(())
}

/// Run `f` inside a dedicated pool of `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::domain(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Per-replica path generator: independent fields on one grid, combined into
/// flat matrix coordinates, reduced to the minimum adjacent gap at each point.
struct Engine {
    beta: Beta,
    d: usize,
    scales: Vec<f64>,
    shift: Vec<f64>,
    sampler: Box<dyn FieldSampler>,
}

impl Engine {
    fn new(beta: Beta, d: usize, hurst: &HurstVector, grid: &GridSpec, shift: Vec<f64>) -> Result<Self> {
        let fast = if hurst.dim() == 1 { FbmGridSampler::new(grid, hurst.get(0))? } else { None };
        let sampler: Box<dyn FieldSampler> = match fast {
            Some(s) => Box::new(s),
            None => Box::new(ExactSampler::new(grid, &CovarianceModel::from_hurst(hurst))?),
        };
        Ok(Engine { beta, d, scales: entry_scales(beta, d)?, shift, sampler })
    }

    fn from_config(config: &ExperimentConfig, grid: &GridSpec) -> Result<Self> {
        Engine::new(config.beta, config.d, &config.hurst, grid, config.shift_flat())
    }

    fn draw_fields(&self, rng: &mut StreamRng) -> Vec<Vec<f64>> {
        let p = self.sampler.points();
        let n = self.scales.len();
        let mut fields = vec![vec![0.0; p]; n];
        for pair in fields.chunks_mut(2) {
            match pair {
                [a, b] => self.sampler.draw_pair(rng, a, b),
                [a] => self.sampler.draw(rng, a),
                _ => unreachable!(),
            }
        }
        fields
    }

    fn gaps(&self, fields: &[Vec<f64>]) -> Vec<f64> {
        let mut x = vec![0.0; self.scales.len()];
        (0..self.sampler.points())
            .map(|t| {
                for (k, xk) in x.iter_mut().enumerate() {
                    *xk = self.shift[k] + self.scales[k] * fields[k][t];
                }
                flat_gap(&x, self.beta, self.d)
            })
            .collect()
    }
}

/// Flat indices of the points of a coarser nested grid inside the finest one.
fn nested_indices(finest: &GridSpec, stride: usize) -> Vec<usize> {
    let counts = finest.counts();
    let coarse: Vec<usize> = counts.iter().map(|n| (n - 1) / stride + 1).collect();
    let total: usize = coarse.iter().product();
    (0..total)
        .map(|mut idx| {
            let mut flat = 0;
            let mut weight = 1;
            for j in (0..counts.len()).rev() {
                flat += (idx % coarse[j]) * stride * weight;
                idx /= coarse[j];
                weight *= counts[j];
            }
            flat
        })
        .collect()
}

/// Per-replica path minimum gaps at every mesh of `ladder`: `out[level][replica]`.
///
/// Meshes dividing the finest one share paths by subsampling; the others are
/// simulated on their own grids.
fn ladder_min_gaps(config: &ExperimentConfig, ladder: &[usize], label: &str) -> Result<Vec<Vec<f64>>> {
    let finest = *ladder.iter().max().ok_or_else(|| Error::domain("empty mesh ladder"))?;
    let grid = config.grid(finest)?;
    let engine = Engine::from_config(config, &grid)?;
    let nested: Vec<(usize, Option<Vec<usize>>)> = ladder
        .iter()
        .enumerate()
        .filter(|(_, &n)| finest % n == 0)
        .map(|(i, &n)| (i, (n != finest).then(|| nested_indices(&grid, finest / n))))
        .collect();
    let exp = experiment_id(label);
    let per_replica: Vec<Vec<f64>> = (0..config.replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(config.seed, exp, r as u64);
            let gaps = engine.gaps(&engine.draw_fields(&mut rng));
            nested
                .iter()
                .map(|(_, idx)| match idx {
                    None => gaps.iter().copied().fold(f64::INFINITY, f64::min),
                    Some(ix) => ix.iter().map(|&i| gaps[i]).fold(f64::INFINITY, f64::min),
                })
                .collect()
        })
        .collect();
    let mut out = vec![Vec::new(); ladder.len()];
    for (slot, (level, _)) in nested.iter().enumerate() {
        out[*level] = per_replica.iter().map(|v| v[slot]).collect();
    }
    for (level, &n) in ladder.iter().enumerate() {
        if finest % n != 0 {
            out[level] = ladder_min_gaps(config, &[n], &format!("{label}/{n}"))?.remove(0);
        }
    }
    Ok(out)
}

/// Outcome of thresholding path minimum gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionStats {
    /// Intervals per axis.
    pub mesh: usize,
    pub delta: f64,
    pub replicas: usize,
    pub collisions: usize,
    pub estimate: f64,
    pub interval: WilsonInterval,
}

impl CollisionStats {
    pub fn from_min_gaps(mesh: usize, delta: f64, min_gaps: &[f64]) -> Self {
        let collisions = min_gaps.iter().filter(|&&g| g < delta).count();
        let replicas = min_gaps.len();
        CollisionStats {
            mesh,
            delta,
            replicas,
            collisions,
            estimate: if replicas == 0 { 0.0 } else { collisions as f64 / replicas as f64 },
            interval: wilson_interval(collisions, replicas, Z_95),
        }
    }
}

const COLLISION_LABEL: &str = "experiments/collision";

fn level_delta(config: &ExperimentConfig, n: usize) -> Result<f64> {
    Ok(config.threshold.delta(&config.grid(n)?.mesh(), &config.hurst))
}

/// Fraction of replicas whose path minimum gap on the finest mesh falls below `delta`.
pub fn estimate_collision_probability(config: &ExperimentConfig) -> Result<CollisionStats> {
    config.validate()?;
    let n = config.finest_mesh();
    let mins = ladder_min_gaps(config, &[n], COLLISION_LABEL)?;
    Ok(CollisionStats::from_min_gaps(n, level_delta(config, n)?, &mins[0]))
}

/// Like [`estimate_collision_probability`] at several thresholds on shared paths.
pub fn estimate_at_thresholds(config: &ExperimentConfig, deltas: &[f64]) -> Result<Vec<CollisionStats>> {
    config.validate()?;
    let n = config.finest_mesh();
    let mins = ladder_min_gaps(config, &[n], COLLISION_LABEL)?;
    Ok(deltas.iter().map(|&delta| CollisionStats::from_min_gaps(n, delta, &mins[0])).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementStudy {
    pub levels: Vec<CollisionStats>,
    /// `p_{N_max} / p_{N_min}`; absent for a single mesh or a zero denominator.
    pub trend: Option<f64>,
    /// Ratio of the last two estimates.
    pub last_step: Option<f64>,
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}

/// Collision estimates along a mesh ladder with `delta_N` from the threshold rule.
pub fn refinement_study(config: &ExperimentConfig, ladder: &[usize]) -> Result<RefinementStudy> {
    config.validate()?;
    check_ladder(ladder).map_err(Error::domain)?;
    let mins = ladder_min_gaps(config, ladder, COLLISION_LABEL)?;
    let levels = ladder
        .iter()
        .zip(&mins)
        .map(|(&n, m)| Ok(CollisionStats::from_min_gaps(n, level_delta(config, n)?, m)))
        .collect::<Result<Vec<_>>>()?;
    let k = levels.len();
    let (trend, last_step) = if k < 2 {
        (None, None)
    } else {
        (
            ratio(levels[k - 1].estimate, levels[0].estimate),
            ratio(levels[k - 1].estimate, levels[k - 2].estimate),
        )
    };
    Ok(RefinementStudy { levels, trend, last_step })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub hurst: f64,
    pub q: f64,
    pub regime: CollisionRegime,
    pub study: RefinementStudy,
}

impl SweepRow {
    pub fn finest(&self) -> &CollisionStats {
        self.study.levels.last().expect("studies are non-empty")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSweep {
    pub rows: Vec<SweepRow>,
    /// Smallest finest-mesh estimate on the collision side divided by the
    /// largest on the no-collision side; absent unless both sides are present
    /// and the denominator is positive.
    pub separation: Option<f64>,
}

/// One refinement study per Hurst value, the value applied to every axis.
pub fn phase_sweep(base: &ExperimentConfig, hurst: &[f64]) -> Result<PhaseSweep> {
    base.validate()?;
    let r = base.hurst.dim();
    let critical = r as f64 / (base.beta.value() as f64 + 1.0);
    let mut rows = Vec::with_capacity(hurst.len());
    for &h in hurst {
        if (h - critical).abs() < MIN_CRITICAL_DISTANCE {
            return Err(Error::domain(format!(
                "H = {h} is within {MIN_CRITICAL_DISTANCE} of the critical value {critical:.4}"
            )));
        }
        let hv = HurstVector::new(&vec![h; r])?;
        let config = base.with_hurst(hv.clone());
        rows.push(SweepRow { hurst: h, q: q_index(&hv), regime: config.regime(), study: refinement_study(&config, &base.mesh)? });
    }
    let hit = rows.iter().filter(|r| r.regime == CollisionRegime::Collision).map(|r| r.finest().estimate);
    let miss = rows.iter().filter(|r| r.regime == CollisionRegime::NoCollision).map(|r| r.finest().estimate);
    let low_hit = hit.fold(f64::INFINITY, f64::min);
    let high_miss = miss.fold(f64::NEG_INFINITY, f64::max);
    let separation = (low_hit.is_finite() && high_miss.is_finite()).then(|| ratio(low_hit, high_miss)).flatten();
    Ok(PhaseSweep { rows, separation })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub stderr: f64,
    pub window: [f64; 2],
    pub samples: usize,
    /// Window points with a nonzero empirical CDF that entered the fit.
    pub points: usize,
}

/// Minimum adjacent gaps of `samples` independent copies of `A + X(t0)`.
pub fn sample_point_gaps(
    beta: Beta,
    d: usize,
    hurst: &HurstVector,
    t0: &[f64],
    shift: Option<&[f64]>,
    samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if t0.len() != hurst.dim() {
        return Err(Error::DimensionMismatch { expected: hurst.dim(), got: t0.len() });
    }
    if t0.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::domain("t0 must be positive"));
    }
    let n = n_beta(beta, d);
    let scales = entry_scales(beta, d)?;
    let zero = vec![0.0; n];
    let shift = shift.unwrap_or(&zero);
    if shift.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: shift.len() });
    }
    let sd = CovarianceModel::from_hurst(hurst).eval(t0, t0)?.sqrt();
    let exp = experiment_id("experiments/gap_exponent");
    let chunks = samples.div_ceil(SAMPLE_CHUNK);
    let gaps: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(seed, exp, c as u64);
            let count = SAMPLE_CHUNK.min(samples - c * SAMPLE_CHUNK);
            let mut x = vec![0.0; n];
            (0..count)
                .map(|_| {
                    for (k, xk) in x.iter_mut().enumerate() {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        *xk = shift[k] + scales[k] * sd * z;
                    }
                    flat_gap(&x, beta, d)
                })
                .collect()
        })
        .collect();
    Ok(gaps.into_iter().flatten().collect())
}

/// `[q(lo), q(hi)]` empirical quantiles of `values`.
pub fn quantile_window(values: &[f64], lo: f64, hi: f64) -> Result<[f64; 2]> {
    if values.is_empty() || !(0.0 <= lo && lo < hi && hi <= 1.0) {
        return Err(Error::domain("need data and 0 <= lo < hi <= 1"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let at = |q: f64| v[((q * v.len() as f64) as usize).min(v.len() - 1)];
    Ok([at(lo), at(hi)])
}

/// Log-log regression of the empirical CDF of `gaps` on `FIT_POINTS`
/// log-spaced points of `window`.
pub fn fit_cdf_exponent(gaps: &[f64], window: [f64; 2]) -> Result<ExponentFit> {
    let [lo, hi] = window;
    if !(lo > 0.0 && lo < hi && hi.is_finite()) {
        return Err(Error::domain(format!("invalid window [{lo}, {hi}]")));
    }
    let mut sorted = gaps.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let step = (hi / lo).ln() / (FIT_POINTS - 1) as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = (0..FIT_POINTS)
        .filter_map(|i| {
            let eps = lo * (step * i as f64).exp();
            let below = sorted.partition_point(|&g| g < eps);
            (below > 0).then(|| (eps.ln(), (below as f64 / n).ln()))
        })
        .unzip();
    if xs.len() < 2 {
        return Err(Error::DegenerateFit(format!("window [{lo:.3e}, {hi:.3e}] holds too few gaps")));
    }
    let fit = linear_fit(&xs, &ys)?;
    Ok(ExponentFit { slope: fit.slope, stderr: fit.slope_stderr, window, samples: gaps.len(), points: xs.len() })
}

/// Small-gap exponent of `X(t0)`, expected to be `beta + 1`. Without an
/// explicit window the fit runs between the 0.05% and 2% gap quantiles.
pub fn gap_exponent_fit(
    beta: Beta,
    d: usize,
    hurst: &HurstVector,
    t0: &[f64],
    samples: usize,
    window: Option<[f64; 2]>,
    seed: u64,
) -> Result<ExponentFit> {
    if samples < MIN_GAP_SAMPLES {
        return Err(Error::domain(format!("need at least {MIN_GAP_SAMPLES} samples, got {samples}")));
    }
    let gaps = sample_point_gaps(beta, d, hurst, t0, None, samples, seed)?;
    let window = match window {
        Some(w) => w,
        None => quantile_window(&gaps, 5e-4, 2e-2)?,
    };
    fit_cdf_exponent(&gaps, window)
}

/// Which case of the spectral hypothesis a shift satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftSpectrum {
    Zero,
    /// Exactly one repeated pair: `|Sp(A)| = d - 1`.
    OneRepeatedPair,
    /// All eigenvalues distinct; a control case outside the hypothesis.
    Simple,
}

/// Classify the shift, rejecting spectra with `|Sp(A)| < d - 1` unless `A = 0`.
pub fn classify_shift(config: &ExperimentConfig) -> Result<ShiftSpectrum> {
    if config.shift_is_zero() {
        return Ok(ShiftSpectrum::Zero);
    }
    let m = vec_to_matrix(&config.shift_flat(), config.beta, config.d)?;
    let ev = ordered_eigenvalues(&m)?;
    let tol = SPECTRUM_TOL * ev.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let distinct = 1 + ev.windows(2).filter(|w| w[0] - w[1] > tol).count();
    if distinct == config.d {
        Ok(ShiftSpectrum::Simple)
    } else if distinct == config.d - 1 {
        Ok(ShiftSpectrum::OneRepeatedPair)
    } else {
        Err(Error::domain(format!("shift has {distinct} distinct eigenvalues; need d - 1 = {} or A = 0", config.d - 1)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallTimeRow {
    pub horizon: f64,
    pub stats: CollisionStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallTimeStudy {
    pub shift: ShiftSpectrum,
    pub hypothesis_met: bool,
    pub rows: Vec<SmallTimeRow>,
}

/// Collision within `(0, T]` for each horizon, on the grid `kT/N`, `k = 1..N`,
/// per axis. Each horizon uses its own random stream.
pub fn small_time_study(config: &ExperimentConfig, horizons: &[f64], mesh: usize) -> Result<SmallTimeStudy> {
    config.validate()?;
    if config.regime() != CollisionRegime::Collision {
        return Err(Error::domain(format!(
            "small-time study needs Q > beta + 1, got Q = {:.4}",
            q_index(&config.hurst)
        )));
    }
    if horizons.is_empty() || horizons.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::domain("horizons must be positive"));
    }
    if horizons.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::domain("horizons must be strictly decreasing"));
    }
    if mesh < 2 {
        return Err(Error::domain("need at least two grid points per horizon"));
    }
    let shift = classify_shift(config)?;
    let r = config.hurst.dim();
    let rows = horizons
        .iter()
        .enumerate()
        .map(|(i, &horizon)| {
            let grid = GridSpec::new(vec![horizon / mesh as f64; r], vec![horizon; r], vec![mesh; r])?;
            let engine = Engine::from_config(config, &grid)?;
            let exp = experiment_id(&format!("experiments/small_time/{i}"));
            let mins: Vec<f64> = (0..config.replicas)
                .into_par_iter()
                .map(|rep| {
                    let mut rng = substream(config.seed, exp, rep as u64);
                    engine.gaps(&engine.draw_fields(&mut rng)).into_iter().fold(f64::INFINITY, f64::min)
                })
                .collect();
            let delta = config.threshold.delta(&grid.mesh(), &config.hurst);
            Ok(SmallTimeRow { horizon, stats: CollisionStats::from_min_gaps(mesh, delta, &mins) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SmallTimeStudy { shift, hypothesis_met: shift != ShiftSpectrum::Simple, rows })
}

/// Gap of `scales * fields` for `d = 2` by the scalar formula, without an
/// eigensolver. `fields` are the raw values `(xi11, xi12, xi22[, eta12])`.
pub fn oracle_gap_2x2(beta: Beta, fields: &[f64]) -> f64 {
    let diff = fields[0] - fields[2];
    match beta {
        Beta::Goe => (2.0 * diff * diff + 4.0 * fields[1] * fields[1]).sqrt(),
        Beta::Gue => (diff * diff + 4.0 * fields[1] * fields[1] + 4.0 * fields[3] * fields[3]).sqrt(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub max_discrepancy: f64,
    pub replicas: usize,
    pub times: usize,
}

/// Largest `|pipeline gap - formula gap|` over all replicas and grid points of
/// the finest mesh. Requires `d = 2` and `A = 0`.
pub fn oracle_vector_reduction(config: &ExperimentConfig) -> Result<OracleReport> {
    config.validate()?;
    if config.d != 2 {
        return Err(Error::domain("the vector reduction oracle needs d = 2"));
    }
    if !config.shift_is_zero() {
        return Err(Error::domain("the vector reduction oracle needs A = 0"));
    }
    let grid = config.grid(config.finest_mesh())?;
    let engine = Engine::from_config(config, &grid)?;
    let exp = experiment_id("experiments/oracle");
    let n = n_beta(config.beta, 2);
    let worst: Vec<f64> = (0..config.replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(config.seed, exp, r as u64);
            let fields = engine.draw_fields(&mut rng);
            let pipeline = engine.gaps(&fields);
            let mut raw = vec![0.0; n];
            pipeline
                .iter()
                .enumerate()
                .map(|(t, g)| {
                    for (k, v) in raw.iter_mut().enumerate() {
                        *v = fields[k][t];
                    }
                    (g - oracle_gap_2x2(config.beta, &raw)).abs()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(OracleReport { max_discrepancy: worst.into_iter().fold(0.0, f64::max), replicas: config.replicas, times: grid.len() })
}

/// Flat coordinates of `diag(levels)`, handy for building shifts.
pub fn diagonal_shift(beta: Beta, levels: &[f64]) -> Result<Vec<f64>> {
    let m = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(levels));
    let h = match beta {
        Beta::Goe => crate::ensembles::HermitianMatrix::Real(m),
        Beta::Gue => crate::ensembles::HermitianMatrix::Complex(m.map(|v| num_complex::Complex64::new(v, 0.0))),
    };
    matrix_to_vec(&h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Hurst;

    fn config(beta: u8, h: f64) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(Beta::try_from(beta).unwrap(), 2, HurstVector::new(&[h]).unwrap());
        c.replicas = 200;
        c.mesh = vec![64, 128, 256];
        c.seed = 5;
        c
    }

    #[test]
    fn threshold_rule() {
        let h = HurstVector::new(&[0.5]).unwrap();
        assert!((ThresholdRule::Holder { kappa: 2.0 }.delta(&[0.25], &h) - 1.0).abs() < 1e-15);
        let h2 = HurstVector::new(&[0.5, 0.25]).unwrap();
        assert!((ThresholdRule::default().delta(&[1.0 / 16.0, 1.0 / 16.0], &h2) - 0.25).abs() < 1e-15);
        assert_eq!(ThresholdRule::Fixed { delta: 0.3 }.delta(&[0.1], &h), 0.3);
    }

    #[test]
    fn validation() {
        let mut c = config(1, 0.3);
        assert!(c.validate().is_ok());
        c.mesh = vec![128, 64];
        assert!(matches!(c.validate(), Err(Error::Config { .. })));
        let mut c = config(1, 0.3);
        c.shift = Some(vec![0.0; 4]);
        assert!(c.validate().is_err());
        let mut c = config(1, 0.3);
        c.d = 1;
        assert!(c.validate().is_err());
        let mut c = config(1, 0.3);
        c.hurst = HurstVector::new(&[0.3, 0.3]).unwrap();
        c.mesh = vec![200];
        assert!(c.validate().is_err());
    }

    #[test]
    fn nested_indices_subsample() {
        let g = GridSpec::interval(0.0, 1.0, 9).unwrap();
        assert_eq!(nested_indices(&g, 4), vec![0, 4, 8]);
        let g = GridSpec::new(vec![0.0; 2], vec![1.0; 2], vec![5, 5]).unwrap();
        assert_eq!(nested_indices(&g, 2), vec![0, 2, 4, 10, 12, 14, 20, 22, 24]);
    }

    #[test]
    fn trivial_thresholds() {
        let mut c = config(1, 0.7);
        c.threshold = ThresholdRule::Fixed { delta: f64::INFINITY };
        assert_eq!(estimate_collision_probability(&c).unwrap().estimate, 1.0);
        let mut c = config(2, 0.3);
        c.replicas = 1;
        let p = estimate_collision_probability(&c).unwrap().estimate;
        assert!(p == 0.0 || p == 1.0);
    }

    #[test]
    fn monotone_in_threshold() {
        let c = config(1, 0.4);
        let deltas = [0.001, 0.01, 0.05, 0.1, 0.3, 1.0];
        let stats = estimate_at_thresholds(&c, &deltas).unwrap();
        assert!(stats.windows(2).all(|w| w[0].estimate <= w[1].estimate));
        for s in &stats {
            assert!(s.interval.low <= s.estimate && s.estimate <= s.interval.high);
        }
    }

    #[test]
    fn refinement_finest_level_matches_single_estimate() {
        let mut c = config(1, 0.3);
        let study = refinement_study(&c, &c.mesh.clone()).unwrap();
        assert_eq!(study.levels.len(), 3);
        c.mesh = vec![256];
        assert_eq!(study.levels[2], estimate_collision_probability(&c).unwrap());
        let single = refinement_study(&c, &[256]).unwrap();
        assert!(single.trend.is_none());
    }

    #[test]
    fn non_nested_ladder_runs() {
        let c = config(1, 0.3);
        let study = refinement_study(&c, &[48, 100, 256]).unwrap();
        assert_eq!(study.levels.iter().map(|l| l.mesh).collect::<Vec<_>>(), vec![48, 100, 256]);
    }

    #[test]
    fn coarser_meshes_see_fewer_collisions_with_fixed_delta() {
        let mut c = config(1, 0.3);
        c.threshold = ThresholdRule::Fixed { delta: 0.05 };
        let study = refinement_study(&c, &c.mesh.clone()).unwrap();
        assert!(study.levels.windows(2).all(|w| w[0].collisions <= w[1].collisions));
    }

    #[test]
    fn sweep_rejects_critical_point() {
        let c = config(1, 0.3);
        assert!(phase_sweep(&c, &[0.3, 0.51]).is_err());
        let s = phase_sweep(&c, &[0.3]).unwrap();
        assert_eq!(s.rows[0].study, refinement_study(&c, &c.mesh).unwrap());
        assert!(s.separation.is_none());
    }

    #[test]
    fn oracle_agrees() {
        for beta in [1, 2] {
            let mut c = config(beta, 0.35);
            c.replicas = 20;
            let rep = oracle_vector_reduction(&c).unwrap();
            assert!(rep.max_discrepancy <= 1e-10, "{rep:?}");
            assert_eq!(rep.times, 257);
        }
        assert_eq!(oracle_gap_2x2(Beta::Goe, &[0.0; 3]), 0.0);
        assert_eq!(flat_gap(&[0.0; 4], Beta::Gue, 2), 0.0);
        // beta = 1: 2 sqrt(eta^2 + xi12^2) with eta = (xi11 - xi22)/sqrt 2
        let f = [0.7, -0.2, 0.1];
        let eta = (f[0] - f[2]) / std::f64::consts::SQRT_2;
        assert!((oracle_gap_2x2(Beta::Goe, &f) - 2.0 * (eta * eta + f[1] * f[1]).sqrt()).abs() < 1e-15);
        let mut c = config(1, 0.3);
        c.d = 3;
        assert!(oracle_vector_reduction(&c).is_err());
    }

    #[test]
    fn exponent_fit_goe_closed_form() {
        let h = HurstVector::scalar(Hurst::new(0.3).unwrap());
        let gaps = sample_point_gaps(Beta::Goe, 2, &h, &[1.0], None, 20_000, 2).unwrap();
        // P(gap < 1) = 1 - exp(-1/8)
        let frac = gaps.iter().filter(|&&g| g < 1.0).count() as f64 / gaps.len() as f64;
        let want = 1.0 - (-1.0f64 / 8.0).exp();
        assert!((frac - want).abs() < 4.0 * (want * (1.0 - want) / 20_000.0).sqrt());
        assert!(gap_exponent_fit(Beta::Goe, 2, &h, &[1.0], 100, None, 1).is_err());
        assert!(fit_cdf_exponent(&gaps, [1e-9, 2e-9]).is_err());
    }

    #[test]
    fn shift_classification() {
        let mut c = config(1, 0.3);
        c.d = 3;
        c.shift = Some(diagonal_shift(Beta::Goe, &[3.0, 1.0, 1.0]).unwrap());
        assert_eq!(classify_shift(&c).unwrap(), ShiftSpectrum::OneRepeatedPair);
        c.shift = Some(diagonal_shift(Beta::Goe, &[3.0, 2.0, 1.0]).unwrap());
        assert_eq!(classify_shift(&c).unwrap(), ShiftSpectrum::Simple);
        c.shift = Some(diagonal_shift(Beta::Goe, &[1.0, 1.0, 1.0]).unwrap());
        assert!(classify_shift(&c).is_err());
        c.shift = None;
        assert_eq!(classify_shift(&c).unwrap(), ShiftSpectrum::Zero);
    }

    #[test]
    fn small_time_basics() {
        let mut c = config(1, 0.3);
        c.replicas = 100;
        let s = small_time_study(&c, &[1.0, 0.1], 64).unwrap();
        assert_eq!(s.rows.len(), 2);
        assert!(s.hypothesis_met);
        assert!(small_time_study(&c, &[0.1, 1.0], 64).is_err());
        assert!(small_time_study(&config(1, 0.7), &[1.0], 64).is_err());
        // well separated simple shift, tiny horizon
        c.shift = Some(diagonal_shift(Beta::Goe, &[5.0, 0.0]).unwrap());
        let s = small_time_study(&c, &[1e-4], 64).unwrap();
        assert!(!s.hypothesis_met);
        assert_eq!(s.rows[0].stats.collisions, 0);
    }

    #[test]
    fn deterministic_across_pools() {
        let c = config(2, 0.3);
        let one = with_threads(1, || refinement_study(&c, &c.mesh).unwrap()).unwrap();
        let four = with_threads(4, || refinement_study(&c, &c.mesh).unwrap()).unwrap();
        assert_eq!(one, four);
    }
}
