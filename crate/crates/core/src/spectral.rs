//! Ordered spectra, gap tracking, contour-integral eigenprojections and
//! collision detection along matrix paths.

use nalgebra::{DMatrix, Matrix2, SymmetricEigen};
use num_complex::Complex64;

use crate::ensembles::{vec_to_matrix, Beta, EnsemblePath, HermitianMatrix};
use crate::error::{Error, Result};
use crate::fields::GridSpec;

fn sort_descending(v: &mut [f64]) {
    // stable: equal values keep solver order
    v.sort_by(|a, b| b.total_cmp(a));
}

fn eigenvalues_unchecked(m: &HermitianMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = match m {
        HermitianMatrix::Real(a) if a.nrows() == 2 => {
            let s = Matrix2::new(a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
            s.symmetric_eigenvalues().iter().copied().collect()
        }
        HermitianMatrix::Complex(a) if a.nrows() == 2 => {
            let s = Matrix2::new(a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
            s.symmetric_eigenvalues().iter().copied().collect()
        }
        HermitianMatrix::Real(a) => a.clone().symmetric_eigenvalues().iter().copied().collect(),
        HermitianMatrix::Complex(a) => a.clone().symmetric_eigenvalues().iter().copied().collect(),
    };
    sort_descending(&mut ev);
    ev
}

/// Eigenvalues `lambda_1 >= ... >= lambda_d`.
pub fn ordered_eigenvalues(m: &HermitianMatrix) -> Result<Vec<f64>> {
    m.check_hermitian()?;
    Ok(eigenvalues_unchecked(m))
}

/// Cyclic Jacobi sweeps on a Hermitian `b`, accumulating the rotations into `v`.
fn jacobi_polish(b: &mut DMatrix<Complex64>, v: &mut DMatrix<Complex64>) {
    const MAX_SWEEPS: usize = 30;
    let d = b.nrows();
    let scale = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..d).flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| b[(i, j)].norm_sqr()).sum();
        if off.sqrt() <= 1e-16 * scale {
            return;
        }
        for p in 0..d {
            for q in p + 1..d {
                let c = b[(p, q)];
                let mag = c.norm();
                if mag <= 1e-300 {
                    continue;
                }
                let phase = c / mag;
                let tau = (b[(q, q)].re - b[(p, p)].re) / (2.0 * mag);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let t = if tau == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * cs;
                // J on the (p, q) plane: [[cs, sn * phase], [-sn * conj(phase), cs]]
                let jpq = phase * sn;
                let jqp = -phase.conj() * sn;
                for k in 0..d {
                    let (bkp, bkq) = (b[(k, p)], b[(k, q)]);
                    b[(k, p)] = bkp * cs + bkq * jqp;
                    b[(k, q)] = bkp * jpq + bkq * cs;
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = vkp * cs + vkq * jqp;
                    v[(k, q)] = vkp * jpq + vkq * cs;
                }
                for k in 0..d {
                    let (bpk, bqk) = (b[(p, k)], b[(q, k)]);
                    b[(p, k)] = bpk * cs + bqk * jqp.conj();
                    b[(q, k)] = bpk * jpq.conj() + bqk * cs;
                }
                b[(p, q)] = Complex64::new(0.0, 0.0);
                b[(q, p)] = Complex64::new(0.0, 0.0);
            }
        }
    }
}

/// Descending eigenvalues with the matching orthonormal eigenvectors as columns.
///
/// The solver's vectors are refined by Jacobi sweeps on `V^* M V`, which keeps
/// residuals at rounding level for clustered spectra.
pub fn ordered_eigen(m: &HermitianMatrix) -> Result<(Vec<f64>, DMatrix<Complex64>)> {
    m.check_hermitian()?;
    let a = m.to_complex();
    let eig = SymmetricEigen::new(a.clone());
    let mut v = eig.eigenvectors;
    let mut b = v.adjoint() * &a * &v;
    jacobi_polish(&mut b, &mut v);
    let d = m.dim();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| b[(j, j)].re.total_cmp(&b[(i, i)].re));
    let values = order.iter().map(|&i| b[(i, i)].re).collect();
    let vectors = DMatrix::from_fn(d, d, |r, c| v[(r, order[c])]);
    Ok((values, vectors))
}

/// Eigenvalues straight from flat coordinates, for hot loops.
pub fn flat_eigenvalues(x: &[f64], beta: Beta, d: usize) -> Result<Vec<f64>> {
    Ok(eigenvalues_unchecked(&vec_to_matrix(x, beta, d)?))
}

/// Smallest adjacent gap of a descending spectrum and the pair `(i, i+1)` achieving it.
pub fn adjacent_gap(eigenvalues: &[f64]) -> (f64, usize) {
    eigenvalues
        .windows(2)
        .enumerate()
        .map(|(i, w)| (w[0] - w[1], i))
        .fold((f64::INFINITY, 0), |best, cur| if cur.0 < best.0 { cur } else { best })
}

/// `lambda_1 - lambda_2` of a 2x2 Hermitian matrix in closed form.
pub fn gap_closed_form_2x2(m: &HermitianMatrix) -> Result<f64> {
    if m.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: m.dim() });
    }
    m.check_hermitian()?;
    Ok(match m {
        HermitianMatrix::Real(a) => {
            let diff = a[(0, 0)] - a[(1, 1)];
            (diff * diff + 4.0 * a[(0, 1)] * a[(0, 1)]).sqrt()
        }
        HermitianMatrix::Complex(a) => {
            let diff = a[(0, 0)].re - a[(1, 1)].re;
            let z = a[(0, 1)];
            (diff * diff + 4.0 * z.re * z.re + 4.0 * z.im * z.im).sqrt()
        }
    })
}

/// Ordered spectra along a path, laid out `(replica, grid point, index)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumPath {
    grid: GridSpec,
    replicas: usize,
    d: usize,
    values: Vec<f64>,
    frames: Option<Vec<DMatrix<Complex64>>>,
}

impl SpectrumPath {
    pub fn from_path(path: &EnsemblePath) -> Self {
        Self::build(path, false)
    }

    /// Also keeps the eigenvector frame at every `(replica, time)`.
    pub fn from_path_with_frames(path: &EnsemblePath) -> Self {
        Self::build(path, true)
    }

    fn build(path: &EnsemblePath, frames: bool) -> Self {
        let (r_n, t_n, d) = (path.replicas(), path.times(), path.dim());
        let mut values = Vec::with_capacity(r_n * t_n * d);
        let mut kept = frames.then(Vec::new);
        for r in 0..r_n {
            for t in 0..t_n {
                let m = path.matrix(r, t);
                match kept.as_mut() {
                    Some(f) => {
                        let (ev, vecs) = ordered_eigen(&m).expect("path matrices are Hermitian");
                        values.extend(ev);
                        f.push(vecs);
                    }
                    None => values.extend(eigenvalues_unchecked(&m)),
                }
            }
        }
        SpectrumPath { grid: path.grid().clone(), replicas: r_n, d, values, frames: kept }
    }

    /// Wraps precomputed spectra; each must already be descending.
    pub fn from_values(grid: GridSpec, replicas: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        let expected = replicas * grid.len() * d;
        if values.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: values.len() });
        }
        if values.chunks(d).any(|c| c.windows(2).any(|w| w[0] < w[1])) {
            return Err(Error::domain("spectra must be in descending order"));
        }
        Ok(SpectrumPath { grid, replicas, d, values, frames: None })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn replicas(&self) -> usize {
        self.replicas
    }

    pub fn times(&self) -> usize {
        self.grid.len()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn eigenvalues(&self, replica: usize, time: usize) -> &[f64] {
        let start = (replica * self.grid.len() + time) * self.d;
        &self.values[start..start + self.d]
    }

    pub fn frame(&self, replica: usize, time: usize) -> Option<&DMatrix<Complex64>> {
        self.frames.as_ref().map(|f| &f[replica * self.grid.len() + time])
    }

    /// Adjacent gap series of one replica with the achieving pair per time.
    pub fn gap_series(&self, replica: usize) -> Vec<(f64, usize)> {
        (0..self.times()).map(|t| adjacent_gap(self.eigenvalues(replica, t))).collect()
    }
}

/// Minimum over the stored grid (not over the continuum) of one replica.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinGap {
    pub replica: usize,
    pub gap: f64,
    pub time_index: usize,
    /// Lower index `i` of the pair `(i, i + 1)`, 0-based.
    pub pair: usize,
}

pub fn min_gap(path: &SpectrumPath) -> Vec<MinGap> {
    (0..path.replicas())
        .map(|r| {
            let (time_index, (gap, pair)) = path
                .gap_series(r)
                .into_iter()
                .enumerate()
                .fold((0, (f64::INFINITY, 0)), |best, (t, g)| if g.0 < best.1 .0 { (t, g) } else { best });
            MinGap { replica: r, gap, time_index, pair }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionEvent {
    pub replica: usize,
    pub time_index: usize,
    pub pair: usize,
    pub gap: f64,
}

/// Every grid time at which the smallest adjacent gap is below `delta`.
pub fn detect_collisions(path: &SpectrumPath, delta: f64) -> Result<Vec<CollisionEvent>> {
    if !(delta > 0.0) {
        return Err(Error::domain(format!("collision threshold must be positive, got {delta}")));
    }
    let mut events = Vec::new();
    for r in 0..path.replicas() {
        for (t, (gap, pair)) in path.gap_series(r).into_iter().enumerate() {
            if gap < delta {
                events.push(CollisionEvent { replica: r, time_index: t, pair, gap });
            }
        }
    }
    Ok(events)
}

/// Spectral projector onto a cluster of eigenvalues.
#[derive(Debug, Clone)]
pub struct Projector {
    pub matrix: DMatrix<Complex64>,
    /// 0-based indices into the descending spectrum.
    pub cluster: Vec<usize>,
    pub center: f64,
    pub radius: f64,
}

impl Projector {
    pub fn idempotence_error(&self) -> f64 {
        frobenius(&(&self.matrix * &self.matrix - &self.matrix))
    }

    pub fn hermitian_error(&self) -> f64 {
        frobenius(&(&self.matrix - self.matrix.adjoint()))
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }
}

pub fn frobenius(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub const MIN_CLUSTER_SEPARATION: f64 = 1e-10;

fn cluster_geometry(ev: &[f64], cluster: &[usize]) -> Result<(f64, f64, f64)> {
    let d = ev.len();
    if cluster.is_empty() || cluster.iter().any(|&i| i >= d) {
        return Err(Error::domain(format!("cluster indices must be nonempty and below {d}")));
    }
    let mut idx = cluster.to_vec();
    idx.sort_unstable();
    idx.dedup();
    if idx.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(Error::domain("cluster must be contiguous in the ordered spectrum"));
    }
    let inside: Vec<f64> = idx.iter().map(|&i| ev[i]).collect();
    let center = inside.iter().sum::<f64>() / inside.len() as f64;
    let half_width = inside.iter().map(|v| (v - center).abs()).fold(0.0, f64::max);
    let separation = (0..d)
        .filter(|i| !idx.contains(i))
        .flat_map(|i| inside.iter().map(move |c| (ev[i] - c).abs()))
        .fold(f64::INFINITY, f64::min);
    Ok((center, half_width, separation))
}

/// `(1/2 pi i) oint (z I - M)^{-1} dz` by the trapezoid rule on a circle around
/// the cluster mean. The radius is the cluster half-width plus half the
/// distance to the rest of the spectrum.
pub fn eigenprojection_contour(m: &HermitianMatrix, cluster: &[usize], points: usize) -> Result<Projector> {
    let ev = ordered_eigenvalues(m)?;
    let (center, half_width, separation) = cluster_geometry(&ev, cluster)?;
    if separation < MIN_CLUSTER_SEPARATION {
        return Err(Error::ClusterNotIsolated(separation));
    }
    if points < 3 {
        return Err(Error::domain("contour quadrature needs at least 3 nodes"));
    }
    let margin = if separation.is_finite() { 0.5 * separation } else { 1.0 };
    let radius = half_width + margin;
    let d = m.dim();
    let a = m.to_complex();
    let mut acc = DMatrix::<Complex64>::zeros(d, d);
    for k in 0..points {
        let theta = 2.0 * std::f64::consts::PI * k as f64 / points as f64;
        let offset = Complex64::from_polar(radius, theta);
        let z = Complex64::new(center, 0.0) + offset;
        let shifted = DMatrix::<Complex64>::identity(d, d) * z - &a;
        let resolvent = shifted.lu().try_inverse().ok_or(Error::ClusterNotIsolated(separation))?;
        // dz = i offset dtheta, and 1/(2 pi i) * i * 2 pi / N = 1/N
        acc += resolvent * offset;
    }
    acc /= Complex64::new(points as f64, 0.0);
    let mut cluster = cluster.to_vec();
    cluster.sort_unstable();
    cluster.dedup();
    Ok(Projector { matrix: acc, cluster, center, radius })
}

/// `sum_{i in cluster} v_i v_i^*` from a direct eigensolve.
pub fn eigenprojection_direct(m: &HermitianMatrix, cluster: &[usize]) -> Result<DMatrix<Complex64>> {
    let (ev, vecs) = ordered_eigen(m)?;
    cluster_geometry(&ev, cluster)?;
    let d = m.dim();
    let mut p = DMatrix::<Complex64>::zeros(d, d);
    for &i in cluster {
        let v = vecs.column(i);
        p += &v * v.adjoint();
    }
    Ok(p)
}

/// Minimum adjacent gap straight from flat coordinates; the workhorse of the
/// Monte Carlo drivers. Still goes through the eigensolver for `d = 2`.
pub(crate) fn flat_gap(x: &[f64], beta: Beta, d: usize) -> f64 {
    if d == 2 {
        // flat layout for d = 2: (x11, x12, x22[, y12])
        let ev = match beta {
            Beta::Goe => Matrix2::new(x[0], x[1], x[1], x[2]).symmetric_eigenvalues(),
            Beta::Gue => {
                let z = Complex64::new(x[1], x[3]);
                Matrix2::new(Complex64::new(x[0], 0.0), z, z.conj(), Complex64::new(x[2], 0.0)).symmetric_eigenvalues()
            }
        };
        return (ev[0] - ev[1]).abs();
    }
    let m = vec_to_matrix(x, beta, d).expect("flat length matches the class");
    adjacent_gap(&eigenvalues_unchecked(&m)).0
}
