//! Constructive geometry of the degenerate sets: matrices with a repeated
//! eigenvalue, parametrized as `Pi Lambda(levels) Pi^*` with `Pi` completed
//! from a Stiefel frame of `d - 2` orthonormal columns.

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

use crate::ensembles::{n_beta, Beta, HermitianMatrix};
use crate::error::{Error, Result};
use crate::rng::{experiment_id, substream, StreamRng};
use crate::spectral::{adjacent_gap, ordered_eigen};

pub const ORTHONORMAL_TOL: f64 = 1e-12;
/// Smallest Gram–Schmidt normalization accepted when completing a frame.
pub const COMPLETION_MIN_NORM: f64 = 1e-6;
pub const PHASE_MIN_OVERLAP: f64 = 1e-10;
/// Eigenvalues closer than this count as equal.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Real or complex scalars that frames can be built from.
pub trait FrameScalar: ComplexField<RealField = f64> + Copy {
    const BETA: Beta;

    /// Standard Gaussian with `E|z|^2 = 1`.
    fn gaussian(rng: &mut StreamRng) -> Self;

    fn into_hermitian(m: DMatrix<Self>) -> HermitianMatrix;
}

impl FrameScalar for f64 {
    const BETA: Beta = Beta::Goe;

    fn gaussian(rng: &mut StreamRng) -> Self {
        StandardNormal.sample(rng)
    }

    fn into_hermitian(m: DMatrix<Self>) -> HermitianMatrix {
        HermitianMatrix::Real((&m + m.transpose()) * 0.5)
    }
}

impl FrameScalar for Complex64 {
    const BETA: Beta = Beta::Gue;

    fn gaussian(rng: &mut StreamRng) -> Self {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    }

    fn into_hermitian(m: DMatrix<Self>) -> HermitianMatrix {
        HermitianMatrix::Complex((&m + m.adjoint()) * Complex64::new(0.5, 0.0))
    }
}

/// Dimension of the set of `d x (d - i)` matrices with orthonormal columns.
pub fn stiefel_dimension(beta: Beta, d: usize, i: usize) -> usize {
    match beta {
        Beta::Goe => (d * (d - 1) - i * (i.saturating_sub(1))) / 2,
        Beta::Gue => d * d - i * i,
    }
}

/// Dimension of the degenerate set near a point with exactly one repeated pair:
/// codimension 2 for real symmetric, 3 for complex Hermitian matrices.
pub fn degenerate_dimension(beta: Beta, d: usize) -> usize {
    n_beta(beta, d) - (beta.value() as usize + 1)
}

fn orthonormality_error<T: FrameScalar>(m: &DMatrix<T>) -> f64 {
    let gram = m.adjoint() * m;
    let k = gram.nrows();
    let mut err: f64 = 0.0;
    for i in 0..k {
        for j in 0..k {
            let target = if i == j { T::one() } else { T::zero() };
            err = err.max((gram[(i, j)] - target).modulus());
        }
    }
    err
}

/// `d x k` matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelFrame<T: FrameScalar> {
    columns: DMatrix<T>,
}

impl<T: FrameScalar> StiefelFrame<T> {
    pub fn new(columns: DMatrix<T>) -> Result<Self> {
        if columns.ncols() > columns.nrows() {
            return Err(Error::domain("a frame cannot have more columns than rows"));
        }
        let err = orthonormality_error(&columns);
        if err > ORTHONORMAL_TOL {
            return Err(Error::domain(format!("columns not orthonormal (error {err:.3e})")));
        }
        Ok(StiefelFrame { columns })
    }

    /// The first `k` columns of the identity.
    pub fn canonical(d: usize, k: usize) -> Self {
        StiefelFrame { columns: DMatrix::identity(d, k) }
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.columns
    }

    pub fn dim(&self) -> usize {
        self.columns.nrows()
    }

    pub fn rank(&self) -> usize {
        self.columns.ncols()
    }

    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.columns)
    }
}

/// Haar-distributed frame from the QR factorization of a Gaussian matrix,
/// with the phases of `R`'s diagonal absorbed into `Q`.
pub fn random_stiefel<T: FrameScalar>(d: usize, k: usize, rng: &mut StreamRng) -> Result<StiefelFrame<T>> {
    if k > d {
        return Err(Error::domain(format!("cannot fit {k} orthonormal columns in dimension {d}")));
    }
    if k == 0 {
        return Ok(StiefelFrame { columns: DMatrix::zeros(d, 0) });
    }
    let g = DMatrix::<T>::from_fn(d, k, |_, _| T::gaussian(rng));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..k {
        let phase = r[(j, j)].signum();
        let phase = if phase.modulus() == 0.0 { T::one() } else { phase };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    StiefelFrame::new(q)
}

/// Seeded convenience wrapper around [`random_stiefel`].
pub fn random_stiefel_seeded<T: FrameScalar>(d: usize, k: usize, seed: u64) -> Result<StiefelFrame<T>> {
    random_stiefel(d, k, &mut substream(seed, experiment_id("geometry/stiefel"), 0))
}

/// Orthogonal/unitary `d x d` matrix whose first `d - 2` columns are a given frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletedFrame<T: FrameScalar> {
    matrix: DMatrix<T>,
}

impl<T: FrameScalar> CompletedFrame<T> {
    pub fn identity(d: usize) -> Self {
        CompletedFrame { matrix: DMatrix::identity(d, d) }
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.matrix)
    }
}

fn project_out<T: FrameScalar>(v: &DVector<T>, basis: &[DVector<T>]) -> DVector<T> {
    // v - sum_j <phi_j, v> phi_j, all coefficients taken against the original v
    let mut out = v.clone();
    for phi in basis {
        out -= phi * phi.dotc(v);
    }
    out
}

/// Append `psi_1, psi_2` to the frame by Gram–Schmidt of the reference's last
/// two columns against the frame.
pub fn complete_frame<T: FrameScalar>(frame: &StiefelFrame<T>, reference: &DMatrix<T>) -> Result<CompletedFrame<T>> {
    let d = frame.dim();
    if frame.rank() + 2 != d {
        return Err(Error::domain(format!("frame must have d - 2 = {} columns, has {}", d - 2, frame.rank())));
    }
    if reference.nrows() != d || reference.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, got: reference.nrows() });
    }
    let phis: Vec<DVector<T>> = (0..d - 2).map(|j| frame.columns.column(j).into_owned()).collect();
    let p1 = reference.column(d - 2).into_owned();
    let p2 = reference.column(d - 1).into_owned();

    let u1 = project_out(&p1, &phis);
    let n1 = u1.norm();
    if n1 < COMPLETION_MIN_NORM {
        return Err(Error::DegenerateCompletion(n1));
    }
    let psi1 = u1.unscale(n1);

    let u2 = project_out(&p2, &phis) - &psi1 * psi1.dotc(&p2);
    let n2 = u2.norm();
    if n2 < COMPLETION_MIN_NORM {
        return Err(Error::DegenerateCompletion(n2));
    }
    let psi2 = u2.unscale(n2);

    let mut matrix = DMatrix::<T>::zeros(d, d);
    matrix.columns_mut(0, d - 2).copy_from(&frame.columns);
    matrix.set_column(d - 2, &psi1);
    matrix.set_column(d - 1, &psi2);
    Ok(CompletedFrame { matrix })
}

/// [`complete_frame`] against the identity basis, falling back to random
/// orthonormal references when the identity is too close to the frame.
pub fn complete_frame_auto<T: FrameScalar>(frame: &StiefelFrame<T>, rng: &mut StreamRng) -> Result<CompletedFrame<T>> {
    let d = frame.dim();
    match complete_frame(frame, &DMatrix::identity(d, d)) {
        Err(Error::DegenerateCompletion(_)) => {
            for _ in 0..16 {
                let reference = random_stiefel::<T>(d, d, rng)?;
                match complete_frame(frame, reference.matrix()) {
                    Err(Error::DegenerateCompletion(_)) => continue,
                    other => return other,
                }
            }
            Err(Error::DegenerateCompletion(0.0))
        }
        other => other,
    }
}

/// `diag(l_1, ..., l_{d-2}, l_{d-1}, l_{d-1})`.
pub fn lambda_matrix(levels: &[f64], d: usize) -> Result<DMatrix<f64>> {
    if d < 2 {
        return Err(Error::domain("dimension must be at least 2"));
    }
    if levels.len() != d - 1 {
        return Err(Error::DimensionMismatch { expected: d - 1, got: levels.len() });
    }
    Ok(DMatrix::from_fn(d, d, |i, j| if i == j { levels[i.min(d - 2)] } else { 0.0 }))
}

/// Chart of the degenerate set: `Pi Lambda(levels) Pi^*`, symmetrized so the
/// output is exactly Hermitian.
pub fn chart_f<T: FrameScalar>(frame: &CompletedFrame<T>, levels: &[f64]) -> Result<HermitianMatrix> {
    let d = frame.dim();
    let lambda = lambda_matrix(levels, d)?.map(|x| T::from_real(x));
    let pi = frame.matrix();
    Ok(T::into_hermitian(pi * lambda * pi.adjoint()))
}

/// Rotate each column of `a` by the unit scalar making `<a_j, r_j>` real and
/// positive.
pub fn phase_fix<T: FrameScalar>(a: &StiefelFrame<T>, reference: &StiefelFrame<T>) -> Result<StiefelFrame<T>> {
    if a.matrix().shape() != reference.matrix().shape() {
        return Err(Error::domain("frames must have the same shape"));
    }
    let mut out = a.columns.clone();
    for j in 0..a.rank() {
        let overlap = reference.columns.column(j).dotc(&a.columns.column(j));
        let modulus = overlap.modulus();
        if modulus < PHASE_MIN_OVERLAP {
            return Err(Error::VanishingPhase { column: j });
        }
        let unit = overlap.conjugate().unscale(modulus);
        for i in 0..a.dim() {
            out[(i, j)] *= unit;
        }
    }
    Ok(StiefelFrame { columns: out })
}

/// Draws `d - 1` distinct levels; must return them in any order.
pub type LevelSampler<'a> = &'a (dyn Fn(&mut StreamRng) -> Vec<f64> + Sync);

/// Independent uniform levels on `[lo, hi)`, sorted descending.
pub fn uniform_levels(d: usize, lo: f64, hi: f64) -> impl Fn(&mut StreamRng) -> Vec<f64> + Sync {
    move |rng| {
        use rand::Rng;
        let mut v: Vec<f64> = (0..d - 1).map(|_| rng.gen_range(lo..hi)).collect();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }
}

fn sample_degenerate_with<T: FrameScalar>(d: usize, levels: LevelSampler, rng: &mut StreamRng) -> Result<HermitianMatrix> {
    let frame = random_stiefel::<T>(d, d - 2, rng)?;
    let completed = complete_frame_auto(&frame, rng)?;
    chart_f(&completed, &levels(rng))
}

/// A random matrix on the degenerate set: random frame, random levels, chart.
pub fn sample_degenerate(d: usize, beta: Beta, levels: LevelSampler, rng: &mut StreamRng) -> Result<HermitianMatrix> {
    if d < 2 {
        return Err(Error::domain("dimension must be at least 2"));
    }
    match beta {
        Beta::Goe => sample_degenerate_with::<f64>(d, levels, rng),
        Beta::Gue => sample_degenerate_with::<Complex64>(d, levels, rng),
    }
}

/// Certified upper bound on the operator-norm distance to the degenerate set,
/// with the matrix that attains it.
#[derive(Debug, Clone)]
pub struct DegenerateWitness {
    pub distance: f64,
    pub pair: usize,
    pub witness: HermitianMatrix,
}

/// Merging the closest adjacent pair at its midpoint moves the matrix by half
/// the gap in operator norm.
pub fn distance_to_degenerate_upper(m: &HermitianMatrix) -> Result<DegenerateWitness> {
    let (mut values, vectors) = ordered_eigen(m)?;
    let (gap, pair) = adjacent_gap(&values);
    let mid = 0.5 * (values[pair] + values[pair + 1]);
    values[pair] = mid;
    values[pair + 1] = mid;
    let diag = DMatrix::from_diagonal(&DVector::from_iterator(values.len(), values.iter().map(|&v| Complex64::new(v, 0.0))));
    let rebuilt = &vectors * diag * vectors.adjoint();
    let witness = match m {
        HermitianMatrix::Real(_) => f64::into_hermitian(rebuilt.map(|z| z.re)),
        HermitianMatrix::Complex(_) => Complex64::into_hermitian(rebuilt),
    };
    Ok(DegenerateWitness { distance: 0.5 * gap, pair, witness })
}

/// Whether the ordered spectrum of `m` has an adjacent gap below `tol`.
pub fn is_degenerate(m: &HermitianMatrix, tol: f64) -> Result<bool> {
    let ev = crate::spectral::ordered_eigenvalues(m)?;
    Ok(adjacent_gap(&ev).0 <= tol)
}
