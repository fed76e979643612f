//! GOE/GUE-type matrix paths `Y(t) = A + X(t)` built from independent scalar
//! fields, and the flattening between coordinate vectors and matrices.
//!
//! Coordinates follow the row-major packing of the upper triangle: for
//! `i <= j` (1-based) the real part of entry `(i, j)` sits at position
//! `i(1 + 2d - i)/2 - d + j`; for `beta = 2` the imaginary part of a strictly
//! upper entry sits at `d(d+1)/2 + i(2d - i - 1)/2 - d + j`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{FieldSample, GridSpec, Hurst};

/// Symmetry class: real symmetric (`Goe`, beta = 1) or complex Hermitian
/// (`Gue`, beta = 2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Beta {
    Goe,
    Gue,
}

impl Beta {
    pub fn value(self) -> u8 {
        match self {
            Beta::Goe => 1,
            Beta::Gue => 2,
        }
    }
}

impl TryFrom<u8> for Beta {
    type Error = Error;
    fn try_from(b: u8) -> Result<Self> {
        match b {
            1 => Ok(Beta::Goe),
            2 => Ok(Beta::Gue),
            _ => Err(Error::domain(format!("beta must be 1 or 2, got {b}"))),
        }
    }
}

impl From<Beta> for u8 {
    fn from(b: Beta) -> u8 {
        b.value()
    }
}

/// Number of real coordinates of a `d x d` matrix in the class.
pub fn n_beta(beta: Beta, d: usize) -> usize {
    match beta {
        Beta::Goe => d * (d + 1) / 2,
        Beta::Gue => d * d,
    }
}

/// Index arithmetic of the flattening (0-based positions, 0-based `i, j`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlatIndexMap {
    pub d: usize,
    pub beta: Beta,
}

impl FlatIndexMap {
    pub fn new(beta: Beta, d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::domain(format!("matrix dimension must be >= 2, got {d}")));
        }
        Ok(FlatIndexMap { d, beta })
    }

    pub fn len(&self) -> usize {
        n_beta(self.beta, self.d)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Position of `Re M[i][j]` for `i <= j`.
    pub fn real_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= j && j < self.d);
        let (i1, j1, d) = (i + 1, j + 1, self.d);
        i1 * (1 + 2 * d - i1) / 2 - d + j1 - 1
    }

    /// Position of `Im M[i][j]` for `i < j` (complex class only).
    pub fn imag_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.d && self.beta == Beta::Gue);
        let (i1, j1, d) = (i + 1, j + 1, self.d);
        n_beta(Beta::Goe, d) + i1 * (2 * d - i1 - 1) / 2 - d + j1 - 1
    }

    pub fn is_diagonal(&self, k: usize) -> bool {
        (0..self.d).any(|i| self.real_index(i, i) == k)
    }
}

/// A Hermitian matrix in one of the two symmetry classes.
#[derive(Debug, Clone, PartialEq)]
pub enum HermitianMatrix {
    Real(DMatrix<f64>),
    Complex(DMatrix<Complex64>),
}

impl HermitianMatrix {
    pub fn dim(&self) -> usize {
        match self {
            HermitianMatrix::Real(m) => m.nrows(),
            HermitianMatrix::Complex(m) => m.nrows(),
        }
    }

    pub fn beta(&self) -> Beta {
        match self {
            HermitianMatrix::Real(_) => Beta::Goe,
            HermitianMatrix::Complex(_) => Beta::Gue,
        }
    }

    pub fn to_complex(&self) -> DMatrix<Complex64> {
        match self {
            HermitianMatrix::Real(m) => m.map(|x| Complex64::new(x, 0.0)),
            HermitianMatrix::Complex(m) => m.clone(),
        }
    }

    /// Largest entrywise deviation from `M = M^*`.
    pub fn asymmetry(&self) -> f64 {
        match self {
            HermitianMatrix::Real(m) => (m - m.transpose()).amax(),
            HermitianMatrix::Complex(m) => {
                (m - m.adjoint()).iter().fold(0.0f64, |a, z| a.max(z.norm()))
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        match self {
            HermitianMatrix::Real(m) => m.amax(),
            HermitianMatrix::Complex(m) => m.iter().fold(0.0f64, |a, z| a.max(z.norm())),
        }
    }

    /// Fails unless Hermitian to within `1e-12` (relative to the entry scale).
    pub fn check_hermitian(&self) -> Result<()> {
        let asym = self.asymmetry();
        if asym > HERMITIAN_TOL * self.max_abs().max(1.0) {
            Err(Error::NotHermitian(asym))
        } else {
            Ok(())
        }
    }

    /// `(M + M^*) / 2`.
    pub fn hermitianized(&self) -> Self {
        match self {
            HermitianMatrix::Real(m) => HermitianMatrix::Real((m + m.transpose()) * 0.5),
            HermitianMatrix::Complex(m) => {
                HermitianMatrix::Complex((m + m.adjoint()) * Complex64::new(0.5, 0.0))
            }
        }
    }
}

pub const HERMITIAN_TOL: f64 = 1e-12;

pub fn vec_to_matrix(x: &[f64], beta: Beta, d: usize) -> Result<HermitianMatrix> {
    let map = FlatIndexMap::new(beta, d)?;
    if x.len() != map.len() {
        return Err(Error::DimensionMismatch { expected: map.len(), got: x.len() });
    }
    Ok(match beta {
        Beta::Goe => HermitianMatrix::Real(DMatrix::from_fn(d, d, |i, j| {
            let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
            x[map.real_index(lo, hi)]
        })),
        Beta::Gue => HermitianMatrix::Complex(DMatrix::from_fn(d, d, |i, j| {
            use std::cmp::Ordering::*;
            match i.cmp(&j) {
                Equal => Complex64::new(x[map.real_index(i, i)], 0.0),
                Less => Complex64::new(x[map.real_index(i, j)], x[map.imag_index(i, j)]),
                Greater => Complex64::new(x[map.real_index(j, i)], -x[map.imag_index(j, i)]),
            }
        })),
    })
}

pub fn matrix_to_vec(m: &HermitianMatrix) -> Result<Vec<f64>> {
    m.check_hermitian()?;
    let d = m.dim();
    let map = FlatIndexMap::new(m.beta(), d)?;
    let mut x = vec![0.0; map.len()];
    for i in 0..d {
        for j in i..d {
            match m {
                HermitianMatrix::Real(a) => x[map.real_index(i, j)] = a[(i, j)],
                HermitianMatrix::Complex(a) => {
                    x[map.real_index(i, j)] = a[(i, j)].re;
                    if i < j {
                        x[map.imag_index(i, j)] = a[(i, j)].im;
                    }
                }
            }
        }
    }
    Ok(x)
}

/// Deterministic Hermitian shift `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftMatrix {
    matrix: HermitianMatrix,
    flat: Vec<f64>,
}

impl ShiftMatrix {
    pub fn new(matrix: HermitianMatrix) -> Result<Self> {
        let flat = matrix_to_vec(&matrix)?;
        Ok(ShiftMatrix { matrix, flat })
    }

    pub fn zero(beta: Beta, d: usize) -> Result<Self> {
        let n = FlatIndexMap::new(beta, d)?.len();
        ShiftMatrix::new(vec_to_matrix(&vec![0.0; n], beta, d)?)
    }

    pub fn matrix(&self) -> &HermitianMatrix {
        &self.matrix
    }

    pub fn flat(&self) -> &[f64] {
        &self.flat
    }

    pub fn beta(&self) -> Beta {
        self.matrix.beta()
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn is_zero(&self) -> bool {
        self.flat.iter().all(|&v| v == 0.0)
    }
}

/// Per-coordinate multiplier applied to the generating fields: `sqrt(2)` on
/// the GOE diagonal, one elsewhere.
pub fn entry_scales(beta: Beta, d: usize) -> Result<Vec<f64>> {
    let map = FlatIndexMap::new(beta, d)?;
    Ok((0..map.len())
        .map(|k| if beta == Beta::Goe && map.is_diagonal(k) { std::f64::consts::SQRT_2 } else { 1.0 })
        .collect())
}

/// Matrix-valued path stored as flat coordinate vectors, laid out
/// `(replica, grid point, coordinate)`. Full matrices are materialized on
/// demand and are Hermitian by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsemblePath {
    beta: Beta,
    d: usize,
    shift: ShiftMatrix,
    grid: GridSpec,
    replicas: usize,
    flats: Vec<f64>,
}

impl EnsemblePath {
    pub fn beta(&self) -> Beta {
        self.beta
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn shift(&self) -> &ShiftMatrix {
        &self.shift
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

    pub fn flat(&self, replica: usize, time: usize) -> &[f64] {
        let n = n_beta(self.beta, self.d);
        let start = (replica * self.grid.len() + time) * n;
        &self.flats[start..start + n]
    }

    pub fn matrix(&self, replica: usize, time: usize) -> HermitianMatrix {
        vec_to_matrix(self.flat(replica, time), self.beta, self.d).expect("stored coordinates have valid length")
    }
}

/// Assemble `Y = A + X` from `n_beta(d)` independent field samples.
///
/// Field `k` drives coordinate `k`: the first `d(d+1)/2` fields are the
/// `xi_{i,j}` (`i <= j`), the rest are the `eta_{i,j}` (`i < j`) of the complex
/// class. The complex diagonal is real.
pub fn build_ensemble_path(
    fields: &[FieldSample],
    beta: Beta,
    d: usize,
    shift: &ShiftMatrix,
    grid: &GridSpec,
) -> Result<EnsemblePath> {
    let n = FlatIndexMap::new(beta, d)?.len();
    if fields.len() < n {
        return Err(Error::domain(format!("need {n} independent fields, got {}", fields.len())));
    }
    if shift.beta() != beta || shift.dim() != d {
        return Err(Error::domain("shift matrix does not match the symmetry class or dimension"));
    }
    let replicas = fields[0].replicas();
    for f in &fields[..n] {
        if f.grid() != grid {
            return Err(Error::domain("field sampled on a different grid"));
        }
        if f.replicas() != replicas {
            return Err(Error::domain("fields carry different replica counts"));
        }
    }
    let scales = entry_scales(beta, d)?;
    let p = grid.len();
    let mut flats = vec![0.0; replicas * p * n];
    for r in 0..replicas {
        for (k, f) in fields[..n].iter().enumerate() {
            let vals = f.replica(r);
            for t in 0..p {
                flats[(r * p + t) * n + k] = shift.flat()[k] + scales[k] * vals[t];
            }
        }
    }
    Ok(EnsemblePath { beta, d, shift: shift.clone(), grid: grid.clone(), replicas, flats })
}

/// `s -> c^{-H} X(c s)`: the same stored values reinterpreted on the time
/// grid divided by `c`. Requires `A = 0`.
pub fn rescale_self_similar(path: &EnsemblePath, c: f64, h: Hurst) -> Result<EnsemblePath> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::domain(format!("scale must be positive, got {c}")));
    }
    if !path.shift.is_zero() {
        return Err(Error::domain("self-similar rescaling applies to X, not to a shifted path"));
    }
    if c == 1.0 {
        return Ok(path.clone());
    }
    let g = &path.grid;
    let grid = GridSpec::new(
        g.lower().iter().map(|a| a / c).collect(),
        g.upper().iter().map(|b| b / c).collect(),
        g.counts().to_vec(),
    )?;
    let factor = c.powf(-h.get());
    Ok(EnsemblePath {
        grid,
        flats: path.flats.iter().map(|v| v * factor).collect(),
        ..path.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn n_beta_examples() {
        assert_eq!(n_beta(Beta::Goe, 2), 3);
        assert_eq!(n_beta(Beta::Gue, 2), 4);
        assert_eq!(n_beta(Beta::Goe, 3), 6);
    }

    #[test]
    fn beta_parse() {
        assert!(Beta::try_from(3).is_err());
        assert_eq!(Beta::try_from(2).unwrap(), Beta::Gue);
    }

    #[test]
    fn packing_examples() {
        let m = vec_to_matrix(&[1.0, 2.0, 3.0], Beta::Goe, 2).unwrap();
        assert_eq!(m, HermitianMatrix::Real(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 3.0])));
        let m = vec_to_matrix(&[1.0, 2.0, 3.0, 4.0], Beta::Gue, 2).unwrap();
        let c = |re, im| Complex64::new(re, im);
        assert_eq!(
            m,
            HermitianMatrix::Complex(DMatrix::from_row_slice(
                2,
                2,
                &[c(1.0, 0.0), c(2.0, 4.0), c(2.0, -4.0), c(3.0, 0.0)]
            ))
        );
        let id = HermitianMatrix::Real(DMatrix::identity(2, 2));
        assert_eq!(matrix_to_vec(&id).unwrap(), vec![1.0, 0.0, 1.0]);
        assert!(vec_to_matrix(&[1.0, 2.0], Beta::Goe, 2).is_err());
    }

    #[test]
    fn non_hermitian_rejected() {
        let m = HermitianMatrix::Real(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.1, 3.0]));
        assert!(matches!(matrix_to_vec(&m), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn index_maps_are_bijective() {
        for d in 2..7 {
            for beta in [Beta::Goe, Beta::Gue] {
                let map = FlatIndexMap::new(beta, d).unwrap();
                let mut seen = vec![false; map.len()];
                for i in 0..d {
                    for j in i..d {
                        seen[map.real_index(i, j)] = true;
                        if beta == Beta::Gue && i < j {
                            seen[map.imag_index(i, j)] = true;
                        }
                    }
                }
                assert!(seen.iter().all(|&s| s), "d={d} {beta:?}");
            }
        }
    }

    proptest! {
        #[test]
        fn round_trip(xs in proptest::collection::vec(-10.0..10.0f64, 16), d in 2usize..5, complex in any::<bool>()) {
            let beta = if complex { Beta::Gue } else { Beta::Goe };
            let n = n_beta(beta, d);
            let x = &xs[..n];
            let m = vec_to_matrix(x, beta, d).unwrap();
            prop_assert_eq!(m.asymmetry(), 0.0);
            prop_assert_eq!(matrix_to_vec(&m).unwrap(), x.to_vec());
            prop_assert_eq!(matrix_to_vec(&m.hermitianized()).unwrap(), x.to_vec());
        }
    }

    #[test]
    fn build_checks_inputs() {
        let grid = GridSpec::point(1.0).unwrap();
        let f = FieldSample::new(grid.clone(), 2, vec![1.0, 2.0]).unwrap();
        let shift = ShiftMatrix::zero(Beta::Goe, 2).unwrap();
        assert!(build_ensemble_path(&[f.clone(), f.clone()], Beta::Goe, 2, &shift, &grid).is_err());
        let gue_shift = ShiftMatrix::zero(Beta::Gue, 2).unwrap();
        let fs = vec![f.clone(), f.clone(), f.clone()];
        assert!(build_ensemble_path(&fs, Beta::Goe, 2, &gue_shift, &grid).is_err());
        let path = build_ensemble_path(&fs, Beta::Goe, 2, &shift, &grid).unwrap();
        let m = path.matrix(1, 0);
        let s2 = std::f64::consts::SQRT_2;
        assert_eq!(m, HermitianMatrix::Real(DMatrix::from_row_slice(2, 2, &[2.0 * s2, 2.0, 2.0, 2.0 * s2])));
    }

    #[test]
    fn rescale_identity_and_shift_rejection() {
        let grid = GridSpec::interval(1.0, 2.0, 2).unwrap();
        let f = FieldSample::new(grid.clone(), 1, vec![0.5, -0.25]).unwrap();
        let fs = vec![f.clone(), f.clone(), f.clone()];
        let h = Hurst::new(0.3).unwrap();
        let path = build_ensemble_path(&fs, Beta::Goe, 2, &ShiftMatrix::zero(Beta::Goe, 2).unwrap(), &grid).unwrap();
        assert_eq!(rescale_self_similar(&path, 1.0, h).unwrap(), path);
        let r = rescale_self_similar(&path, 2.0, h).unwrap();
        assert_eq!(r.grid().lower(), &[0.5]);
        assert!((r.flat(0, 1)[1] - (-0.25) * 2f64.powf(-0.3)).abs() < 1e-15);
        let shift = ShiftMatrix::new(HermitianMatrix::Real(DMatrix::identity(2, 2))).unwrap();
        let shifted = build_ensemble_path(&fs, Beta::Goe, 2, &shift, &grid).unwrap();
        assert!(rescale_self_similar(&shifted, 2.0, h).is_err());
    }
}
