//! Dense complex matrix kernel.
//!
//! Everything here works on `nalgebra::DMatrix<Complex64>`. Hermitian inputs
//! are validated once (max entry of `|H - H^dagger|`) and every
//! Hermitian-producing routine re-symmetrizes its output as `(A + A^dagger)/2`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;

/// Max-entry tolerance on `|H - H^dagger|`, scaled by `max(1, max|H_ij|)`.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Relative floor below which eigenvalues count as negative: `-PSD_TOL * lambda_max`.
pub const PSD_TOL: f64 = 1e-10;
/// Relative eigenvalue gap under which two neighbours are treated as degenerate.
pub const DEGENERACY_GAP: f64 = 1e-10;
/// Eigenvalues with `|lambda| <= NOISE_FLOOR * lambda_max` are rounding noise
/// of a rank-deficient matrix and are treated as exact zeros.
pub const NOISE_FLOOR: f64 = 1e-13;

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 10_000;

pub(crate) fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// A validated complex Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator(ComplexMatrix);

impl HermitianOperator {
    /// Validates Hermiticity and stores the re-symmetrized matrix.
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        check_hermitian(&matrix)?;
        Ok(Self(hermitize(&matrix)))
    }

    /// Symmetrizes without validation. Used for outputs that are Hermitian
    /// by construction and only carry rounding drift.
    pub fn from_hermitized(matrix: &ComplexMatrix) -> Self {
        Self(hermitize(matrix))
    }

    pub fn identity(dim: usize) -> Self {
        Self(ComplexMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(ComplexMatrix::zeros(dim, dim))
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        Self(ComplexMatrix::from_fn(n, n, |i, j| {
            if i == j {
                c(values[i], 0.0)
            } else {
                c(0.0, 0.0)
            }
        }))
    }

    /// Builds a Hermitian operator from real row-major entries.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::NotSquare {
                rows: n,
                cols: rows.first().map_or(0, |r| r.len()),
            });
        }
        Self::new(ComplexMatrix::from_fn(n, n, |i, j| c(rows[i][j], 0.0)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_inner(self) -> ComplexMatrix {
        self.0
    }

    pub fn spectrum(&self) -> Spectrum {
        spectrum_of_hermitized(&self.0)
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    /// Conjugation `U H U^dagger`.
    pub fn conjugate_by(&self, unitary: &ComplexMatrix) -> Self {
        Self::from_hermitized(&(unitary * &self.0 * unitary.adjoint()))
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self(self.0.map(|z| z * factor))
    }
}

/// Eigenvalues sorted descending together with the matching orthonormal eigenvectors
/// stored as the columns of `vectors`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    values: Vec<f64>,
    vectors: ComplexMatrix,
}

impl Spectrum {
    /// Assembles a spectrum from parts that are already consistent
    /// (descending values, orthonormal columns).
    pub(crate) fn from_parts(values: Vec<f64>, vectors: ComplexMatrix) -> Self {
        debug_assert_eq!(values.len(), vectors.ncols());
        Self { values, vectors }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn vectors(&self) -> &ComplexMatrix {
        &self.vectors
    }

    /// Largest eigenvalue magnitude; the scale for relative thresholds.
    pub fn scale(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// Columns `0..m` of the eigenvector matrix.
    pub fn leading_vectors(&self, m: usize) -> ComplexMatrix {
        self.vectors.columns(0, m).into_owned()
    }

    /// `true` when eigenvalues `k-1` and `k` are closer than the relative
    /// degeneracy gap.
    pub fn is_degenerate_at(&self, k: usize) -> bool {
        if k == 0 || k >= self.values.len() {
            return false;
        }
        (self.values[k - 1] - self.values[k]).abs() < DEGENERACY_GAP * self.scale().max(f64::MIN_POSITIVE)
    }

    /// `true` when any adjacent pair of eigenvalues is degenerate; the
    /// eigenbasis inside such a cluster is backend-dependent.
    pub fn has_degeneracy(&self) -> bool {
        (1..self.values.len()).any(|k| self.is_degenerate_at(k))
    }

    /// `sum_i f(lambda_i) |v_i><v_i|`.
    pub fn map_values(&self, f: impl Fn(f64) -> Complex64) -> ComplexMatrix {
        let mut scaled = self.vectors.clone();
        for (j, &v) in self.values.iter().enumerate() {
            let w = f(v);
            for z in scaled.column_mut(j).iter_mut() {
                *z *= w;
            }
        }
        scaled * self.vectors.adjoint()
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        hermitize(&self.map_values(|v| c(v, 0.0)))
    }
}

/// `(A + A^dagger) / 2`.
pub fn hermitize(a: &ComplexMatrix) -> ComplexMatrix {
    (a + a.adjoint()).map(|z| z * 0.5)
}

pub fn max_abs(a: &ComplexMatrix) -> f64 {
    a.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// Max-entry distance between two matrices of equal shape.
pub fn max_abs_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape mismatch in max_abs_diff");
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).norm()))
}

fn check_square(a: &ComplexMatrix) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    Ok(())
}

fn check_hermitian(a: &ComplexMatrix) -> Result<()> {
    check_square(a)?;
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite);
    }
    let deviation = max_abs_diff(a, &a.adjoint());
    if deviation > HERMITIAN_TOL * max_abs(a).max(1.0) {
        return Err(Error::NonHermitianInput { deviation });
    }
    Ok(())
}

/// Hermitian eigendecomposition with eigenvalues sorted descending.
pub fn eigh(h: &ComplexMatrix) -> Result<Spectrum> {
    check_hermitian(h)?;
    Ok(spectrum_of_hermitized(&hermitize(h)))
}

fn spectrum_of_hermitized(h: &ComplexMatrix) -> Spectrum {
    let n = h.nrows();
    if n == 0 {
        return Spectrum::from_parts(Vec::new(), ComplexMatrix::zeros(0, 0));
    }
    let eig =
        SymmetricEigen::try_new(h.clone(), EIGEN_EPS, EIGEN_MAX_ITER).unwrap_or_else(|| SymmetricEigen::new(h.clone()));

    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps the backend order inside exact ties.
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let values: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = ComplexMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        // Fix the phase: the first component of maximal modulus is made real positive.
        let (mut pivot, mut best) = (0, -1.0);
        for (i, z) in col.iter().enumerate() {
            if z.norm() > best * (1.0 + 1e-12) {
                best = z.norm();
                pivot = i;
            }
        }
        let phase = if best > 0.0 {
            col[pivot].conj() / best
        } else {
            c(1.0, 0.0)
        };
        vectors.set_column(dst, &(col * phase));
    }
    Spectrum::from_parts(values, vectors)
}

/// Unique positive semi-definite square root. Eigenvalues in
/// `[-PSD_TOL * lambda_max, NOISE_FLOOR * lambda_max]` are clamped to zero.
pub fn psd_sqrt(p: &ComplexMatrix) -> Result<HermitianOperator> {
    let spectrum = eigh(p)?;
    check_psd(&spectrum)?;
    Ok(sqrt_from_spectrum(&spectrum))
}

pub(crate) fn check_psd(spectrum: &Spectrum) -> Result<()> {
    let scale = spectrum.scale();
    if let Some(&min) = spectrum.values().last() {
        if min < -PSD_TOL * scale {
            return Err(Error::NotPsd { min_eigenvalue: min });
        }
    }
    Ok(())
}

pub(crate) fn sqrt_from_spectrum(spectrum: &Spectrum) -> HermitianOperator {
    let floor = NOISE_FLOOR * spectrum.scale();
    HermitianOperator::from_hermitized(&spectrum.map_values(|v| if v > floor { c(v.sqrt(), 0.0) } else { c(0.0, 0.0) }))
}

/// Trace norm `Tr sqrt(A A^dagger)`, i.e. the sum of singular values.
///
/// Computed from the Hermitian dilation `[[0, A], [A^dagger, 0]]`, whose
/// eigenvalues are `±sigma_i`; this keeps zero singular values at the
/// rounding level instead of the square root of it.
pub fn trace_norm(a: &ComplexMatrix) -> Result<f64> {
    check_square(a)?;
    let n = a.nrows();
    let mut dilation = ComplexMatrix::zeros(2 * n, 2 * n);
    dilation.view_mut((0, n), (n, n)).copy_from(a);
    dilation.view_mut((n, 0), (n, n)).copy_from(&a.adjoint());
    let spectrum = spectrum_of_hermitized(&dilation);
    Ok(0.5 * spectrum.values().iter().map(|v| v.abs()).sum::<f64>())
}

/// `exp(-i angle G)` built from the eigendecomposition of `G`.
pub fn expm_unitary(generator: &HermitianOperator, angle: f64) -> ComplexMatrix {
    unitary_from_spectrum(&generator.spectrum(), angle)
}

/// `sum_k exp(-i angle g_k) |g_k><g_k|` for a precomputed generator spectrum.
pub fn unitary_from_spectrum(spectrum: &Spectrum, angle: f64) -> ComplexMatrix {
    spectrum.map_values(|g| Complex64::from_polar(1.0, -angle * g))
}

/// Tensor product `A ⊗ B`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// Kronecker sum `A ⊗ I + I ⊗ B`.
pub fn kron_sum(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let ia = ComplexMatrix::identity(a.nrows(), a.ncols());
    let ib = ComplexMatrix::identity(b.nrows(), b.ncols());
    a.kronecker(&ib) + ia.kronecker(b)
}

/// Block-diagonal embedding of the given blocks.
pub fn direct_sum(blocks: &[ComplexMatrix]) -> ComplexMatrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = ComplexMatrix::zeros(rows, cols);
    let (mut r, mut k) = (0, 0);
    for b in blocks {
        out.view_mut((r, k), b.shape()).copy_from(b);
        r += b.nrows();
        k += b.ncols();
    }
    out
}

/// Max-entry residual of `U U^dagger - I`.
pub fn unitarity_residual(u: &ComplexMatrix) -> f64 {
    let n = u.nrows();
    max_abs_diff(&(u * u.adjoint()), &ComplexMatrix::identity(n, n))
}
