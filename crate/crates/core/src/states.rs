//! Density matrices, sub-normalized states, unitary families and truncation.

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, hermitize, unitary_from_spectrum, ComplexMatrix, HermitianOperator, Spectrum};

/// Absolute tolerance on `|Tr rho - 1|` for normalized states.
pub const TRACE_TOL: f64 = 1e-10;
/// Absolute floor on eigenvalues of states.
pub const STATE_PSD_TOL: f64 = 1e-10;
/// Default relative threshold for counting an eigenvalue in the rank.
pub const DEFAULT_RANK_TOLERANCE: f64 = 1e-12;
/// Absolute gap between `lambda_m` and `lambda_{m+1}` below which the
/// truncation projector is not unique.
pub const CUT_GAP: f64 = 1e-10;

/// A normalized quantum state with its cached spectral decomposition.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    matrix: HermitianOperator,
    spectrum: Spectrum,
    rank_tolerance: f64,
}

impl DensityMatrix {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        Self::from_operator(HermitianOperator::new(matrix)?)
    }

    pub fn from_operator(matrix: HermitianOperator) -> Result<Self> {
        let trace = matrix.trace();
        if (trace - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidTrace { trace });
        }
        let spectrum = matrix.spectrum();
        if let Some(&min) = spectrum.values().last() {
            if min < -STATE_PSD_TOL {
                return Err(Error::NotPsd { min_eigenvalue: min });
            }
        }
        Ok(Self {
            matrix,
            spectrum,
            rank_tolerance: DEFAULT_RANK_TOLERANCE,
        })
    }

    /// Diagonal state in the computational basis.
    pub fn diagonal(probabilities: &[f64]) -> Result<Self> {
        Self::from_operator(HermitianOperator::diagonal(probabilities))
    }

    /// `|psi><psi|` for the normalized version of `psi`.
    pub fn pure(psi: &[Complex64]) -> Result<Self> {
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidInstance("pure state vector has zero norm".into()));
        }
        let v = nalgebra::DVector::from_iterator(psi.len(), psi.iter().map(|z| z / norm));
        Self::new(&v * v.adjoint())
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self::diagonal(&vec![1.0 / dim as f64; dim]).expect("maximally mixed state is valid")
    }

    pub(crate) fn from_parts(matrix: HermitianOperator, spectrum: Spectrum, rank_tolerance: f64) -> Self {
        Self {
            matrix,
            spectrum,
            rank_tolerance,
        }
    }

    pub fn with_rank_tolerance(mut self, rank_tolerance: f64) -> Self {
        self.rank_tolerance = rank_tolerance;
        self
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        self.matrix.matrix()
    }

    pub fn operator(&self) -> &HermitianOperator {
        &self.matrix
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn eigenvalues(&self) -> &[f64] {
        self.spectrum.values()
    }

    pub fn rank_tolerance(&self) -> f64 {
        self.rank_tolerance
    }

    /// Number of eigenvalues above `rank_tolerance * lambda_max`.
    pub fn rank(&self) -> usize {
        let floor = self.rank_tolerance * self.spectrum.scale();
        self.eigenvalues().iter().filter(|&&v| v > floor).count()
    }

    pub fn purity(&self) -> f64 {
        (self.matrix() * self.matrix()).trace().re
    }

    pub fn to_sub_normalized(&self) -> SubNormalizedState {
        SubNormalizedState::trusted(self.matrix.clone())
    }
}

/// Convenience alias for [`DensityMatrix::rank`].
pub fn rank_of(rho: &DensityMatrix) -> usize {
    rho.rank()
}

/// A positive semi-definite operator with trace at most one.
#[derive(Debug, Clone, PartialEq)]
pub struct SubNormalizedState {
    matrix: HermitianOperator,
    trace_value: f64,
}

impl SubNormalizedState {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let op = HermitianOperator::new(matrix)?;
        let trace_value = op.trace();
        if trace_value > 1.0 + TRACE_TOL {
            return Err(Error::TraceExceedsOne { trace: trace_value });
        }
        if let Some(&min) = op.spectrum().values().last() {
            if min < -STATE_PSD_TOL {
                return Err(Error::NotPsd { min_eigenvalue: min });
            }
        }
        Ok(Self {
            matrix: op,
            trace_value,
        })
    }

    /// Wraps an operator that is PSD with trace <= 1 by construction.
    pub(crate) fn trusted(matrix: HermitianOperator) -> Self {
        let trace_value = matrix.trace();
        Self { matrix, trace_value }
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        self.matrix.matrix()
    }

    pub fn operator(&self) -> &HermitianOperator {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.trace_value
    }

    /// `q * self + (1 - q) * other`.
    pub fn mix(&self, q: f64, other: &SubNormalizedState) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        let m = self.matrix().map(|z| z * q) + other.matrix().map(|z| z * (1.0 - q));
        Ok(Self::trusted(HermitianOperator::from_hermitized(&m)))
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self::trusted(self.matrix.scale(factor))
    }

    /// `V tau V^dagger`.
    pub fn conjugate_by(&self, unitary: &ComplexMatrix) -> Self {
        Self::trusted(self.matrix.conjugate_by(unitary))
    }

    pub fn tensor(&self, other: &SubNormalizedState) -> Self {
        Self::trusted(HermitianOperator::from_hermitized(&linalg::kron(
            self.matrix(),
            other.matrix(),
        )))
    }

    /// `⊕_k mu_k tau_k`. Weights must be nonnegative with sum at most one.
    pub fn direct_sum(weighted: &[(f64, &SubNormalizedState)]) -> Result<Self> {
        let total: f64 = weighted.iter().map(|(mu, _)| mu).sum();
        if weighted.iter().any(|(mu, _)| *mu < 0.0) || total > 1.0 + TRACE_TOL {
            return Err(Error::TraceExceedsOne { trace: total });
        }
        let blocks: Vec<ComplexMatrix> = weighted.iter().map(|(mu, s)| s.matrix().map(|z| z * *mu)).collect();
        Ok(Self::trusted(HermitianOperator::from_hermitized(&linalg::direct_sum(
            &blocks,
        ))))
    }
}

/// A probe state together with the generator of `W(theta) = exp(-i theta G)`.
#[derive(Debug, Clone)]
pub struct UnitaryFamily {
    probe: DensityMatrix,
    generator: HermitianOperator,
    generator_spectrum: Spectrum,
}

impl UnitaryFamily {
    pub fn new(probe: DensityMatrix, generator: HermitianOperator) -> Result<Self> {
        if probe.dim() != generator.dim() {
            return Err(Error::DimensionMismatch {
                left: probe.dim(),
                right: generator.dim(),
            });
        }
        let generator_spectrum = generator.spectrum();
        Ok(Self {
            probe,
            generator,
            generator_spectrum,
        })
    }

    pub fn dim(&self) -> usize {
        self.probe.dim()
    }

    pub fn probe(&self) -> &DensityMatrix {
        &self.probe
    }

    pub fn generator(&self) -> &HermitianOperator {
        &self.generator
    }

    pub fn rank(&self) -> usize {
        self.probe.rank()
    }

    /// `W(theta) = exp(-i theta G)`.
    pub fn unitary(&self, theta: f64) -> ComplexMatrix {
        unitary_from_spectrum(&self.generator_spectrum, theta)
    }

    /// `rho_theta = W(theta) rho W(theta)^dagger`. The eigenvalues are copied
    /// from the probe and the eigenvectors are `W(theta)|lambda_i>`.
    pub fn evolve(&self, theta: f64) -> DensityMatrix {
        let w = self.unitary(theta);
        let matrix = HermitianOperator::from_hermitized(&(&w * self.probe.matrix() * w.adjoint()));
        let vectors = &w * self.probe.spectrum().vectors();
        let spectrum = Spectrum::from_parts(self.probe.eigenvalues().to_vec(), vectors);
        DensityMatrix::from_parts(matrix, spectrum, self.probe.rank_tolerance())
    }

    /// Analytic derivative `d rho_theta / d theta = i (rho_theta G - G rho_theta)`.
    pub fn derivative(&self, theta: f64) -> ComplexMatrix {
        let rho = self.evolve(theta);
        let g = self.generator.matrix();
        let comm = rho.matrix() * g - g * rho.matrix();
        hermitize(&comm.map(|z| z * c(0.0, 1.0)))
    }

    /// The family `(V rho V^dagger, V G V^dagger)`, whose states are `V rho_theta V^dagger`.
    pub fn rotated(&self, unitary: &ComplexMatrix) -> Result<Self> {
        let probe = DensityMatrix::from_operator(self.probe.operator().conjugate_by(unitary))?
            .with_rank_tolerance(self.probe.rank_tolerance());
        Self::new(probe, self.generator.conjugate_by(unitary))
    }

    /// Matrix elements `<lambda_i|G|lambda_j>` in the probe eigenbasis.
    pub fn generator_in_eigenbasis(&self) -> ComplexMatrix {
        let v = self.probe.spectrum().vectors();
        v.adjoint() * self.generator.matrix() * v
    }

    /// Truncates `rho_theta` and `rho_{theta+delta}` with the projector onto the
    /// top-`m` eigenvectors of `rho_theta`.
    pub fn truncate_pair(&self, theta: f64, delta: f64, m: usize) -> Result<TruncatedPair> {
        let d = self.dim();
        if m == 0 || m > d {
            return Err(Error::InvalidTruncation { m, dim: d });
        }
        let base = self.evolve(theta);
        let kept_eigenvalues = base.eigenvalues()[..m].to_vec();
        let kept_vectors = base.spectrum().leading_vectors(m);

        let exact = {
            let mut scaled = kept_vectors.clone();
            for (j, &lam) in kept_eigenvalues.iter().enumerate() {
                for z in scaled.column_mut(j).iter_mut() {
                    *z *= lam;
                }
            }
            HermitianOperator::from_hermitized(&(scaled * kept_vectors.adjoint()))
        };

        let shifted = self.evolve(theta + delta);
        let compressed = hermitize(&(kept_vectors.adjoint() * shifted.matrix() * &kept_vectors));
        let error = HermitianOperator::from_hermitized(&(&kept_vectors * &compressed * kept_vectors.adjoint()));

        let values = base.eigenvalues();
        let support_floor = base.rank_tolerance() * base.spectrum().scale();
        let degenerate_cut = m < d && values[m - 1] > support_floor && (values[m - 1] - values[m]).abs() < CUT_GAP;

        Ok(TruncatedPair {
            exact_truncated: SubNormalizedState::trusted(exact),
            error_truncated: SubNormalizedState {
                trace_value: compressed.trace().re,
                matrix: error,
            },
            projector_rank: m,
            kept_eigenvalues,
            kept_vectors,
            compressed_error: compressed,
            shifted,
            base_theta: theta,
            shift: delta,
            degenerate_cut,
        })
    }
}

/// The truncated exact and error states built from the projector anchored at
/// the base angle.
#[derive(Debug, Clone)]
pub struct TruncatedPair {
    pub exact_truncated: SubNormalizedState,
    pub error_truncated: SubNormalizedState,
    pub projector_rank: usize,
    pub kept_eigenvalues: Vec<f64>,
    /// Kept eigenvectors `|lambda_i(theta)>` as columns (d x m).
    pub kept_vectors: ComplexMatrix,
    /// `<lambda_i(theta)| rho_{theta+delta} |lambda_j(theta)>` (m x m).
    pub compressed_error: ComplexMatrix,
    /// The untruncated `rho_{theta+delta}`.
    pub shifted: DensityMatrix,
    pub base_theta: f64,
    pub shift: f64,
    /// Set when the cut at `m` splits a degenerate eigenvalue cluster inside
    /// the support, so the projector is not unique.
    pub degenerate_cut: bool,
}

impl TruncatedPair {
    /// `sum_{i<=m} lambda_i`.
    pub fn kept_weight(&self) -> f64 {
        self.kept_eigenvalues.iter().sum()
    }
}

// ---------------------------------------------------------------------------
// Random instances
// ---------------------------------------------------------------------------

pub(crate) fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> ComplexMatrix {
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im)
    })
}

/// Ginibre state `A A^dagger / Tr[A A^dagger]` from a `d x r` complex Gaussian `A`.
pub fn random_density_with<R: Rng + ?Sized>(rng: &mut R, d: usize, r: usize) -> Result<DensityMatrix> {
    if r == 0 || r > d {
        return Err(Error::InvalidRank { rank: r, dim: d });
    }
    let a = complex_gaussian(rng, d, r);
    let gram = &a * a.adjoint();
    let trace = gram.trace().re;
    DensityMatrix::new(hermitize(&gram.map(|z| z / trace)))
}

/// GUE-style generator `(A + A^dagger) / (2 sqrt(d))`.
pub fn random_generator_with<R: Rng + ?Sized>(rng: &mut R, d: usize) -> HermitianOperator {
    let a = complex_gaussian(rng, d, d);
    let scale = 1.0 / (d as f64).sqrt();
    HermitianOperator::from_hermitized(&a.map(|z| z * scale))
}

/// Haar unitary from the QR factorization of a complex Gaussian matrix with
/// the phases of `diag(R)` divided out.
pub fn random_unitary_with<R: Rng + ?Sized>(rng: &mut R, d: usize) -> ComplexMatrix {
    let a = complex_gaussian(rng, d, d);
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        let diag = r[(j, j)];
        let phase = if diag.norm() > 0.0 {
            diag / diag.norm()
        } else {
            c(1.0, 0.0)
        };
        for z in q.column_mut(j).iter_mut() {
            *z *= phase;
        }
    }
    q
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_density(d: usize, r: usize, seed: u64) -> Result<DensityMatrix> {
    random_density_with(&mut seeded_rng(seed), d, r)
}

pub fn random_generator(d: usize, seed: u64) -> HermitianOperator {
    random_generator_with(&mut seeded_rng(seed), d)
}

pub fn random_unitary(d: usize, seed: u64) -> ComplexMatrix {
    random_unitary_with(&mut seeded_rng(seed), d)
}

// ---------------------------------------------------------------------------
// Instance files
// ---------------------------------------------------------------------------

/// On-disk instance: `d`, `rho` and `generator` as `d x d` arrays of `[re, im]`
/// pairs, and an optional base angle `theta` (default 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    pub d: usize,
    pub rho: Vec<Vec<[f64; 2]>>,
    pub generator: Vec<Vec<[f64; 2]>>,
    #[serde(default)]
    pub theta: f64,
}

fn to_pairs(m: &ComplexMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

fn from_pairs(name: &str, d: usize, rows: &[Vec<[f64; 2]>]) -> Result<ComplexMatrix> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidInstance(format!("`{name}` must be a {d}x{d} array")));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| c(rows[i][j][0], rows[i][j][1])))
}

impl Instance {
    pub fn from_family(family: &UnitaryFamily, theta: f64) -> Self {
        Self {
            d: family.dim(),
            rho: to_pairs(family.probe().matrix()),
            generator: to_pairs(family.generator().matrix()),
            theta,
        }
    }

    /// Validates shapes, Hermiticity, trace and positivity.
    pub fn to_family(&self) -> Result<UnitaryFamily> {
        if self.d == 0 {
            return Err(Error::InvalidInstance("`d` must be positive".into()));
        }
        if !self.theta.is_finite() {
            return Err(Error::InvalidInstance("`theta` must be finite".into()));
        }
        let rho = DensityMatrix::new(from_pairs("rho", self.d, &self.rho)?)?;
        let generator = HermitianOperator::new(from_pairs("generator", self.d, &self.generator)?)?;
        UnitaryFamily::new(rho, generator)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }
}
