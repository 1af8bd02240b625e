//! Standard and generalized fidelity, the truncated `T`-operator route, and
//! the distances built on the generalized fidelity.
//!
//! `||sqrt(a) sqrt(b)||_1` is evaluated as the sum of singular values of
//! `(sqrt(Lambda_a) V_a^dagger)(V_b sqrt(Lambda_b))`, restricted to eigenvalues
//! above [`SUPPORT_TOL`]` * lambda_max`. Rounding in a small eigenvalue `lambda`
//! then perturbs the result by `O(eps)` rather than the `O(eps / sqrt(lambda))`
//! of taking `Tr sqrt` of `sqrt(a) b sqrt(a)`, which keeps `1 - F` accurate at
//! the `1e-7` scale the small-shift limits need.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix, HermitianOperator, Spectrum};
use crate::states::{DensityMatrix, SubNormalizedState, TruncatedPair, UnitaryFamily};

/// Eigenvalues below `SUPPORT_TOL * lambda_max` are treated as exact zeros.
pub const SUPPORT_TOL: f64 = linalg::NOISE_FLOOR;
/// Below this trace deficit the geometric-mean term of `F*` is exactly zero.
pub const TRACE_DEFICIT_FLOOR: f64 = 1e-12;
fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch { left: a, right: b });
    }
    Ok(())
}

/// Columns `sqrt(lambda_i) |lambda_i>` over the numerical support.
fn root_factor(s: &Spectrum) -> ComplexMatrix {
    let floor = SUPPORT_TOL * s.scale();
    let support: Vec<usize> = (0..s.dim()).filter(|&i| s.values()[i] > floor).collect();
    let mut factor = ComplexMatrix::zeros(s.vectors().nrows(), support.len());
    for (col, &i) in support.iter().enumerate() {
        factor.set_column(col, &(s.vectors().column(i) * linalg::c(s.values()[i].sqrt(), 0.0)));
    }
    factor
}

/// Sum of singular values.
fn nuclear_norm(m: &ComplexMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().sum()
}

/// `||sqrt(a) sqrt(b)||_1`, evaluated identically for either argument order.
fn symmetric_root_overlap(a_spec: &Spectrum, a: &ComplexMatrix, b_spec: &Spectrum, b: &ComplexMatrix) -> Result<f64> {
    let (first, second) = if entrywise_cmp(b, a) == Ordering::Less {
        (b_spec, a_spec)
    } else {
        (a_spec, b_spec)
    };
    Ok(nuclear_norm(&(root_factor(first).adjoint() * root_factor(second))))
}

/// Lexicographic order on `(re, im)` entries.
fn entrywise_cmp(a: &ComplexMatrix, b: &ComplexMatrix) -> Ordering {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Standard fidelity `F = Tr sqrt(sqrt(rho1) rho2 sqrt(rho1))`.
pub fn fidelity(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<f64> {
    check_dims(rho1.dim(), rho2.dim())?;
    if rho1.matrix() == rho2.matrix() {
        return Ok(1.0);
    }
    symmetric_root_overlap(rho1.spectrum(), rho1.matrix(), rho2.spectrum(), rho2.matrix())
}

/// Standard fidelity through the trace norm `||sqrt(rho1) sqrt(rho2)||_1`.
/// Slower and less accurate near rank deficiency; used as a cross-check.
pub fn fidelity_trace_norm(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<f64> {
    check_dims(rho1.dim(), rho2.dim())?;
    let s1 = linalg::psd_sqrt(rho1.matrix())?;
    let s2 = linalg::psd_sqrt(rho2.matrix())?;
    linalg::trace_norm(&(s1.matrix() * s2.matrix()))
}

/// `sqrt((1 - Tr tau)(1 - Tr sigma))`, hard-zeroed when either deficit is below
/// [`TRACE_DEFICIT_FLOOR`].
pub fn geometric_mean_term(trace_tau: f64, trace_sigma: f64) -> f64 {
    let (a, b) = (1.0 - trace_tau, 1.0 - trace_sigma);
    if a < TRACE_DEFICIT_FLOOR || b < TRACE_DEFICIT_FLOOR {
        0.0
    } else {
        (a * b).sqrt()
    }
}

/// Generalized fidelity `F*(tau, sigma) = ||sqrt(tau) sqrt(sigma)||_1 + sqrt((1 - Tr tau)(1 - Tr sigma))`.
/// Exactly symmetric in its arguments, and exactly 1 for identical arguments.
pub fn generalized_fidelity(tau: &SubNormalizedState, sigma: &SubNormalizedState) -> Result<f64> {
    check_dims(tau.dim(), sigma.dim())?;
    if tau.matrix() == sigma.matrix() {
        return Ok(1.0);
    }
    let overlap = symmetric_root_overlap(
        &tau.operator().spectrum(),
        tau.matrix(),
        &sigma.operator().spectrum(),
        sigma.matrix(),
    )?;
    Ok(overlap + geometric_mean_term(tau.trace(), sigma.trace()))
}

/// `T_ij = sqrt(lambda_i lambda_j) <lambda_i(theta)| rho_{theta+delta} |lambda_j(theta)>`
/// restricted to kept indices with nonzero eigenvalue, held together with a
/// factor `T = F F^dagger`, `F = sqrt(Lambda_m) V_m^dagger V' sqrt(Lambda')`.
#[derive(Debug, Clone)]
pub struct TOperator {
    pub matrix: HermitianOperator,
    pub factor: ComplexMatrix,
    /// Indices (into the kept eigenvalues) spanning the rows of `matrix`.
    pub basis_labels: Vec<usize>,
}

impl TOperator {
    /// `Tr sqrt(T)`, the sum of singular values of the factor.
    pub fn sqrt_trace(&self) -> f64 {
        nuclear_norm(&self.factor)
    }

    fn build(pair: &TruncatedPair, shifted: &Spectrum) -> Self {
        let lambda = &pair.kept_eigenvalues;
        let floor = SUPPORT_TOL * lambda.first().copied().unwrap_or(0.0);
        let basis_labels: Vec<usize> = (0..lambda.len()).filter(|&i| lambda[i] > floor).collect();
        let mut kept = ComplexMatrix::zeros(pair.kept_vectors.nrows(), basis_labels.len());
        for (col, &i) in basis_labels.iter().enumerate() {
            kept.set_column(col, &(pair.kept_vectors.column(i) * linalg::c(lambda[i].sqrt(), 0.0)));
        }
        let factor = kept.adjoint() * root_factor(shifted);
        let matrix = HermitianOperator::from_hermitized(&(&factor * factor.adjoint()));
        Self {
            matrix,
            factor,
            basis_labels,
        }
    }
}

/// Builds the `T` operator of a truncated pair against an untruncated error state.
pub fn t_operator(pair: &TruncatedPair, error_state: &DensityMatrix) -> Result<TOperator> {
    check_dims(pair.kept_vectors.nrows(), error_state.dim())?;
    Ok(TOperator::build(pair, error_state.spectrum()))
}

/// Result of the truncated generalized fidelity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedFidelity {
    pub value: f64,
    /// `Tr sqrt(T)`.
    pub overlap: f64,
    pub geometric_term: f64,
    pub degenerate_cut: bool,
}

/// `F*` of a truncated pair through its `T` operator.
pub fn pair_generalized_fidelity(pair: &TruncatedPair) -> Result<TruncatedFidelity> {
    let overlap = TOperator::build(pair, pair.shifted.spectrum()).sqrt_trace();
    let geometric_term = geometric_mean_term(pair.kept_weight(), pair.error_truncated.trace());
    Ok(TruncatedFidelity {
        value: overlap + geometric_term,
        overlap,
        geometric_term,
        degenerate_cut: pair.degenerate_cut,
    })
}

/// `F*(rho_theta^(m), rho_{theta+delta}^(m)) = Tr sqrt(T) + sqrt((1 - Tr rho^(m)_theta)(1 - Tr rho^(m)_{theta+delta}))`.
pub fn generalized_fidelity_truncated(
    family: &UnitaryFamily,
    theta: f64,
    delta: f64,
    m: usize,
) -> Result<TruncatedFidelity> {
    pair_generalized_fidelity(&family.truncate_pair(theta, delta, m)?)
}

/// Squared generalized Bures distance `2 (1 - F*)`.
pub fn bures_sq(tau: &SubNormalizedState, sigma: &SubNormalizedState) -> Result<f64> {
    Ok(bures_sq_from_fidelity(generalized_fidelity(tau, sigma)?))
}

pub fn bures(tau: &SubNormalizedState, sigma: &SubNormalizedState) -> Result<f64> {
    Ok(bures_sq(tau, sigma)?.sqrt())
}

/// Generalized angular distance `arccos F*` in `[0, pi/2]`.
pub fn angular_distance(tau: &SubNormalizedState, sigma: &SubNormalizedState) -> Result<f64> {
    Ok(angular_from_fidelity(generalized_fidelity(tau, sigma)?))
}

/// Purified distance `sqrt(1 - F*)`.
pub fn purified_distance(tau: &SubNormalizedState, sigma: &SubNormalizedState) -> Result<f64> {
    Ok(purified_from_fidelity(generalized_fidelity(tau, sigma)?))
}

pub fn bures_sq_from_fidelity(f: f64) -> f64 {
    (2.0 * (1.0 - f)).max(0.0)
}

pub fn angular_from_fidelity(f: f64) -> f64 {
    f.clamp(0.0, 1.0).acos()
}

pub fn purified_from_fidelity(f: f64) -> f64 {
    (1.0 - f).max(0.0).sqrt()
}
