//! Quantum Fisher information (QFI) and its truncated lower bound (TQFI).
//!
//! Routes:
//! - `sld`: solve the Lyapunov equation in the eigenbasis of `rho_theta`, then `Tr[J^2 rho_theta]`;
//! - `eigenbasis`: `4 sum lambda_i |G_ij|^2 - 8 sum lambda_i lambda_j/(lambda_i+lambda_j) |G_ij|^2`;
//! - `closed_form`: the same double sum restricted to the kept indices `i, j <= m`;
//! - `tsld`: `Tr[L^2 tau_theta]` with the truncated SLD `L`;
//! - `finite_difference`: `8 (1 - F) / delta^2` on a shift grid, symmetrized over
//!   `±delta` and Richardson-extrapolated to `delta -> 0`.
//!
//! The truncated quantity is defined by its small-shift limit. The closed form
//! agrees with that limit only while the truncation discards some weight
//! (`m < rank`); at `m >= rank` the geometric-mean term of `F*` vanishes
//! identically and the limit is the full QFI. [`tqfi`] dispatches accordingly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fidelity::{self, TRACE_DEFICIT_FLOOR};
use crate::linalg::{c, hermitize, max_abs, ComplexMatrix, HermitianOperator};
use crate::states::{SubNormalizedState, UnitaryFamily};

/// Default shift grid for the finite-difference routes.
pub const DEFAULT_DELTAS: [f64; 3] = [1e-2, 5e-3, 2.5e-3];
/// Eigenvalue pairs with `lambda_i + lambda_j <= PAIR_FLOOR * lambda_max` are skipped.
pub const PAIR_FLOOR: f64 = 1e-12;
/// Shifts must satisfy `delta^2 <= DELTA_GUARD * (1 - Tr rho^(m))` when weight is discarded.
pub const DELTA_GUARD: f64 = 0.01;
/// Relative tolerance between successive Richardson extrapolants.
pub const CONVERGENCE_REL: f64 = 1e-4;
/// Magnitude below which [`CONVERGENCE_REL`] is applied to this floor instead
/// of the value itself (an absolute tolerance of `1e-6`).
pub const CONVERGENCE_SCALE_FLOOR: f64 = 1e-2;
/// Agreement required between the two algebraic forms of the closed form.
pub const CLOSED_FORM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sld,
    Eigenbasis,
    ClosedForm,
    Tsld,
    FiniteDifference,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Sld => "sld",
            Method::Eigenbasis => "eigenbasis",
            Method::ClosedForm => "closed_form",
            Method::Tsld => "tsld",
            Method::FiniteDifference => "finite_difference",
        }
    }
}

/// Routes accepted by [`qfi`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QfiMethod {
    Sld,
    Eigenbasis,
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherResult {
    pub value: f64,
    pub method: Method,
    /// Truncation rank, `None` for the untruncated QFI.
    pub m: Option<usize>,
    pub degenerate_flag: bool,
    /// Spread of the last two Richardson extrapolants (finite differences only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<f64>,
}

impl FisherResult {
    fn exact(value: f64, method: Method, m: Option<usize>, degenerate_flag: bool) -> Self {
        Self {
            value,
            method,
            m,
            degenerate_flag,
            uncertainty: None,
        }
    }
}

/// SLD `J_theta` or truncated SLD `L_theta`.
#[derive(Debug, Clone)]
pub struct SldOperator {
    pub matrix: HermitianOperator,
    pub truncation: Option<usize>,
}

fn check_truncation(family: &UnitaryFamily, m: usize) -> Result<()> {
    if m == 0 || m > family.dim() {
        return Err(Error::InvalidTruncation { m, dim: family.dim() });
    }
    Ok(())
}

fn pair_floor(lambda: &[f64]) -> f64 {
    PAIR_FLOOR * lambda.first().copied().unwrap_or(0.0).abs()
}

fn cut_is_degenerate(family: &UnitaryFamily, m: usize) -> Result<bool> {
    Ok(family.truncate_pair(0.0, 0.0, m)?.degenerate_cut)
}

/// Embeds `K` (expressed in the first `k` eigenvectors of `rho_theta`) back into
/// the full space: `V_k K V_k^dagger`.
fn from_eigenbasis(family: &UnitaryFamily, theta: f64, k: usize, coeffs: &ComplexMatrix) -> HermitianOperator {
    let v = family.evolve(theta).spectrum().leading_vectors(k);
    HermitianOperator::from_hermitized(&(&v * coeffs * v.adjoint()))
}

/// Standard SLD `J = 2 sum_{ij} <i|d rho|j> / (lambda_i + lambda_j) |i><j|`
/// in the eigenbasis of `rho_theta`.
pub fn sld(family: &UnitaryFamily, theta: f64) -> SldOperator {
    let rho = family.evolve(theta);
    let lambda = rho.eigenvalues();
    let v = rho.spectrum().vectors();
    let drho = family.derivative(theta);
    let in_basis = v.adjoint() * drho * v;
    let floor = pair_floor(lambda);
    let d = family.dim();
    let coeffs = ComplexMatrix::from_fn(d, d, |i, j| {
        let s = lambda[i] + lambda[j];
        if s > floor {
            in_basis[(i, j)] * (2.0 / s)
        } else {
            c(0.0, 0.0)
        }
    });
    SldOperator {
        matrix: from_eigenbasis(family, theta, d, &coeffs),
        truncation: None,
    }
}

/// Truncated SLD `L = 2i sum_{i,j<=m} (lambda_i - lambda_j)/(lambda_i + lambda_j) G_ij |lambda_i(theta)><lambda_j(theta)|`.
pub fn tsld(family: &UnitaryFamily, theta: f64, m: usize) -> Result<SldOperator> {
    check_truncation(family, m)?;
    let lambda = family.probe().eigenvalues();
    let g = family.generator_in_eigenbasis();
    let floor = pair_floor(lambda);
    let coeffs = ComplexMatrix::from_fn(m, m, |i, j| {
        let s = lambda[i] + lambda[j];
        if s > floor {
            g[(i, j)] * c(0.0, 2.0 * (lambda[i] - lambda[j]) / s)
        } else {
            c(0.0, 0.0)
        }
    });
    Ok(SldOperator {
        matrix: from_eigenbasis(family, theta, m, &coeffs),
        truncation: Some(m),
    })
}

/// `Tr[A^2 rho]` for Hermitian `A`.
fn second_moment(a: &ComplexMatrix, rho: &ComplexMatrix) -> f64 {
    (a * a * rho).trace().re
}

/// Max-entry residual of `d tau - (L tau + tau L)/2`.
pub fn lyapunov_residual(op: &ComplexMatrix, state: &ComplexMatrix, derivative: &ComplexMatrix) -> f64 {
    let sym = (op * state + state * op).map(|z| z * 0.5);
    max_abs(&(derivative - sym))
}

/// Compresses `a` onto the span of the kept eigenvectors of `rho_theta`: `P a P`.
pub fn project_onto_kept(family: &UnitaryFamily, theta: f64, m: usize, a: &ComplexMatrix) -> Result<ComplexMatrix> {
    check_truncation(family, m)?;
    let v = family.evolve(theta).spectrum().leading_vectors(m);
    let p = &v * v.adjoint();
    Ok(&p * a * &p)
}

/// Central finite difference of `theta -> rho_theta^(m)` with the eigenvectors
/// carried along by `W(theta)`.
pub fn truncated_state_derivative_fd(family: &UnitaryFamily, theta: f64, m: usize, step: f64) -> Result<ComplexMatrix> {
    let plus = family.truncate_pair(theta + step, 0.0, m)?.exact_truncated;
    let minus = family.truncate_pair(theta - step, 0.0, m)?.exact_truncated;
    Ok(hermitize(&(plus.matrix() - minus.matrix()).map(|z| z / (2.0 * step))))
}

/// Eigenbasis expansion of the QFI with sums running over `0..k`.
fn eigenbasis_sum(lambda: &[f64], g: &ComplexMatrix, k: usize) -> (f64, f64) {
    let floor = pair_floor(lambda);
    let (mut linear, mut harmonic, mut simplified) = (0.0, 0.0, 0.0);
    for i in 0..k {
        for j in 0..k {
            let g2 = g[(i, j)].norm_sqr();
            linear += lambda[i] * g2;
            let s = lambda[i] + lambda[j];
            if s > floor {
                harmonic += lambda[i] * lambda[j] / s * g2;
                simplified += (lambda[i] - lambda[j]).powi(2) / s * g2;
            }
        }
    }
    (4.0 * linear - 8.0 * harmonic, 2.0 * simplified)
}

/// Untruncated QFI through the chosen route.
pub fn qfi(family: &UnitaryFamily, theta: f64, method: QfiMethod) -> Result<FisherResult> {
    match method {
        QfiMethod::Eigenbasis => {
            let lambda = family.probe().eigenvalues();
            let g = family.generator_in_eigenbasis();
            let (value, _) = eigenbasis_sum(lambda, &g, family.dim());
            Ok(FisherResult::exact(value, Method::Eigenbasis, None, false))
        }
        QfiMethod::Sld => {
            let j = sld(family, theta);
            let rho = family.evolve(theta);
            let value = second_moment(j.matrix.matrix(), rho.matrix());
            Ok(FisherResult::exact(value, Method::Sld, None, false))
        }
        QfiMethod::FiniteDifference => qfi_fd(family, theta, &DEFAULT_DELTAS),
    }
}

/// QFI as `8 lim (1 - F(rho_theta, rho_{theta+delta})) / delta^2`.
pub fn qfi_fd(family: &UnitaryFamily, theta: f64, deltas: &[f64]) -> Result<FisherResult> {
    let base = family.evolve(theta);
    let ex = richardson(deltas, |delta| {
        let f = fidelity::fidelity(&base, &family.evolve(theta + delta))?;
        Ok(8.0 * (1.0 - f) / (delta * delta))
    })?;
    Ok(FisherResult {
        value: ex.value,
        method: Method::FiniteDifference,
        m: None,
        degenerate_flag: false,
        uncertainty: ex.uncertainty,
    })
}

/// Closed-form TQFI for `m < rank`, evaluated in both algebraic forms, which
/// must agree to [`CLOSED_FORM_TOL`].
pub fn tqfi_closed(family: &UnitaryFamily, m: usize) -> Result<FisherResult> {
    check_truncation(family, m)?;
    let rank = family.rank();
    if m >= rank {
        return Err(Error::TruncationNotStrict { m, rank });
    }
    let lambda = family.probe().eigenvalues();
    let g = family.generator_in_eigenbasis();
    let (two_sum, simplified) = eigenbasis_sum(lambda, &g, m);
    if (two_sum - simplified).abs() > CLOSED_FORM_TOL * simplified.abs().max(1.0) {
        return Err(Error::RouteMismatch {
            first: two_sum,
            second: simplified,
        });
    }
    Ok(FisherResult::exact(
        simplified,
        Method::ClosedForm,
        Some(m),
        cut_is_degenerate(family, m)?,
    ))
}

/// `Tr[L^2 tau_theta]` with the truncated SLD.
pub fn tqfi_tsld(family: &UnitaryFamily, theta: f64, m: usize) -> Result<FisherResult> {
    let l = tsld(family, theta, m)?;
    let pair = family.truncate_pair(theta, 0.0, m)?;
    let value = second_moment(l.matrix.matrix(), pair.exact_truncated.matrix());
    Ok(FisherResult::exact(value, Method::Tsld, Some(m), pair.degenerate_cut))
}

/// TQFI from its definition: `8 lim (1 - F*(rho^(m)_theta, rho^(m)_{theta+delta})) / delta^2`.
pub fn tqfi_fd(family: &UnitaryFamily, theta: f64, m: usize, deltas: &[f64]) -> Result<FisherResult> {
    check_truncation(family, m)?;
    let reference = family.truncate_pair(theta, 0.0, m)?;
    check_delta_guard(1.0 - reference.kept_weight(), deltas)?;
    let ex = richardson(deltas, |delta| {
        let f = fidelity::generalized_fidelity_truncated(family, theta, delta, m)?;
        Ok(8.0 * (1.0 - f.value) / (delta * delta))
    })?;
    Ok(FisherResult {
        value: ex.value,
        method: Method::FiniteDifference,
        m: Some(m),
        degenerate_flag: reference.degenerate_cut,
        uncertainty: ex.uncertainty,
    })
}

/// Largest admissible shift for a given trace deficit, `None` when unrestricted.
pub fn max_admissible_delta(trace_deficit: f64) -> Option<f64> {
    if trace_deficit < TRACE_DEFICIT_FLOOR {
        None
    } else {
        Some((DELTA_GUARD * trace_deficit).sqrt())
    }
}

/// Rejects shifts with `delta^2 > DELTA_GUARD * (1 - Tr tau)` unless the deficit
/// is below the exact-zero floor.
pub fn check_delta_guard(trace_deficit: f64, deltas: &[f64]) -> Result<()> {
    if trace_deficit < TRACE_DEFICIT_FLOOR {
        return Ok(());
    }
    let bound = DELTA_GUARD * trace_deficit;
    if let Some(&delta) = deltas.iter().find(|&&d| d * d > bound) {
        return Err(Error::DeltaTooLarge { delta, bound });
    }
    Ok(())
}

/// TQFI of an arbitrary sub-normalized family given as a map
/// `delta -> (tau_theta, tau_{theta+delta})`, from the small-shift limit of `F*`.
pub fn fisher_limit_of_pairs<F>(deltas: &[f64], pairs: F) -> Result<FisherResult>
where
    F: Fn(f64) -> Result<(SubNormalizedState, SubNormalizedState)>,
{
    let (reference, _) = pairs(0.0)?;
    check_delta_guard(1.0 - reference.trace(), deltas)?;
    let ex = richardson(deltas, |delta| {
        let (tau, shifted) = pairs(delta)?;
        let f = fidelity::generalized_fidelity(&tau, &shifted)?;
        Ok(8.0 * (1.0 - f) / (delta * delta))
    })?;
    Ok(FisherResult {
        value: ex.value,
        method: Method::FiniteDifference,
        m: None,
        degenerate_flag: false,
        uncertainty: ex.uncertainty,
    })
}

/// TQFI with the closed form below the rank and the full QFI from the rank on.
pub fn tqfi(family: &UnitaryFamily, _theta: f64, m: usize) -> Result<FisherResult> {
    check_truncation(family, m)?;
    if m < family.rank() {
        return tqfi_closed(family, m);
    }
    let full = qfi(family, 0.0, QfiMethod::Eigenbasis)?;
    Ok(FisherResult::exact(
        full.value,
        Method::Eigenbasis,
        Some(m),
        cut_is_degenerate(family, m)?,
    ))
}

/// Outcome of a Richardson extrapolation.
#[derive(Debug, Clone, PartialEq)]
pub struct Extrapolation {
    pub value: f64,
    /// Size of the last correction, `|T[n][n] - T[n][n-1]|`, when there are two shifts.
    pub uncertainty: Option<f64>,
    /// `(delta, symmetrized quotient)` in descending `delta` order.
    pub samples: Vec<(f64, f64)>,
}

/// Symmetrizes `quotient` over `±delta` and runs the Richardson tableau in `delta^2`:
/// `T[k][j] = (h_{k-j}^2 T[k][j-1] - h_k^2 T[k-1][j-1]) / (h_{k-j}^2 - h_k^2)`.
/// The value is the last entry of the finest row. Fails with [`Error::NonConvergent`]
/// if it differs from its neighbor in that row by more than [`CONVERGENCE_REL`] relative.
pub fn richardson<F>(deltas: &[f64], quotient: F) -> Result<Extrapolation>
where
    F: Fn(f64) -> Result<f64>,
{
    let mut grid = deltas.to_vec();
    if grid.is_empty() {
        return Err(Error::InvalidDeltaGrid("no shifts given".into()));
    }
    if grid.iter().any(|d| !d.is_finite() || *d <= 0.0) {
        return Err(Error::InvalidDeltaGrid("shifts must be positive and finite".into()));
    }
    grid.sort_by(|a, b| b.total_cmp(a));
    if grid.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidDeltaGrid("shifts must be distinct".into()));
    }

    let samples = grid
        .iter()
        .map(|&h| Ok((h, 0.5 * (quotient(h)? + quotient(-h)?))))
        .collect::<Result<Vec<_>>>()?;

    let n = samples.len();
    let h2: Vec<f64> = samples.iter().map(|(h, _)| h * h).collect();
    let mut row: Vec<f64> = vec![samples[0].1];
    for k in 1..n {
        let mut next = vec![samples[k].1];
        for j in 1..=k {
            let (a, b) = (h2[k - j], h2[k]);
            next.push((a * next[j - 1] - b * row[j - 1]) / (a - b));
        }
        row = next;
    }

    let value = row[n - 1];
    let uncertainty = (n >= 2).then(|| (value - row[n - 2]).abs());
    if let Some(spread) = uncertainty {
        if spread.is_nan() || spread > CONVERGENCE_REL * value.abs().max(CONVERGENCE_SCALE_FLOOR) {
            return Err(Error::NonConvergent {
                previous: row[n - 2],
                last: value,
                spread,
            });
        }
    }
    Ok(Extrapolation {
        value,
        uncertainty,
        samples,
    })
}
