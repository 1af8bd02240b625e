//! Completely positive maps in Kraus form, trace preserving or trace non-increasing.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, eigh, hermitize, max_abs_diff, ComplexMatrix, HermitianOperator};
use crate::states::{complex_gaussian, random_unitary_with, seeded_rng, SubNormalizedState};

/// Tolerance on `sum K^dagger K = I` and on `sum K^dagger K <= I`.
pub const KRAUS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceClass {
    Preserving,
    NonIncreasing,
}

#[derive(Debug, Clone)]
pub struct KrausChannel {
    kraus_operators: Vec<ComplexMatrix>,
    trace_class: TraceClass,
}

impl KrausChannel {
    pub fn new(kraus_operators: Vec<ComplexMatrix>, trace_class: TraceClass) -> Result<Self> {
        let first = kraus_operators
            .first()
            .ok_or_else(|| Error::InvalidInstance("channel needs at least one Kraus operator".into()))?;
        let (rows, cols) = first.shape();
        for k in &kraus_operators {
            if k.ncols() != cols {
                return Err(Error::DimensionMismatch {
                    left: cols,
                    right: k.ncols(),
                });
            }
            if k.nrows() != rows {
                return Err(Error::DimensionMismatch {
                    left: rows,
                    right: k.nrows(),
                });
            }
            if k.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::NonFinite);
            }
        }
        let channel = Self {
            kraus_operators,
            trace_class,
        };
        let gram = channel.completeness();
        let identity = ComplexMatrix::identity(cols, cols);
        match trace_class {
            TraceClass::Preserving => {
                let residual = max_abs_diff(&gram, &identity);
                if residual > KRAUS_TOL {
                    return Err(Error::KrausCondition {
                        class: "trace-preserving",
                        residual,
                    });
                }
            }
            TraceClass::NonIncreasing => {
                let slack = eigh(&hermitize(&(identity - gram)))?;
                let min = slack.values().last().copied().unwrap_or(0.0);
                if min < -KRAUS_TOL {
                    return Err(Error::KrausCondition {
                        class: "trace-non-increasing",
                        residual: -min,
                    });
                }
            }
        }
        Ok(channel)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            kraus_operators: vec![ComplexMatrix::identity(dim, dim)],
            trace_class: TraceClass::Preserving,
        }
    }

    pub fn kraus_operators(&self) -> &[ComplexMatrix] {
        &self.kraus_operators
    }

    pub fn trace_class(&self) -> TraceClass {
        self.trace_class
    }

    pub fn input_dim(&self) -> usize {
        self.kraus_operators[0].ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.kraus_operators[0].nrows()
    }

    /// `sum_i K_i^dagger K_i`.
    pub fn completeness(&self) -> ComplexMatrix {
        let d = self.input_dim();
        self.kraus_operators
            .iter()
            .fold(ComplexMatrix::zeros(d, d), |acc, k| acc + k.adjoint() * k)
    }

    /// `sum_i K_i tau K_i^dagger`.
    pub fn apply(&self, state: &SubNormalizedState) -> Result<SubNormalizedState> {
        if state.dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                left: self.input_dim(),
                right: state.dim(),
            });
        }
        let d = self.output_dim();
        let out = self.kraus_operators.iter().fold(ComplexMatrix::zeros(d, d), |acc, k| {
            acc + k * state.matrix() * k.adjoint()
        });
        Ok(SubNormalizedState::trusted(HermitianOperator::from_hermitized(&out)))
    }

    /// `then ∘ self`: Kraus operators `B_j A_i`.
    pub fn then(&self, then: &KrausChannel) -> Result<KrausChannel> {
        if then.input_dim() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                left: self.output_dim(),
                right: then.input_dim(),
            });
        }
        let kraus_operators = then
            .kraus_operators
            .iter()
            .flat_map(|b| self.kraus_operators.iter().map(move |a| b * a))
            .collect();
        let trace_class = if self.trace_class == TraceClass::Preserving && then.trace_class == TraceClass::Preserving {
            TraceClass::Preserving
        } else {
            TraceClass::NonIncreasing
        };
        Ok(Self {
            kraus_operators,
            trace_class,
        })
    }
}

/// `rho -> Pi rho Pi` for an orthogonal projector `Pi`.
pub fn projector_channel(pi: &HermitianOperator) -> Result<KrausChannel> {
    let p = pi.matrix();
    let residual = max_abs_diff(&(p * p), p);
    if residual > KRAUS_TOL {
        return Err(Error::NotAProjector { residual });
    }
    let d = pi.dim();
    let trace_class = if max_abs_diff(p, &ComplexMatrix::identity(d, d)) <= KRAUS_TOL {
        TraceClass::Preserving
    } else {
        TraceClass::NonIncreasing
    };
    Ok(KrausChannel {
        kraus_operators: vec![p.clone()],
        trace_class,
    })
}

/// Trace-preserving channel on `C^d` from a Haar-like isometry `C^d -> C^d ⊗ C^k`:
/// the `d x d` row blocks of the orthonormalized columns are the Kraus operators.
pub fn random_cptp_with<R: Rng + ?Sized>(rng: &mut R, d: usize, kraus_count: usize) -> Result<KrausChannel> {
    if d == 0 || kraus_count == 0 {
        return Err(Error::InvalidInstance(
            "channel dimension and Kraus count must be positive".into(),
        ));
    }
    let a = complex_gaussian(rng, d * kraus_count, d);
    let isometry = a.qr().q();
    let kraus = (0..kraus_count).map(|i| isometry.rows(i * d, d).into_owned()).collect();
    KrausChannel::new(kraus, TraceClass::Preserving)
}

/// Trace-preserving channel followed by either a random projector or a scalar
/// contraction `c` drawn from `(0, 1]`, with equal probability.
pub fn random_cptni_with<R: Rng + ?Sized>(rng: &mut R, d: usize, kraus_count: usize) -> Result<KrausChannel> {
    let cptp = random_cptp_with(rng, d, kraus_count)?;
    let loss = if rng.random_bool(0.5) {
        let rank = rng.random_range(1..=d);
        let basis = random_unitary_with(rng, d).columns(0, rank).into_owned();
        projector_channel(&HermitianOperator::from_hermitized(&(&basis * basis.adjoint())))?
    } else {
        let factor: f64 = 1.0 - rng.random::<f64>();
        KrausChannel {
            kraus_operators: vec![ComplexMatrix::identity(d, d).map(|z| z * factor)],
            trace_class: TraceClass::NonIncreasing,
        }
    };
    let composed = cptp.then(&loss)?;
    KrausChannel::new(composed.kraus_operators, TraceClass::NonIncreasing)
}

fn default_kraus_count<R: Rng + ?Sized>(rng: &mut R) -> usize {
    rng.random_range(2..=4)
}

/// Random trace-preserving channel with 2 to 4 Kraus operators.
pub fn random_cptp(d: usize, seed: u64) -> Result<KrausChannel> {
    let mut rng = seeded_rng(seed);
    let k = default_kraus_count(&mut rng);
    random_cptp_with(&mut rng, d, k)
}

/// Random trace-non-increasing channel with 2 to 4 Kraus operators before the loss stage.
pub fn random_cptni(d: usize, seed: u64) -> Result<KrausChannel> {
    let mut rng = seeded_rng(seed);
    let k = default_kraus_count(&mut rng);
    random_cptni_with(&mut rng, d, k)
}

/// Scalar contraction `K = factor * U` of a unitary.
pub fn contraction(unitary: &ComplexMatrix, factor: f64) -> Result<KrausChannel> {
    KrausChannel::new(vec![unitary.map(|z| z * c(factor, 0.0))], TraceClass::NonIncreasing)
}
