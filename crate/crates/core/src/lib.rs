//! Identification of the Hamiltonian frequency and dephasing rate of a
//! two-level system from sparse, noisy measurement records.
//!
//! - [`model`]: closed-form Bloch dynamics and measurement probabilities for
//!   the z-, x- and y-drive models.
//! - [`oracle`]: RK4 integration of the Bloch equation, used to check the
//!   closed forms.
//! - [`sim`]: simulated finite-repetition measurement records.
//! - [`estimators`]: periodogram, log-inversion least squares and profiled
//!   likelihood estimators.
//! - [`design`]: identifiability verdicts and visibility of experiment designs.

pub mod design;
pub mod error;
pub mod estimators;
pub mod model;
pub mod oracle;
pub mod sim;

pub use design::{classify, classify_with_params, visibility, Identifiability, IdentifiabilityVerdict, Reason};
pub use error::{EstimateError, ModelError, OracleError, SimError};
pub use model::{
    basis_functions, coefficients, effective_frequency, measurement_expectation, probability_trace, propagate,
    BlochVector, Branch, EffectiveFrequency, ExperimentDesign, ModelKind, SystemParams,
};
pub use sim::{gaussian_sigma, multi_trace, simulate_trace, NoiseModel, NoisyTrace, Repetitions, SamplingPlan};
