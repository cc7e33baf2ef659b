//! Identifiability of an experiment design.
//!
//! A design identifies a parameter when that parameter enters the measurement
//! expectation with a nonzero coefficient. Verdicts depend only on the angles;
//! parameter-dependent degeneracies of the y-drive model are reported as
//! warnings.

use crate::model::{coefficients, ExperimentDesign, ModelKind, SystemParams};

/// Trigonometric products at or below this magnitude count as zero.
pub const ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Identifiability {
    Full,
    GammaOnly,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reason {
    /// The prepared state does not evolve.
    StationaryState,
    /// The measured observable is conserved by the dynamics.
    ConservedMeasurement,
    /// Hamiltonian orthogonal to the dephasing axis and commuting with the
    /// state or measurement, hiding the frequency.
    OrthogonalHamiltonianCommuting,
    Ok,
}

impl Reason {
    pub fn code(self) -> &'static str {
        match self {
            Reason::StationaryState => "stationary-state",
            Reason::ConservedMeasurement => "conserved-measurement",
            Reason::OrthogonalHamiltonianCommuting => "orthogonal-H-commuting-M",
            Reason::Ok => "ok",
        }
    }
}

impl std::fmt::Display for Identifiability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Identifiability::Full => "full",
            Identifiability::GammaOnly => "gamma_only",
            Identifiability::None => "none",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignWarning {
    /// One of the two linear coefficients vanishes for the supplied parameters,
    /// so the expectation reduces to a single basis function.
    VanishingCoefficient { index: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentifiabilityVerdict {
    pub verdict: Identifiability,
    pub reason: Reason,
    pub warnings: Vec<DesignWarning>,
}

impl IdentifiabilityVerdict {
    fn new(verdict: Identifiability, reason: Reason) -> Self {
        Self { verdict, reason, warnings: Vec::new() }
    }
}

pub fn classify(design: &ExperimentDesign) -> IdentifiabilityVerdict {
    let (s_i, c_i) = design.theta_prep().sin_cos();
    let (s_m, c_m) = design.theta_meas().sin_cos();
    match design.model() {
        ModelKind::ZDrive => {
            if (s_i * s_m).abs() > ZERO_TOL {
                IdentifiabilityVerdict::new(Identifiability::Full, Reason::Ok)
            } else if s_i.abs() <= ZERO_TOL {
                IdentifiabilityVerdict::new(Identifiability::None, Reason::StationaryState)
            } else {
                IdentifiabilityVerdict::new(Identifiability::None, Reason::ConservedMeasurement)
            }
        }
        ModelKind::XDrive => {
            if (c_i * c_m).abs() > ZERO_TOL {
                IdentifiabilityVerdict::new(Identifiability::Full, Reason::Ok)
            } else if (s_i * s_m).abs() > ZERO_TOL {
                IdentifiabilityVerdict::new(Identifiability::GammaOnly, Reason::OrthogonalHamiltonianCommuting)
            } else {
                IdentifiabilityVerdict::new(Identifiability::None, Reason::OrthogonalHamiltonianCommuting)
            }
        }
        ModelKind::YDrive => IdentifiabilityVerdict::new(Identifiability::Full, Reason::Ok),
    }
}

/// [`classify`] plus the y-drive coefficient check at concrete parameters.
pub fn classify_with_params(design: &ExperimentDesign, params: SystemParams) -> IdentifiabilityVerdict {
    let mut v = classify(design);
    if design.model() == ModelKind::YDrive {
        let (a1, a2) = coefficients(design, params);
        for (index, a) in [a1, a2].into_iter().enumerate() {
            if a.abs() <= ZERO_TOL {
                v.warnings.push(DesignWarning::VanishingCoefficient { index });
            }
        }
    }
    v
}

/// Amplitude of the parameter-bearing term of the expectation.
pub fn visibility(design: &ExperimentDesign) -> f64 {
    let (s_i, c_i) = design.theta_prep().sin_cos();
    let (s_m, c_m) = design.theta_meas().sin_cos();
    match design.model() {
        ModelKind::ZDrive => (s_i * s_m).abs(),
        ModelKind::XDrive => (c_i * c_m).abs(),
        ModelKind::YDrive => (design.theta_prep() - design.theta_meas()).cos().abs(),
    }
}
