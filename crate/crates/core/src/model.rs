//! Closed-form dynamics of a dephasing qubit.
//!
//! The system is a single qubit with a constant Hamiltonian along one Pauli
//! axis and pure dephasing `V = sqrt(gamma/2) sigma_z`. In Bloch form the
//! transverse components decay at rate `gamma` while the Hamiltonian rotates
//! the vector around its axis. Preparation and measurement axes both lie in
//! the x-z plane at angles `theta_prep` and `theta_meas` from +z.
//!
//! For the x- and y-drive models the rotation mixes a damped and an undamped
//! component, which gives the effective frequency
//! `omega_hat = sqrt(omega^2 - gamma^2/4)`. When it becomes imaginary the
//! trigonometric terms turn hyperbolic, and at the critical point the
//! `sin(omega_hat t)/omega_hat` terms reduce to `t`.

use std::f64::consts::TAU;

use crate::error::ModelError;

/// Relative band around `omega^2 = gamma^2/4` that is routed to the critical formula.
pub const CRITICAL_BAND: f64 = 1e-12;

/// Which Pauli axis carries the Hamiltonian. Dephasing is always along z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// `H = omega sigma_z`, commuting with the dephasing operator (model A).
    ZDrive,
    /// `H = omega sigma_x`, orthogonal to the dephasing axis (model B).
    XDrive,
    /// `H = omega sigma_y`, orthogonal to both dephasing and the x-z plane (model C).
    YDrive,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::ZDrive, ModelKind::XDrive, ModelKind::YDrive];

    /// Short label used in files and reports (`A`, `B`, `C`).
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::ZDrive => "A",
            ModelKind::XDrive => "B",
            ModelKind::YDrive => "C",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" | "z" | "zdrive" => Ok(ModelKind::ZDrive),
            "b" | "x" | "xdrive" => Ok(ModelKind::XDrive),
            "c" | "y" | "ydrive" => Ok(ModelKind::YDrive),
            _ => Err(ModelError::UnknownModel(s.to_string())),
        }
    }
}

/// The unknowns: Hamiltonian angular frequency and dephasing rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    pub omega: f64,
    pub gamma: f64,
}

impl SystemParams {
    pub fn new(omega: f64, gamma: f64) -> Result<Self, ModelError> {
        if !omega.is_finite() || omega < 0.0 {
            return Err(ModelError::InvalidParameter { name: "omega", value: omega });
        }
        if !gamma.is_finite() || gamma < 0.0 {
            return Err(ModelError::InvalidParameter { name: "gamma", value: gamma });
        }
        Ok(Self { omega, gamma })
    }
}

/// Preparation angle, measurement angle and Hamiltonian model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentDesign {
    theta_prep: f64,
    theta_meas: f64,
    model: ModelKind,
}

impl ExperimentDesign {
    /// Angles are in radians and reduced to `[0, 2pi)`.
    pub fn new(model: ModelKind, theta_prep: f64, theta_meas: f64) -> Result<Self, ModelError> {
        if !theta_prep.is_finite() {
            return Err(ModelError::InvalidParameter { name: "theta_prep", value: theta_prep });
        }
        if !theta_meas.is_finite() {
            return Err(ModelError::InvalidParameter { name: "theta_meas", value: theta_meas });
        }
        Ok(Self {
            theta_prep: reduce_angle(theta_prep),
            theta_meas: reduce_angle(theta_meas),
            model,
        })
    }

    pub fn model(&self) -> ModelKind {
        self.model
    }

    pub fn theta_prep(&self) -> f64 {
        self.theta_prep
    }

    pub fn theta_meas(&self) -> f64 {
        self.theta_meas
    }

    /// Bloch vector of the prepared pure state.
    pub fn initial_state(&self) -> BlochVector {
        BlochVector::new(self.theta_prep.sin(), 0.0, self.theta_prep.cos())
    }

    /// Bloch axis of the `+1` measurement projector.
    pub fn measurement_axis(&self) -> BlochVector {
        BlochVector::new(self.theta_meas.sin(), 0.0, self.theta_meas.cos())
    }
}

fn reduce_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn dot(&self, other: &BlochVector) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn max_abs_diff(&self, other: &BlochVector) -> f64 {
        (self.x - other.x)
            .abs()
            .max((self.y - other.y).abs())
            .max((self.z - other.z).abs())
    }
}

impl From<[f64; 3]> for BlochVector {
    fn from(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Oscillatory,
    Critical,
    Hyperbolic,
}

/// `omega_hat = sqrt(|omega^2 - gamma^2/4|)` together with the sign of the discriminant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveFrequency {
    pub branch: Branch,
    pub magnitude: f64,
}

pub fn effective_frequency(params: SystemParams) -> EffectiveFrequency {
    let w2 = params.omega * params.omega;
    let h2 = 0.25 * params.gamma * params.gamma;
    let disc = w2 - h2;
    if disc.abs() <= CRITICAL_BAND * w2.max(h2) {
        EffectiveFrequency { branch: Branch::Critical, magnitude: 0.0 }
    } else if disc > 0.0 {
        EffectiveFrequency { branch: Branch::Oscillatory, magnitude: disc.sqrt() }
    } else {
        EffectiveFrequency { branch: Branch::Hyperbolic, magnitude: (-disc).sqrt() }
    }
}

/// Damped harmonic kernels shared by the x- and y-drive models.
///
/// With `h = gamma/2` these are `e^{-ht} cos(omega_hat t)`,
/// `e^{-ht} sin(omega_hat t)/omega_hat` and `e^{-ht} sin(omega_hat t)` with the
/// hyperbolic and critical continuations. The hyperbolic forms are written
/// with decaying exponentials so they stay finite for large `gamma t`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct DampedKernel {
    half_gamma: f64,
    freq: EffectiveFrequency,
}

impl DampedKernel {
    pub(crate) fn new(params: SystemParams) -> Self {
        Self { half_gamma: 0.5 * params.gamma, freq: effective_frequency(params) }
    }

    /// `e^{-ht} cos(omega_hat t)`.
    pub(crate) fn cos(&self, t: f64) -> f64 {
        let h = self.half_gamma;
        let k = self.freq.magnitude;
        match self.freq.branch {
            Branch::Oscillatory => (-h * t).exp() * (k * t).cos(),
            Branch::Critical => (-h * t).exp(),
            Branch::Hyperbolic => 0.5 * (((k - h) * t).exp() + (-(k + h) * t).exp()),
        }
    }

    /// `e^{-ht} sin(omega_hat t) / omega_hat`, continuous through the critical point.
    pub(crate) fn sinc(&self, t: f64) -> f64 {
        self.sin(t) / self.scale()
    }

    /// `e^{-ht} sin(omega_hat t)`; `e^{-ht} t` at the critical point.
    pub(crate) fn sin(&self, t: f64) -> f64 {
        let h = self.half_gamma;
        let k = self.freq.magnitude;
        match self.freq.branch {
            Branch::Oscillatory => (-h * t).exp() * (k * t).sin(),
            Branch::Critical => (-h * t).exp() * t,
            Branch::Hyperbolic => {
                if 2.0 * k * t < 1.0 {
                    0.5 * (-(k + h) * t).exp() * (2.0 * k * t).exp_m1()
                } else {
                    0.5 * (((k - h) * t).exp() - (-(k + h) * t).exp())
                }
            }
        }
    }

    /// Divisor turning `sin` into `sinc`: `omega_hat`, or 1 at the critical point.
    pub(crate) fn scale(&self) -> f64 {
        match self.freq.branch {
            Branch::Critical => 1.0,
            _ => self.freq.magnitude,
        }
    }
}

/// Closed-form Bloch vector at time `t` for the design's preparation.
pub fn propagate(design: &ExperimentDesign, params: SystemParams, t: f64) -> BlochVector {
    let (s_i, c_i) = design.theta_prep.sin_cos();
    let omega = params.omega;
    match design.model {
        ModelKind::ZDrive => {
            let env = (-params.gamma * t).exp() * s_i;
            let (s, c) = (omega * t).sin_cos();
            BlochVector::new(env * c, env * s, c_i)
        }
        ModelKind::XDrive => {
            let k = DampedKernel::new(params);
            let h = 0.5 * params.gamma;
            let phi2 = -omega * k.sinc(t);
            let phi3 = k.cos(t) + h * k.sinc(t);
            BlochVector::new((-params.gamma * t).exp() * s_i, phi2 * c_i, phi3 * c_i)
        }
        ModelKind::YDrive => {
            let k = DampedKernel::new(params);
            let h = 0.5 * params.gamma;
            let cos = k.cos(t);
            let sinc = k.sinc(t);
            let x = (cos - h * sinc) * s_i - omega * sinc * c_i;
            let z = (cos + h * sinc) * c_i + omega * sinc * s_i;
            BlochVector::new(x, 0.0, z)
        }
    }
}

/// Expectation of the two-outcome measurement, `p_plus - p_minus = 2 p_plus - 1`.
pub fn measurement_expectation(design: &ExperimentDesign, params: SystemParams, t: f64) -> f64 {
    design.measurement_axis().dot(&propagate(design, params, t))
}

/// Probability of the `+1` outcome at time `t`.
pub fn probability_trace(design: &ExperimentDesign, params: SystemParams, t: f64) -> f64 {
    (0.5 * (1.0 + measurement_expectation(design, params, t))).clamp(0.0, 1.0)
}

/// The two basis functions `(g1(t), g2(t))` whose linear combination gives
/// the measurement expectation for `model`.
pub fn basis_functions(model: ModelKind, params: SystemParams, t: f64) -> (f64, f64) {
    match model {
        ModelKind::ZDrive => (1.0, (-params.gamma * t).exp() * (params.omega * t).cos()),
        ModelKind::XDrive => {
            let k = DampedKernel::new(params);
            let g2 = k.cos(t) + 0.5 * params.gamma * k.sinc(t);
            ((-params.gamma * t).exp(), g2)
        }
        ModelKind::YDrive => {
            let k = DampedKernel::new(params);
            (k.cos(t), k.sin(t))
        }
    }
}

/// Linear coefficients `(alpha1, alpha2)` pairing with [`basis_functions`].
///
/// Only the y-drive model needs `params`; its second coefficient carries the
/// `1/omega_hat` factor (dropped at the critical point, where the basis
/// function absorbs it instead).
pub fn coefficients(design: &ExperimentDesign, params: SystemParams) -> (f64, f64) {
    let (s_i, c_i) = design.theta_prep.sin_cos();
    let (s_m, c_m) = design.theta_meas.sin_cos();
    match design.model {
        ModelKind::ZDrive => (c_i * c_m, s_i * s_m),
        ModelKind::XDrive => (s_i * s_m, c_i * c_m),
        ModelKind::YDrive => {
            let diff = design.theta_prep - design.theta_meas;
            let sum = design.theta_prep + design.theta_meas;
            let k = DampedKernel::new(params);
            let a2 = (0.5 * params.gamma * sum.cos() + params.omega * diff.sin()) / k.scale();
            (diff.cos(), a2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, PI};

    fn params(omega: f64, gamma: f64) -> SystemParams {
        SystemParams::new(omega, gamma).unwrap()
    }

    fn design(model: ModelKind, ti: f64, tm: f64) -> ExperimentDesign {
        ExperimentDesign::new(model, ti, tm).unwrap()
    }

    #[test]
    fn effective_frequency_branches() {
        let f = effective_frequency(params(1.0, 0.1));
        assert_eq!(f.branch, Branch::Oscillatory);
        assert_abs_diff_eq!(f.magnitude, 0.998749217771909, epsilon = 1e-12);

        for gamma in [0.2, 1.0, 7.3] {
            let f = effective_frequency(params(gamma / 2.0, gamma));
            assert_eq!(f.branch, Branch::Critical);
            assert_eq!(f.magnitude, 0.0);
        }

        let f = effective_frequency(params(0.1, 1.0));
        assert_eq!(f.branch, Branch::Hyperbolic);
        assert_abs_diff_eq!(f.magnitude, 0.4898979485566356, epsilon = 1e-12);
    }

    #[test]
    fn zero_parameters_are_critical() {
        assert_eq!(effective_frequency(params(0.0, 0.0)).branch, Branch::Critical);
    }

    #[test]
    fn rejects_invalid_inputs() {
        assert!(SystemParams::new(-1.0, 0.1).is_err());
        assert!(SystemParams::new(1.0, f64::NAN).is_err());
        assert!(ExperimentDesign::new(ModelKind::ZDrive, f64::INFINITY, 0.0).is_err());
        assert!("D".parse::<ModelKind>().is_err());
        assert_eq!("b".parse::<ModelKind>().unwrap(), ModelKind::XDrive);
    }

    #[test]
    fn angles_reduced() {
        let d = design(ModelKind::ZDrive, -FRAC_PI_2, 5.0 * PI);
        assert_abs_diff_eq!(d.theta_prep(), 1.5 * PI, epsilon = 1e-12);
        assert_abs_diff_eq!(d.theta_meas(), PI, epsilon = 1e-12);
        let d = design(ModelKind::ZDrive, -1e-300, 0.0);
        assert!(d.theta_prep() < TAU);
    }

    #[test]
    fn z_drive_examples() {
        let d = design(ModelKind::ZDrive, FRAC_PI_2, FRAC_PI_2);
        let v = propagate(&d, params(1.0, 0.1), 0.0);
        assert_abs_diff_eq!(v.x, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v.y, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v.z, 0.0, epsilon = 1e-15);

        let v = propagate(&d, params(1.0, 0.1), PI);
        assert_abs_diff_eq!(v.x, -0.7304026910486456, epsilon = 1e-12);
        assert_abs_diff_eq!(v.y, 0.0, epsilon = 1e-12);

        let stationary = design(ModelKind::ZDrive, 0.0, FRAC_PI_2);
        for t in [0.0, 0.3, 17.0] {
            let v = propagate(&stationary, params(2.0, 0.4), t);
            assert_eq!(v, BlochVector::new(0.0, 0.0, 1.0));
            assert_abs_diff_eq!(probability_trace(&stationary, params(2.0, 0.4), t), 0.5);
        }
        assert_abs_diff_eq!(probability_trace(&d, params(1.0, 0.1), 0.0), 1.0);
    }

    #[test]
    fn x_drive_equatorial_path() {
        let d = design(ModelKind::XDrive, FRAC_PI_2, 0.3);
        let v = propagate(&d, params(1.0, 0.1), 3.0);
        assert_abs_diff_eq!(v.x, 0.7408182206817179, epsilon = 1e-12);
        assert_abs_diff_eq!(v.y, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v.z, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn y_drive_initial_probability() {
        let d = design(ModelKind::YDrive, FRAC_PI_3, FRAC_PI_4);
        let p = probability_trace(&d, params(1.0, 0.1), 0.0);
        assert_abs_diff_eq!(p, 0.9829629131445341, epsilon = 1e-12);
    }

    #[test]
    fn basis_examples() {
        assert_eq!(basis_functions(ModelKind::ZDrive, params(3.0, 0.7), 0.0), (1.0, 1.0));
        assert_eq!(basis_functions(ModelKind::YDrive, params(1.0, 0.1), 0.0), (1.0, 0.0));
        let (g1, g2) = basis_functions(ModelKind::XDrive, params(1.0, 0.1), 2.0);
        assert_abs_diff_eq!(g1, (-0.2f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(g2, -0.33324898608050935, epsilon = 1e-12);
    }

    #[test]
    fn table_coefficients() {
        let p = params(1.0, 0.1);
        let (a1, a2) = coefficients(&design(ModelKind::ZDrive, FRAC_PI_3, FRAC_PI_4), p);
        assert_abs_diff_eq!(a1, 0.3536, epsilon = 5e-5);
        assert_abs_diff_eq!(a2, 0.6124, epsilon = 5e-5);
        let (a1, a2) = coefficients(&design(ModelKind::XDrive, FRAC_PI_3, FRAC_PI_4), p);
        assert_abs_diff_eq!(a1, 0.6124, epsilon = 5e-5);
        assert_abs_diff_eq!(a2, 0.3536, epsilon = 5e-5);
        let (a1, a2) = coefficients(&design(ModelKind::YDrive, FRAC_PI_3, FRAC_PI_4), p);
        assert_abs_diff_eq!(a1, 0.9659, epsilon = 5e-5);
        // direct evaluation; 0.2332 is sometimes quoted for this design but does not follow from these parameters
        assert_abs_diff_eq!(a2, 0.246186, epsilon = 5e-6);
        let (a1, _) = coefficients(&design(ModelKind::YDrive, 1.1, 1.1), p);
        assert_eq!(a1, 1.0);
    }

    #[test]
    fn hyperbolic_stays_finite_for_long_times() {
        let d = design(ModelKind::YDrive, 0.4, 1.2);
        let v = propagate(&d, params(0.5, 200.0), 50.0);
        assert!(v.x.is_finite() && v.z.is_finite());
        assert!(v.norm() <= 1.0);
    }

    #[test]
    fn critical_band_continuity() {
        let gamma = 0.8;
        for model in [ModelKind::XDrive, ModelKind::YDrive] {
            let d = design(model, 0.7, 2.1);
            for t in [0.5, 3.0, 12.0] {
                let crit = propagate(&d, params(gamma / 2.0, gamma), t);
                for eps in [-1e-6, 1e-6] {
                    let near = propagate(&d, params(gamma / 2.0 + eps, gamma), t);
                    assert!(crit.max_abs_diff(&near) < 1e-4);
                }
            }
        }
    }
}
