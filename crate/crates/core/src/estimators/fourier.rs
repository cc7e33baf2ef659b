//! Periodogram and peak analysis.
//!
//! A damped sinusoid `u(t) e^{-gamma t} sin(omega0 t)` has the transform
//! magnitude
//!
//! ```text
//! |F(w)| = omega0 / sqrt([gamma^2 + (omega0 - w)^2] [gamma^2 + (omega0 + w)^2])
//! ```
//!
//! which peaks at `w* = sqrt(omega0^2 - gamma^2)` with height `1/(2 gamma)`.
//! The upper half-maximum crossing sits at `w* + d` with
//! `d = sqrt(w*^2 + 2 sqrt(3) gamma sqrt(w*^2 + gamma^2)) - w*`, which can be
//! inverted for `gamma` given `w*` and `d`.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::EstimateError;
use crate::sim::NoisyTrace;

/// Relative tolerance on step-size variation for a grid to count as uniform.
const UNIFORM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Angular frequencies, uniformly spaced from 0.
    pub frequencies: Vec<f64>,
    pub magnitude: Vec<f64>,
    pub resolution: f64,
}

impl Spectrum {
    /// Samples a magnitude function on `n` points spanning `[start, end]`.
    pub fn from_fn(start: f64, end: f64, n: usize, f: impl Fn(f64) -> f64) -> Self {
        let frequencies = crate::sim::linspace(start, end, n);
        let magnitude = frequencies.iter().map(|&w| f(w)).collect();
        let resolution = if n > 1 { (end - start) / (n - 1) as f64 } else { 0.0 };
        Self { frequencies, magnitude, resolution }
    }

    pub fn argmax(&self) -> Option<usize> {
        self.magnitude
            .iter()
            .enumerate()
            .filter(|(_, m)| m.is_finite())
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
    }
}

/// Transform magnitude of a unit-amplitude damped sine switched on at `t = 0`.
pub fn damped_sine_spectrum(omega0: f64, gamma: f64, omega: f64) -> f64 {
    let lo = gamma * gamma + (omega0 - omega).powi(2);
    let hi = gamma * gamma + (omega0 + omega).powi(2);
    omega0 / (lo * hi).sqrt()
}

/// Returns the common step of a uniform grid.
pub fn uniform_step(times: &[f64]) -> Result<f64, EstimateError> {
    if times.len() < 2 {
        return Err(EstimateError::TooFewSamples { needed: 2, got: times.len() });
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    for (i, w) in times.windows(2).enumerate() {
        if ((w[1] - w[0]) - dt).abs() > UNIFORM_TOL * dt {
            return Err(EstimateError::NonUniformGrid { index: i });
        }
    }
    Ok(dt)
}

/// Magnitude spectrum of the mean-subtracted trace on the non-negative
/// frequencies. The DFT is scaled by the sample step so the magnitudes
/// approximate the continuous transform.
pub fn periodogram(trace: &NoisyTrace, zero_pad_factor: usize) -> Result<Spectrum, EstimateError> {
    let n = trace.len();
    if n < 4 {
        return Err(EstimateError::TooFewSamples { needed: 4, got: n });
    }
    if zero_pad_factor == 0 {
        return Err(EstimateError::BadPadding);
    }
    let dt = uniform_step(&trace.times)?;
    let mean = trace.p_hat.iter().sum::<f64>() / n as f64;
    let len = n * zero_pad_factor;
    let mut buf: Vec<Complex<f64>> = trace
        .p_hat
        .iter()
        .map(|p| Complex::new(p - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(len)
        .collect();
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);

    let resolution = std::f64::consts::TAU / (len as f64 * dt);
    let half = len / 2 + 1;
    Ok(Spectrum {
        frequencies: (0..half).map(|j| j as f64 * resolution).collect(),
        magnitude: buf[..half].iter().map(|c| c.norm() * dt).collect(),
        resolution,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourierEstimate {
    pub omega_star: f64,
    pub peak_height: f64,
    /// Distance from the peak to the upper half-maximum crossing.
    pub halfwidth: Option<f64>,
    /// `1/(2 height)`; only meaningful for a unit-amplitude continuous transform.
    pub gamma_from_height: f64,
    pub gamma_from_width: Option<f64>,
    /// `sqrt(omega_star^2 + gamma^2)` using the width estimate when available.
    pub omega0: f64,
}

impl FourierEstimate {
    pub fn gamma(&self) -> f64 {
        self.gamma_from_width.unwrap_or(self.gamma_from_height)
    }
}

/// Inverts the half-width relation for the dephasing rate.
pub fn gamma_from_halfwidth(omega_star: f64, d: f64) -> f64 {
    let w2 = omega_star * omega_star;
    let g = (9.0 * w2 * w2 + 12.0 * d * d * w2 + 12.0 * d.powi(3) * omega_star + 3.0 * d.powi(4)).sqrt();
    (6.0 * g - 18.0 * w2).max(0.0).sqrt() / 6.0
}

pub fn fourier_estimate(spec: &Spectrum) -> Result<FourierEstimate, EstimateError> {
    let j = spec.argmax().ok_or(EstimateError::NoInteriorPeak)?;
    if j == 0 || j + 1 >= spec.magnitude.len() {
        return Err(EstimateError::NoInteriorPeak);
    }
    let (m0, m1, m2) = (spec.magnitude[j - 1], spec.magnitude[j], spec.magnitude[j + 1]);
    let step = spec.frequencies[j + 1] - spec.frequencies[j];

    // parabola through the log magnitudes; linear magnitudes if any bin is zero
    let (y0, y1, y2, log) = if m0 > 0.0 && m2 > 0.0 {
        (m0.ln(), m1.ln(), m2.ln(), true)
    } else {
        (m0, m1, m2, false)
    };
    let denom = y0 - 2.0 * y1 + y2;
    let delta = if denom < 0.0 { (0.5 * (y0 - y2) / denom).clamp(-0.5, 0.5) } else { 0.0 };
    let vertex = y1 - 0.25 * (y0 - y2) * delta;
    let omega_star = spec.frequencies[j] + delta * step;
    let peak_height = if log { vertex.exp() } else { vertex };

    let half = 0.5 * peak_height;
    let upper = (j + 1..spec.magnitude.len()).find(|&k| spec.magnitude[k] < half).map(|k| {
        let (w_a, w_b) = (spec.frequencies[k - 1], spec.frequencies[k]);
        let (a, b) = (spec.magnitude[k - 1], spec.magnitude[k]);
        w_a + (a - half) / (a - b) * (w_b - w_a)
    });
    let halfwidth = upper.map(|w2| (w2 - omega_star).max(0.0));
    let gamma_from_width = halfwidth.map(|d| gamma_from_halfwidth(omega_star, d));
    let gamma_from_height = 0.5 / peak_height;
    let gamma = gamma_from_width.unwrap_or(gamma_from_height);
    Ok(FourierEstimate {
        omega_star,
        peak_height,
        halfwidth,
        gamma_from_height,
        gamma_from_width,
        omega0: (omega_star * omega_star + gamma * gamma).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ExperimentDesign, ModelKind, SystemParams};
    use crate::sim::{linspace, Repetitions};
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn trace_from(times: Vec<f64>, f: impl Fn(f64) -> f64) -> NoisyTrace {
        let p_hat = times.iter().map(|&t| f(t)).collect();
        NoisyTrace { times, p_hat, repetitions: Repetitions::Infinite, sigma: None }
    }

    #[test]
    fn constant_signal_is_flat() {
        let tr = trace_from(linspace(0.0, 10.0, 64), |_| 0.37);
        let s = periodogram(&tr, 2).unwrap();
        assert!(s.magnitude.iter().all(|&m| m < 1e-14));
    }

    #[test]
    fn rejects_bad_grids() {
        let tr = trace_from(vec![0.0, 1.0, 2.0], |_| 0.5);
        assert_eq!(periodogram(&tr, 1), Err(EstimateError::TooFewSamples { needed: 4, got: 3 }));
        let tr = trace_from(vec![0.0, 1.0, 2.0, 3.5, 4.0], |_| 0.5);
        assert!(matches!(periodogram(&tr, 1), Err(EstimateError::NonUniformGrid { .. })));
        let tr = trace_from(linspace(0.0, 1.0, 8), |_| 0.5);
        assert_eq!(periodogram(&tr, 0), Err(EstimateError::BadPadding));
    }

    #[test]
    fn noiseless_z_drive_peak() {
        let design = ExperimentDesign::new(ModelKind::ZDrive, FRAC_PI_2, FRAC_PI_2).unwrap();
        let params = SystemParams::new(1.0, 0.1).unwrap();
        let times: Vec<f64> = (0..4000).map(|k| k as f64 * 0.05).collect();
        let tr = NoisyTrace::noiseless(&design, params, &times);
        let s = periodogram(&tr, 1).unwrap();
        let j = s.argmax().unwrap();
        assert!((s.frequencies[j] - 1.0).abs() <= s.resolution, "peak at {}", s.frequencies[j]);
    }

    #[test]
    fn frequency_axis_is_angular() {
        let tr = trace_from(linspace(0.0, 9.9, 100), |t| (3.0 * t).cos());
        let s = periodogram(&tr, 1).unwrap();
        assert_relative_eq!(s.resolution, std::f64::consts::TAU / 10.0, max_relative = 1e-12);
        assert_eq!(s.frequencies.len(), 51);
    }

    #[test]
    fn analytic_peak_for_strong_damping() {
        let s = Spectrum::from_fn(0.0, 3.0, 30001, |w| damped_sine_spectrum(1.0, 0.3, w));
        let e = fourier_estimate(&s).unwrap();
        assert_relative_eq!(e.omega_star, 0.91f64.sqrt(), max_relative = 1e-5);
        assert_relative_eq!(e.peak_height, 1.0 / 0.6, max_relative = 1e-5);
        assert_relative_eq!(e.gamma_from_width.unwrap(), 0.3, max_relative = 1e-3);
    }

    #[test]
    fn halfwidth_inversion_is_exact() {
        for (w0, g) in [(1.0f64, 0.05f64), (1.0, 0.3), (2.0, 0.7)] {
            let ws = (w0 * w0 - g * g).sqrt();
            let d = (ws * ws + 2.0 * 3f64.sqrt() * g * w0).sqrt() - ws;
            assert_relative_eq!(gamma_from_halfwidth(ws, d), g, max_relative = 1e-10);
        }
    }

    #[test]
    fn narrow_peak_reports_small_height_gamma() {
        let g = 1e-3;
        let s = Spectrum::from_fn(0.9, 1.1, 200_001, |w| damped_sine_spectrum(1.0, g, w));
        let e = fourier_estimate(&s).unwrap();
        assert!(e.gamma_from_height < 2e-3);
    }

    #[test]
    fn peak_at_edge_is_rejected() {
        let s = Spectrum::from_fn(0.0, 1.0, 11, |w| w);
        assert_eq!(fourier_estimate(&s), Err(EstimateError::NoInteriorPeak));
    }

    #[test]
    fn missing_crossing_leaves_width_empty() {
        let s = Spectrum::from_fn(0.9, 1.02, 121, |w| damped_sine_spectrum(1.0, 0.3, w));
        let e = fourier_estimate(&s).unwrap();
        assert!(e.halfwidth.is_none());
        assert_eq!(e.gamma(), e.gamma_from_height);
    }
}
