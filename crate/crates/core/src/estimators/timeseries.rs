//! Dephasing-rate estimation for the z-drive model by log inversion.
//!
//! With `a = cos(theta_prep) cos(theta_meas)` and
//! `b = sin(theta_prep) sin(theta_meas)` the expectation is
//! `a + b e^{-gamma t} cos(omega t)`, so
//! `z(t) = -ln[(pbar(t) - a) / (b cos(omega t))] = gamma t`. Samples where
//! `|cos(omega t)|` is small or the log argument is not positive are dropped.

use crate::error::EstimateError;
use crate::model::{ExperimentDesign, ModelKind, SystemParams};
use crate::sim::NoisyTrace;

pub const DEFAULT_MASK_TOL: f64 = 0.2;

/// Smallest `|sin(theta_prep) sin(theta_meas)|` treated as nonzero.
const VISIBILITY_EPS: f64 = 1e-12;

const PILOT_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZSample {
    pub t: f64,
    /// `None` when masked out.
    pub z: Option<f64>,
}

pub fn z_inversion(
    trace: &NoisyTrace,
    design: &ExperimentDesign,
    omega_z: f64,
    mask_tol: f64,
) -> Result<Vec<ZSample>, EstimateError> {
    if design.model() != ModelKind::ZDrive {
        return Err(EstimateError::WrongModel);
    }
    let (s_i, c_i) = design.theta_prep().sin_cos();
    let (s_m, c_m) = design.theta_meas().sin_cos();
    let b = s_i * s_m;
    if b.abs() <= VISIBILITY_EPS {
        return Err(EstimateError::InvisibleDesign);
    }
    let a = c_i * c_m;
    let samples: Vec<ZSample> = trace
        .times
        .iter()
        .zip(&trace.p_hat)
        .map(|(&t, &p)| {
            let c = (omega_z * t).cos();
            let z = if c.abs() > mask_tol {
                let arg = (2.0 * p - 1.0 - a) / (b * c);
                (arg > 0.0 && arg.is_finite()).then(|| -arg.ln())
            } else {
                None
            };
            ZSample { t, z }
        })
        .collect();
    if samples.iter().all(|s| s.z.is_none()) {
        return Err(EstimateError::NoValidSamples);
    }
    Ok(samples)
}

/// Time after which `e^{-gamma t}` falls below `floor`; `None` when `gamma = 0`.
pub fn truncation_time(params: SystemParams, floor: f64) -> Result<Option<f64>, EstimateError> {
    if !(floor > 0.0 && floor < 1.0) {
        return Err(EstimateError::BadFloor(floor));
    }
    if params.gamma == 0.0 {
        return Ok(None);
    }
    Ok(Some(-floor.ln() / params.gamma))
}

/// Which samples enter the regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation {
    /// Use every valid sample.
    None,
    /// Use samples with `t <= t_max`.
    At(f64),
    /// Fit the pooled mean of all traces, cut at the time where the fitted
    /// envelope drops below `floor`, refit, and repeat until the cut settles.
    /// The per-trace fits then use that cut.
    Pilot { floor: f64 },
}

/// Sequential stopping rule: stop once the last `window` running means lie in
/// a band of width `tol`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    window: usize,
    tol: f64,
}

impl StopRule {
    pub fn new(window: usize, tol: f64) -> Result<Self, EstimateError> {
        if window < 2 || !(tol > 0.0) {
            return Err(EstimateError::BadStopRule);
        }
        Ok(Self { window, tol })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }
}

/// Number of series consumed when the rule first fires, or `None`.
pub fn sequential_stop(running_means: &[f64], rule: &StopRule) -> Option<usize> {
    running_means.windows(rule.window).position(|w| {
        let lo = w.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        hi - lo <= rule.tol
    })
    .map(|i| i + rule.window)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsqOptions {
    pub mask_tol: f64,
    pub truncation: Truncation,
    pub stop: Option<StopRule>,
}

impl Default for LsqOptions {
    fn default() -> Self {
        Self { mask_tol: DEFAULT_MASK_TOL, truncation: Truncation::None, stop: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaEstimate {
    pub mean: f64,
    /// Sample standard deviation across series (0 for a single series).
    pub std: f64,
    /// Number of series that produced an estimate.
    pub n_series: usize,
    pub per_series: Vec<f64>,
    pub running_means: Vec<f64>,
    pub stopped_at: Option<usize>,
    pub t_max: Option<f64>,
    /// Traces skipped because the inversion failed.
    pub failed: usize,
}

fn regress_through_origin(samples: &[ZSample], t_max: Option<f64>) -> Result<f64, EstimateError> {
    let (mut zt, mut tt) = (0.0, 0.0);
    for s in samples {
        if let Some(z) = s.z {
            if t_max.is_none_or(|m| s.t <= m) {
                zt += z * s.t;
                tt += s.t * s.t;
            }
        }
    }
    if tt == 0.0 {
        return Err(EstimateError::NoValidSamples);
    }
    Ok(zt / tt)
}

fn pilot_cut(
    traces: &[NoisyTrace],
    design: &ExperimentDesign,
    omega_z: f64,
    mask_tol: f64,
    floor: f64,
) -> Result<Option<f64>, EstimateError> {
    let pooled = NoisyTrace::average(traces).ok_or(EstimateError::MismatchedGrids)?;
    let samples = z_inversion(&pooled, design, omega_z, mask_tol)?;
    let mut gamma = regress_through_origin(&samples, None)?;
    let mut cut: Option<f64> = None;
    for _ in 0..PILOT_MAX_ITER {
        if !(gamma > 0.0) {
            return Ok(None);
        }
        let next = -floor.ln() / gamma;
        // the cut only matters through the set of samples it admits
        let admitted = |c: Option<f64>| samples.iter().filter(|s| c.is_none_or(|c| s.t <= c)).count();
        if cut.is_some() && admitted(cut) == admitted(Some(next)) {
            return Ok(Some(next));
        }
        cut = Some(next);
        gamma = match regress_through_origin(&samples, cut) {
            Ok(g) => g,
            Err(_) => return Ok(cut),
        };
    }
    Ok(cut)
}

/// Per-trace regression of `z(t)` on `t` through the origin, averaged over traces.
pub fn gamma_least_squares(
    traces: &[NoisyTrace],
    design: &ExperimentDesign,
    omega_z: f64,
    opts: &LsqOptions,
) -> Result<GammaEstimate, EstimateError> {
    if traces.is_empty() {
        return Err(EstimateError::NoTraces);
    }
    let t_max = match opts.truncation {
        Truncation::None => None,
        Truncation::At(t) => Some(t),
        Truncation::Pilot { floor } => {
            if !(floor > 0.0 && floor < 1.0) {
                return Err(EstimateError::BadFloor(floor));
            }
            pilot_cut(traces, design, omega_z, opts.mask_tol, floor)?
        }
    };

    let mut per_series = Vec::with_capacity(traces.len());
    let mut last_err = None;
    for tr in traces {
        match z_inversion(tr, design, omega_z, opts.mask_tol).and_then(|s| regress_through_origin(&s, t_max)) {
            Ok(g) => per_series.push(g),
            Err(e) => last_err = Some(e),
        }
    }
    if per_series.is_empty() {
        return Err(EstimateError::AllTracesFailed(Box::new(last_err.unwrap_or(EstimateError::NoValidSamples))));
    }

    let n = per_series.len();
    let running_means: Vec<f64> = per_series
        .iter()
        .scan(0.0, |acc, g| {
            *acc += g;
            Some(*acc)
        })
        .enumerate()
        .map(|(i, s)| s / (i + 1) as f64)
        .collect();
    let mean = running_means[n - 1];
    let std = if n > 1 {
        (per_series.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let stopped_at = opts.stop.as_ref().and_then(|r| sequential_stop(&running_means, r));
    Ok(GammaEstimate {
        mean,
        std,
        n_series: n,
        per_series,
        running_means,
        stopped_at,
        t_max,
        failed: traces.len() - n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{linspace, Repetitions};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use std::f64::consts::{FRAC_PI_2, PI};

    fn z_design(ti: f64, tm: f64) -> ExperimentDesign {
        ExperimentDesign::new(ModelKind::ZDrive, ti, tm).unwrap()
    }

    #[test]
    fn exact_inversion_on_noiseless_data() {
        let d = z_design(FRAC_PI_2, FRAC_PI_2);
        let p = SystemParams::new(50.0, 50.0).unwrap();
        let tr = NoisyTrace::noiseless(&d, p, &linspace(0.0, 0.14, 100));
        let zs = z_inversion(&tr, &d, 50.0, DEFAULT_MASK_TOL).unwrap();
        let valid: Vec<_> = zs.iter().filter_map(|s| s.z.map(|z| (s.t, z))).collect();
        assert!(valid.len() > 20);
        for (t, z) in valid {
            assert_abs_diff_eq!(z, 50.0 * t, epsilon = 1e-8);
        }
    }

    #[test]
    fn zero_cosine_is_masked() {
        let d = z_design(FRAC_PI_2, FRAC_PI_2);
        let omega = 2.0;
        let t0 = PI / (2.0 * omega);
        let tr = NoisyTrace {
            times: vec![0.1, t0, 1.0],
            p_hat: vec![0.9, 0.5, 0.6],
            repetitions: Repetitions::Infinite,
            sigma: None,
        };
        let zs = z_inversion(&tr, &d, omega, 0.0).unwrap();
        assert_eq!(zs[1].z, None);
        assert!(zs.iter().all(|s| s.z.is_none_or(|z| z.is_finite())));
    }

    #[test]
    fn opposite_sign_is_masked() {
        let d = z_design(FRAC_PI_2, FRAC_PI_2);
        let p = SystemParams::new(1.0, 0.1).unwrap();
        let mut tr = NoisyTrace::noiseless(&d, p, &linspace(0.0, 3.0, 16));
        // cos(t) > 0 here, so an expectation below zero makes the argument negative
        let k = 3;
        assert!(tr.times[k].cos() > 0.2);
        tr.p_hat[k] = 0.5 - (tr.p_hat[k] - 0.5);
        let zs = z_inversion(&tr, &d, 1.0, DEFAULT_MASK_TOL).unwrap();
        assert_eq!(zs[k].z, None);
        assert!(zs[k - 1].z.is_some());
    }

    #[test]
    fn inversion_errors() {
        let tr = NoisyTrace { times: vec![0.1], p_hat: vec![0.5], repetitions: Repetitions::Infinite, sigma: None };
        let bad_model = ExperimentDesign::new(ModelKind::XDrive, 1.0, 1.0).unwrap();
        assert_eq!(z_inversion(&tr, &bad_model, 1.0, 0.2), Err(EstimateError::WrongModel));
        assert_eq!(z_inversion(&tr, &z_design(0.0, 1.0), 1.0, 0.2), Err(EstimateError::InvisibleDesign));
        assert_eq!(z_inversion(&tr, &z_design(1.0, 1.0), 1.0, 0.2), Err(EstimateError::NoValidSamples));
    }

    #[test]
    fn noiseless_fit_is_exact() {
        for (ti, tm, gamma) in [(FRAC_PI_2, FRAC_PI_2, 50.0), (1.0, 2.0, 0.01), (0.4, 0.9, 100.0)] {
            let d = z_design(ti, tm);
            let p = SystemParams::new(3.0, gamma).unwrap();
            let horizon = (5.0 / gamma).min(20.0);
            let tr = NoisyTrace::noiseless(&d, p, &linspace(0.0, horizon, 200));
            let est = gamma_least_squares(&[tr], &d, 3.0, &LsqOptions::default()).unwrap();
            assert_relative_eq!(est.mean, gamma, max_relative = 1e-10);
            assert_eq!(est.std, 0.0);
            assert_eq!(est.n_series, 1);
        }
    }

    #[test]
    fn failed_traces_are_skipped() {
        let d = z_design(FRAC_PI_2, FRAC_PI_2);
        let p = SystemParams::new(1.0, 0.2).unwrap();
        let good = NoisyTrace::noiseless(&d, p, &linspace(0.0, 5.0, 50));
        let bad = NoisyTrace { p_hat: vec![f64::NAN; 50], ..good.clone() };
        let est = gamma_least_squares(&[good, bad.clone()], &d, 1.0, &LsqOptions::default()).unwrap();
        assert_eq!(est.n_series, 1);
        assert_eq!(est.failed, 1);
        assert!(matches!(
            gamma_least_squares(&[bad], &d, 1.0, &LsqOptions::default()),
            Err(EstimateError::AllTracesFailed(_))
        ));
        assert_eq!(gamma_least_squares(&[], &d, 1.0, &LsqOptions::default()), Err(EstimateError::NoTraces));
    }

    #[test]
    fn pilot_cut_on_noiseless_data() {
        let d = z_design(FRAC_PI_2, FRAC_PI_2);
        let p = SystemParams::new(50.0, 50.0).unwrap();
        let tr = NoisyTrace::noiseless(&d, p, &linspace(0.0, 0.14, 400));
        let opts = LsqOptions { truncation: Truncation::Pilot { floor: 0.6 }, ..LsqOptions::default() };
        let est = gamma_least_squares(&[tr.clone(), tr], &d, 50.0, &opts).unwrap();
        assert_relative_eq!(est.mean, 50.0, max_relative = 1e-10);
        assert_relative_eq!(est.t_max.unwrap(), -(0.6f64).ln() / 50.0, max_relative = 1e-8);
    }

    #[test]
    fn truncation_examples() {
        let t = truncation_time(SystemParams::new(1.0, 50.0).unwrap(), 0.01).unwrap().unwrap();
        assert_relative_eq!(t, 100f64.ln() / 50.0, max_relative = 1e-14);
        let t = truncation_time(SystemParams::new(1.0, 0.1).unwrap(), (-1f64).exp()).unwrap().unwrap();
        assert_relative_eq!(t, 10.0, max_relative = 1e-14);
        assert_eq!(truncation_time(SystemParams::new(1.0, 0.0).unwrap(), 0.01), Ok(None));
        assert!(truncation_time(SystemParams::new(1.0, 1.0).unwrap(), 1.5).is_err());
    }

    #[test]
    fn stopping_rule() {
        let rule = StopRule::new(3, 1.0).unwrap();
        assert_eq!(sequential_stop(&[5.0; 10], &rule), Some(3));
        let diverging: Vec<f64> = (0..20).map(|i| (i * i) as f64).collect();
        assert_eq!(sequential_stop(&diverging, &rule), None);
        assert_eq!(sequential_stop(&[1.0, 5.0, 5.2, 5.9, 7.5], &rule), Some(4));
        assert_eq!(sequential_stop(&[1.0], &rule), None);
        assert!(StopRule::new(1, 1.0).is_err());
        assert!(StopRule::new(3, 0.0).is_err());
    }
}
