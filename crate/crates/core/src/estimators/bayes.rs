//! Likelihood estimation over `(omega, gamma)` with the linear coefficients
//! profiled out.
//!
//! For a candidate `(omega, gamma)` the data `dbar = 2 p_hat - 1` are fitted by
//! least squares to the model's two basis functions. With Gaussian errors of
//! scale `sigma` the log-likelihood is `-N ln(sigma) - R / (2 sigma^2)`, `R`
//! the residual sum of squares. Profiling `sigma^2 = R/N` leaves
//! `-(N/2) ln(R/N)` up to a constant.

use rayon::prelude::*;

use crate::error::EstimateError;
use crate::model::{basis_functions, ModelKind, SystemParams};
use crate::sim::NoisyTrace;

/// Residual variance floor, keeps the profiled log-likelihood finite on exact data.
const MIN_VARIANCE: f64 = 1e-300;

/// Second column counts as dependent on the first below this relative norm.
const RANK_TOL: f64 = 1e-10;

const GOLDEN_ITERS: usize = 80;
const REFINE_PASSES: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseScale {
    /// `sigma^2 = R/N`.
    Profiled,
    /// Known standard deviation of the expectation data `2 p_hat - 1`.
    Known(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodPoint {
    pub omega: f64,
    pub gamma: f64,
    pub loglik: f64,
    pub alpha: [f64; 2],
    pub uncertainty: [f64; 2],
    pub residual: f64,
}

/// Two-column least squares via Gram-Schmidt with one reorthogonalisation.
struct TwoColumnFit {
    alpha: [f64; 2],
    /// Diagonal of `(G^T G)^{-1}`.
    inv_gram_diag: [f64; 2],
    residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn fit_two_columns(g1: &[f64], g2: &[f64], d: &[f64]) -> Option<TwoColumnFit> {
    let r11 = dot(g1, g1).sqrt();
    let norm2 = dot(g2, g2).sqrt();
    if !(r11 > 0.0) || !(norm2 > 0.0) {
        return None;
    }
    let q1: Vec<f64> = g1.iter().map(|x| x / r11).collect();
    let mut r12 = dot(&q1, g2);
    let mut w: Vec<f64> = g2.iter().zip(&q1).map(|(g, q)| g - r12 * q).collect();
    let c = dot(&q1, &w);
    r12 += c;
    w.iter_mut().zip(&q1).for_each(|(wi, q)| *wi -= c * q);
    let r22 = dot(&w, &w).sqrt();
    if !(r22 > RANK_TOL * norm2) {
        return None;
    }
    let q2: Vec<f64> = w.iter().map(|x| x / r22).collect();
    let b2 = dot(&q2, d) / r22;
    let b1 = (dot(&q1, d) - r12 * b2) / r11;
    let residual = d
        .iter()
        .zip(g1.iter().zip(g2))
        .map(|(di, (x, y))| (di - b1 * x - b2 * y).powi(2))
        .sum();
    let inv11 = 1.0 / (r11 * r11) + (r12 * r12) / (r11 * r11 * r22 * r22);
    let inv22 = 1.0 / (r22 * r22);
    Some(TwoColumnFit { alpha: [b1, b2], inv_gram_diag: [inv11, inv22], residual })
}

/// Profiled log-likelihood at one candidate.
pub fn bayes_loglik(
    trace: &NoisyTrace,
    model: ModelKind,
    omega: f64,
    gamma: f64,
) -> Result<LikelihoodPoint, EstimateError> {
    bayes_loglik_with(trace, model, omega, gamma, NoiseScale::Profiled)
}

pub fn bayes_loglik_with(
    trace: &NoisyTrace,
    model: ModelKind,
    omega: f64,
    gamma: f64,
    noise: NoiseScale,
) -> Result<LikelihoodPoint, EstimateError> {
    let n = trace.len();
    if n < 3 {
        return Err(EstimateError::TooFewSamples { needed: 3, got: n });
    }
    let params = SystemParams::new(omega, gamma).map_err(|_| EstimateError::BadCandidate { omega, gamma })?;
    let (g1, g2): (Vec<f64>, Vec<f64>) = trace.times.iter().map(|&t| basis_functions(model, params, t)).unzip();
    let d = trace.expectation();
    let fit = fit_two_columns(&g1, &g2, &d).ok_or(EstimateError::RankDeficient { omega, gamma })?;

    let nf = n as f64;
    let (loglik, sigma) = match noise {
        NoiseScale::Profiled => {
            let var = (fit.residual / nf).max(MIN_VARIANCE);
            (-0.5 * nf * var.ln(), var.sqrt())
        }
        NoiseScale::Known(s) => (-nf * s.ln() - fit.residual / (2.0 * s * s), s),
    };
    Ok(LikelihoodPoint {
        omega,
        gamma,
        loglik,
        alpha: fit.alpha,
        uncertainty: [sigma * fit.inv_gram_diag[0].sqrt(), sigma * fit.inv_gram_diag[1].sqrt()],
        residual: fit.residual,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodSurface {
    pub omega_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    /// Row-major: `loglik[i * gamma_grid.len() + j]` is at `(omega_grid[i], gamma_grid[j])`.
    pub loglik: Vec<f64>,
    pub grid_argmax: (usize, usize),
    /// Grid maximum, or the refined optimum when refinement was requested.
    pub best: LikelihoodPoint,
    pub refined: bool,
}

impl LikelihoodSurface {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.loglik[i * self.gamma_grid.len() + j]
    }

    /// Extent of the region around the grid maximum where the likelihood stays
    /// above half its peak (log-likelihood within `ln 2`), along each axis.
    pub fn half_max_extent(&self) -> (f64, f64) {
        let (i0, j0) = self.grid_argmax;
        let level = self.at(i0, j0) - std::f64::consts::LN_2;
        let span = |grid: &[f64], idx: usize, value: &dyn Fn(usize) -> f64| {
            let mut lo = idx;
            while lo > 0 && value(lo - 1) >= level {
                lo -= 1;
            }
            let mut hi = idx;
            while hi + 1 < grid.len() && value(hi + 1) >= level {
                hi += 1;
            }
            grid[hi] - grid[lo]
        };
        let w_omega = span(&self.omega_grid, i0, &|i| self.at(i, j0));
        let w_gamma = span(&self.gamma_grid, j0, &|j| self.at(i0, j));
        (w_omega, w_gamma)
    }

    /// Writes `omega,gamma,loglik` rows.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "omega,gamma,loglik")?;
        for (i, om) in self.omega_grid.iter().enumerate() {
            for (j, ga) in self.gamma_grid.iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{}",
                    crate::sim::fmt_sig17(*om),
                    crate::sim::fmt_sig17(*ga),
                    crate::sim::fmt_sig17(self.at(i, j))
                )?;
            }
        }
        Ok(())
    }
}

fn golden_max(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..GOLDEN_ITERS {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
        if hi - lo <= 1e-15 * (1.0 + lo.abs()) {
            break;
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

fn neighbours(grid: &[f64], idx: usize) -> (f64, f64) {
    let lo = if idx > 0 { grid[idx - 1] } else { grid[idx] };
    let hi = if idx + 1 < grid.len() { grid[idx + 1] } else { grid[idx] };
    (lo, hi)
}

/// Evaluates the likelihood over the grid product. Points where the fit fails
/// are recorded as `-inf`. With `refine`, alternating golden-section searches
/// over each axis polish the grid maximum within its neighbouring cells.
pub fn bayes_surface(
    trace: &NoisyTrace,
    model: ModelKind,
    omega_grid: &[f64],
    gamma_grid: &[f64],
    refine: bool,
) -> Result<LikelihoodSurface, EstimateError> {
    if omega_grid.is_empty() || gamma_grid.is_empty() {
        return Err(EstimateError::EmptyGrid);
    }
    if trace.len() < 3 {
        return Err(EstimateError::TooFewSamples { needed: 3, got: trace.len() });
    }
    let ng = gamma_grid.len();
    let loglik: Vec<f64> = (0..omega_grid.len() * ng)
        .into_par_iter()
        .map(|k| {
            bayes_loglik(trace, model, omega_grid[k / ng], gamma_grid[k % ng])
                .map(|p| p.loglik)
                .unwrap_or(f64::NEG_INFINITY)
        })
        .collect();
    let k_best = loglik
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .unwrap_or(0);
    let (i0, j0) = (k_best / ng, k_best % ng);
    let grid_best = bayes_loglik(trace, model, omega_grid[i0], gamma_grid[j0]);

    let mut best = match grid_best {
        Ok(p) => p,
        Err(_) => LikelihoodPoint {
            omega: omega_grid[i0],
            gamma: gamma_grid[j0],
            loglik: f64::NEG_INFINITY,
            alpha: [f64::NAN; 2],
            uncertainty: [f64::NAN; 2],
            residual: f64::NAN,
        },
    };

    if refine && best.loglik.is_finite() {
        let eval = |w: f64, g: f64| bayes_loglik(trace, model, w, g).map(|p| p.loglik).unwrap_or(f64::NEG_INFINITY);
        let (w_lo, w_hi) = neighbours(omega_grid, i0);
        let (g_lo, g_hi) = neighbours(gamma_grid, j0);
        let (mut w, mut g, mut f) = (best.omega, best.gamma, best.loglik);
        for _ in 0..REFINE_PASSES {
            let (w_new, fw) = golden_max(w_lo, w_hi, |x| eval(x, g));
            if fw > f {
                w = w_new;
                f = fw;
            }
            let (g_new, fg) = golden_max(g_lo, g_hi, |y| eval(w, y));
            let gain = fg - f;
            if fg > f {
                g = g_new;
                f = fg;
            }
            if gain <= 1e-13 * f.abs().max(1.0) {
                break;
            }
        }
        if let Ok(p) = bayes_loglik(trace, model, w, g) {
            if p.loglik >= best.loglik {
                best = p;
            }
        }
    }

    Ok(LikelihoodSurface {
        omega_grid: omega_grid.to_vec(),
        gamma_grid: gamma_grid.to_vec(),
        loglik,
        grid_argmax: (i0, j0),
        best,
        refined: refine,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{coefficients, ExperimentDesign};
    use crate::sim::{linspace, Repetitions};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_3, FRAC_PI_4};

    fn noiseless(model: ModelKind, omega: f64, gamma: f64) -> (ExperimentDesign, SystemParams, NoisyTrace) {
        let d = ExperimentDesign::new(model, FRAC_PI_3, FRAC_PI_4).unwrap();
        let p = SystemParams::new(omega, gamma).unwrap();
        let tr = NoisyTrace::noiseless(&d, p, &linspace(0.0, 25.0, 75));
        (d, p, tr)
    }

    #[test]
    fn exact_model_has_zero_residual() {
        for model in ModelKind::ALL {
            let (d, p, tr) = noiseless(model, 1.0, 0.1);
            let pt = bayes_loglik(&tr, model, 1.0, 0.1).unwrap();
            assert!(pt.residual < 1e-20, "{model}: {}", pt.residual);
            let (a1, a2) = coefficients(&d, p);
            assert_abs_diff_eq!(pt.alpha[0], a1, epsilon = 1e-8);
            assert_abs_diff_eq!(pt.alpha[1], a2, epsilon = 1e-8);
        }
    }

    #[test]
    fn rank_deficient_candidate() {
        let (_, _, tr) = noiseless(ModelKind::ZDrive, 1.0, 0.1);
        assert_eq!(
            bayes_loglik(&tr, ModelKind::ZDrive, 0.0, 0.0),
            Err(EstimateError::RankDeficient { omega: 0.0, gamma: 0.0 })
        );
        assert!(bayes_loglik(&tr, ModelKind::ZDrive, -1.0, 0.1).is_err());
        let short = NoisyTrace { times: vec![0.0, 1.0], p_hat: vec![0.5, 0.5], repetitions: Repetitions::Infinite, sigma: None };
        assert!(bayes_loglik(&short, ModelKind::ZDrive, 1.0, 0.1).is_err());
    }

    #[test]
    fn known_sigma_mode() {
        let (_, _, tr) = noiseless(ModelKind::ZDrive, 1.0, 0.1);
        let a = bayes_loglik_with(&tr, ModelKind::ZDrive, 1.05, 0.1, NoiseScale::Known(0.1)).unwrap();
        let b = bayes_loglik_with(&tr, ModelKind::ZDrive, 1.0, 0.1, NoiseScale::Known(0.1)).unwrap();
        assert!(b.loglik > a.loglik);
        assert_abs_diff_eq!(b.loglik, -75.0 * 0.1f64.ln(), epsilon = 1e-9);
    }

    #[test]
    fn single_point_grid() {
        let (_, _, tr) = noiseless(ModelKind::YDrive, 1.0, 0.1);
        let s = bayes_surface(&tr, ModelKind::YDrive, &[0.8], &[0.3], true).unwrap();
        assert_eq!(s.best.omega, 0.8);
        assert_eq!(s.best.gamma, 0.3);
        assert_eq!(s.grid_argmax, (0, 0));
        assert_eq!(bayes_surface(&tr, ModelKind::YDrive, &[], &[0.3], false), Err(EstimateError::EmptyGrid));
    }

    #[test]
    fn refinement_recovers_truth_on_noiseless_data() {
        for model in ModelKind::ALL {
            let (_, _, tr) = noiseless(model, 1.0, 0.1);
            let s = bayes_surface(&tr, model, &linspace(0.5, 1.5, 41), &linspace(0.01, 0.5, 21), true).unwrap();
            assert_abs_diff_eq!(s.best.omega, 1.0, epsilon = 1e-7);
            assert_abs_diff_eq!(s.best.gamma, 0.1, epsilon = 1e-7);
        }
    }

    #[test]
    fn surface_csv_layout() {
        let (_, _, tr) = noiseless(ModelKind::ZDrive, 1.0, 0.1);
        let s = bayes_surface(&tr, ModelKind::ZDrive, &[0.9, 1.0], &[0.1, 0.2, 0.3], false).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert!(text.starts_with("omega,gamma,loglik\n"));
    }
}
