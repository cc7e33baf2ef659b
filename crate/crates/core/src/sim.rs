//! Finite-repetition measurement records.
//!
//! Each sample time is measured `N_e` times and the relative frequency of the
//! `+1` outcome is reported. Two noise models are available: additive white
//! gaussian noise with variance `ln ln N_e / (2 N_e)`, and a direct
//! simulation of the `N_e` projective measurements.
//!
//! Randomness is counter based: every `(seed, series, time index)` cell gets
//! its own generator, so a trace does not depend on evaluation order and
//! cells may be computed in parallel.

use std::io::{BufRead, Write};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::SimError;
use crate::model::{probability_trace, ExperimentDesign, SystemParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseModel {
    Gaussian,
    Bernoulli,
}

impl std::str::FromStr for NoiseModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" => Ok(NoiseModel::Gaussian),
            "bernoulli" => Ok(NoiseModel::Bernoulli),
            other => Err(format!("unknown noise model {other:?} (expected gaussian or bernoulli)")),
        }
    }
}

impl std::fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NoiseModel::Gaussian => "gaussian",
            NoiseModel::Bernoulli => "bernoulli",
        })
    }
}

/// Number of measurement repetitions per sample time. `Infinite` disables noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Repetitions {
    Finite(u64),
    Infinite,
}

impl Repetitions {
    pub fn count(self) -> Option<u64> {
        match self {
            Repetitions::Finite(n) => Some(n),
            Repetitions::Infinite => None,
        }
    }
}

impl std::fmt::Display for Repetitions {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Repetitions::Finite(n) => write!(f, "{n}"),
            Repetitions::Infinite => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for Repetitions {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") {
            return Ok(Repetitions::Infinite);
        }
        match s.parse::<u64>() {
            Ok(0) => Err("repetition count must be at least 1".into()),
            Ok(n) => Ok(Repetitions::Finite(n)),
            Err(_) => Err(format!("invalid repetition count {s:?}")),
        }
    }
}

/// Standard deviation of the gaussian noise model, `sqrt(ln ln N_e / (2 N_e))`.
pub fn gaussian_sigma(repetitions: u64) -> Result<f64, SimError> {
    if repetitions < 3 {
        return Err(SimError::TooFewRepetitions(repetitions));
    }
    let n = repetitions as f64;
    Ok((n.ln().ln() / (2.0 * n)).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPlan {
    times: Vec<f64>,
    repetitions: Repetitions,
    noise: NoiseModel,
    seed: u64,
}

impl SamplingPlan {
    pub fn new(
        times: Vec<f64>,
        repetitions: Repetitions,
        noise: NoiseModel,
        seed: u64,
    ) -> Result<Self, SimError> {
        if times.is_empty() {
            return Err(SimError::EmptyPlan);
        }
        for (i, &t) in times.iter().enumerate() {
            if !t.is_finite() || t < 0.0 || (i > 0 && t <= times[i - 1]) {
                return Err(SimError::BadTimes { index: i });
            }
        }
        match (repetitions, noise) {
            (Repetitions::Finite(0), _) => return Err(SimError::ZeroRepetitions),
            (Repetitions::Finite(n), NoiseModel::Gaussian) if n < 3 => {
                return Err(SimError::TooFewRepetitions(n))
            }
            _ => {}
        }
        Ok(Self { times, repetitions, noise, seed })
    }

    /// `n` equally spaced times from `t_start` to `t_end` inclusive.
    pub fn uniform(
        t_start: f64,
        t_end: f64,
        n: usize,
        repetitions: Repetitions,
        noise: NoiseModel,
        seed: u64,
    ) -> Result<Self, SimError> {
        Self::new(linspace(t_start, t_end, n), repetitions, noise, seed)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn repetitions(&self) -> Repetitions {
        self.repetitions
    }

    pub fn noise(&self) -> NoiseModel {
        self.noise
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

pub fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (end - start) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { end } else { start + step * i as f64 })
                .collect()
        }
    }
}

/// Estimated `+1` probabilities on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyTrace {
    pub times: Vec<f64>,
    pub p_hat: Vec<f64>,
    pub repetitions: Repetitions,
    /// Per-point standard deviation, known only for gaussian traces.
    pub sigma: Option<f64>,
}

impl NoisyTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Measurement expectation `2 p_hat - 1` per sample.
    pub fn expectation(&self) -> Vec<f64> {
        self.p_hat.iter().map(|p| 2.0 * p - 1.0).collect()
    }

    /// Exact probabilities, no noise.
    pub fn noiseless(design: &ExperimentDesign, params: SystemParams, times: &[f64]) -> Self {
        Self {
            times: times.to_vec(),
            p_hat: times.iter().map(|&t| probability_trace(design, params, t)).collect(),
            repetitions: Repetitions::Infinite,
            sigma: None,
        }
    }

    /// Pointwise mean of traces sampled on the same grid.
    pub fn average(traces: &[NoisyTrace]) -> Option<NoisyTrace> {
        let first = traces.first()?;
        if traces.iter().any(|t| t.times != first.times) {
            return None;
        }
        let n = traces.len() as f64;
        let p_hat = (0..first.len())
            .map(|k| traces.iter().map(|t| t.p_hat[k]).sum::<f64>() / n)
            .collect();
        let repetitions = match traces.iter().map(|t| t.repetitions.count()).sum::<Option<u64>>() {
            Some(total) => Repetitions::Finite(total),
            None => Repetitions::Infinite,
        };
        Some(NoisyTrace {
            times: first.times.clone(),
            p_hat,
            repetitions,
            sigma: first.sigma.map(|s| s / n.sqrt()),
        })
    }

    /// Writes `t,p_hat,Ne` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), SimError> {
        writeln!(w, "t,p_hat,Ne")?;
        for (t, p) in self.times.iter().zip(&self.p_hat) {
            writeln!(w, "{},{},{}", fmt_sig17(*t), fmt_sig17(*p), self.repetitions)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, SimError> {
        let mut lines = r.lines().enumerate();
        match lines.next() {
            Some((_, Ok(h))) if h.trim() == "t,p_hat,Ne" => {}
            Some((_, Err(e))) => return Err(e.into()),
            _ => return Err(SimError::Csv { line: 1, reason: "expected header t,p_hat,Ne".into() }),
        }
        let mut times = Vec::new();
        let mut p_hat = Vec::new();
        let mut repetitions = None;
        for (i, line) in lines {
            let line = line?;
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let csv_err = |reason: String| SimError::Csv { line: lineno, reason };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(csv_err(format!("expected 3 fields, got {}", fields.len())));
            }
            let t: f64 = fields[0].trim().parse().map_err(|_| csv_err("bad t".into()))?;
            let p: f64 = fields[1].trim().parse().map_err(|_| csv_err("bad p_hat".into()))?;
            let ne: Repetitions = fields[2].parse().map_err(csv_err)?;
            match repetitions {
                None => repetitions = Some(ne),
                Some(prev) if prev != ne => return Err(csv_err("Ne changes within trace".into())),
                _ => {}
            }
            if times.last().is_some_and(|&last| t <= last) || !t.is_finite() || t < 0.0 {
                return Err(csv_err("times must be non-negative and strictly increasing".into()));
            }
            times.push(t);
            p_hat.push(p);
        }
        let repetitions = repetitions.ok_or(SimError::EmptyPlan)?;
        Ok(NoisyTrace { times, p_hat, repetitions, sigma: None })
    }
}

/// Scientific notation with 17 significant digits; parses back to the same `f64`.
pub fn fmt_sig17(x: f64) -> String {
    format!("{x:.16e}")
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one `(series, time index)` cell, derived from the master seed by
/// chained splitmix64 mixing.
pub fn cell_seed(master: u64, series: u64, time_index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ series) ^ time_index)
}

fn sample_cell(p: f64, plan: &SamplingPlan, sigma: Option<f64>, series: u64, k: usize) -> f64 {
    let n = match plan.repetitions {
        Repetitions::Infinite => return p,
        Repetitions::Finite(n) => n,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(plan.seed, series, k as u64));
    match plan.noise {
        NoiseModel::Gaussian => {
            let g: f64 = rng.sample(StandardNormal);
            p + sigma.unwrap_or(0.0) * g
        }
        NoiseModel::Bernoulli => {
            let hits = (0..n).filter(|_| rng.random::<f64>() <= p).count();
            hits as f64 / n as f64
        }
    }
}

fn simulate_series(
    design: &ExperimentDesign,
    params: SystemParams,
    plan: &SamplingPlan,
    series: u64,
) -> NoisyTrace {
    let sigma = match (plan.noise, plan.repetitions) {
        (NoiseModel::Gaussian, Repetitions::Finite(n)) => gaussian_sigma(n).ok(),
        (NoiseModel::Gaussian, Repetitions::Infinite) => Some(0.0),
        _ => None,
    };
    let p_hat = plan
        .times
        .iter()
        .enumerate()
        .map(|(k, &t)| sample_cell(probability_trace(design, params, t), plan, sigma, series, k))
        .collect();
    NoisyTrace { times: plan.times.clone(), p_hat, repetitions: plan.repetitions, sigma }
}

/// One noisy record; identical to series 0 of [`multi_trace`] with the same plan.
pub fn simulate_trace(design: &ExperimentDesign, params: SystemParams, plan: &SamplingPlan) -> NoisyTrace {
    simulate_series(design, params, plan, 0)
}

/// `n_series` independent records with per-series derived seeds.
pub fn multi_trace(
    design: &ExperimentDesign,
    params: SystemParams,
    plan: &SamplingPlan,
    n_series: usize,
) -> Result<Vec<NoisyTrace>, SimError> {
    if n_series == 0 {
        return Err(SimError::NoSeries);
    }
    Ok((0..n_series as u64)
        .into_par_iter()
        .map(|s| simulate_series(design, params, plan, s))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelKind;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn z_design() -> ExperimentDesign {
        ExperimentDesign::new(ModelKind::ZDrive, FRAC_PI_2, FRAC_PI_2).unwrap()
    }

    #[test]
    fn sigma_values() {
        assert_abs_diff_eq!(gaussian_sigma(100).unwrap(), 0.0874, epsilon = 1e-4);
        assert_abs_diff_eq!(gaussian_sigma(125).unwrap(), 0.079360, epsilon = 1e-6);
        assert_abs_diff_eq!(gaussian_sigma(250).unwrap(), 0.058458, epsilon = 1e-6);
        assert_eq!(gaussian_sigma(2), Err(SimError::TooFewRepetitions(2)));
    }

    #[test]
    fn plan_validation() {
        let r = Repetitions::Finite(10);
        assert!(SamplingPlan::new(vec![], r, NoiseModel::Bernoulli, 0).is_err());
        assert_eq!(
            SamplingPlan::new(vec![0.0, 0.5, 0.5], r, NoiseModel::Bernoulli, 0),
            Err(SimError::BadTimes { index: 2 })
        );
        assert!(SamplingPlan::new(vec![-0.1], r, NoiseModel::Bernoulli, 0).is_err());
        assert!(SamplingPlan::new(vec![0.0], Repetitions::Finite(0), NoiseModel::Bernoulli, 0).is_err());
        assert!(SamplingPlan::new(vec![0.0], Repetitions::Finite(2), NoiseModel::Gaussian, 0).is_err());
        assert!(SamplingPlan::new(vec![0.0], Repetitions::Finite(2), NoiseModel::Bernoulli, 0).is_ok());
    }

    #[test]
    fn linspace_endpoints() {
        let t = linspace(0.0, 25.0, 75);
        assert_eq!(t.len(), 75);
        assert_eq!(t[0], 0.0);
        assert_eq!(t[74], 25.0);
        assert_eq!(linspace(1.0, 2.0, 1), vec![1.0]);
    }

    #[test]
    fn bernoulli_certain_outcome() {
        let plan = SamplingPlan::new(vec![0.0], Repetitions::Finite(100), NoiseModel::Bernoulli, 0).unwrap();
        let params = SystemParams::new(1.0, 0.1).unwrap();
        for seed in 0..50 {
            let tr = simulate_trace(&z_design(), params, &plan.with_seed(seed));
            assert_eq!(tr.p_hat[0], 1.0);
        }
    }

    #[test]
    fn bernoulli_values_on_lattice() {
        let plan = SamplingPlan::uniform(0.0, 5.0, 40, Repetitions::Finite(37), NoiseModel::Bernoulli, 9).unwrap();
        let tr = simulate_trace(&z_design(), SystemParams::new(1.0, 0.1).unwrap(), &plan);
        for p in tr.p_hat {
            let k = p * 37.0;
            assert_abs_diff_eq!(k, k.round(), epsilon = 1e-9);
            assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn infinite_repetitions_are_noiseless() {
        let params = SystemParams::new(1.0, 0.1).unwrap();
        for noise in [NoiseModel::Gaussian, NoiseModel::Bernoulli] {
            let plan = SamplingPlan::uniform(0.0, 10.0, 30, Repetitions::Infinite, noise, 4).unwrap();
            let tr = simulate_trace(&z_design(), params, &plan);
            assert_eq!(tr, NoisyTrace { sigma: tr.sigma, ..NoisyTrace::noiseless(&z_design(), params, plan.times()) });
        }
    }

    #[test]
    fn series_seeds() {
        let plan = SamplingPlan::uniform(0.0, 5.0, 20, Repetitions::Finite(100), NoiseModel::Gaussian, 77).unwrap();
        let params = SystemParams::new(1.0, 0.1).unwrap();
        let single = simulate_trace(&z_design(), params, &plan);
        assert_eq!(multi_trace(&z_design(), params, &plan, 1).unwrap(), vec![single.clone()]);
        let five = multi_trace(&z_design(), params, &plan, 5).unwrap();
        assert_eq!(five[0], single);
        for i in 0..5 {
            for j in i + 1..5 {
                assert_ne!(five[i].p_hat, five[j].p_hat);
            }
        }
        assert_eq!(multi_trace(&z_design(), params, &plan, 0), Err(SimError::NoSeries));
        assert_eq!(five, multi_trace(&z_design(), params, &plan, 5).unwrap());
    }

    #[test]
    fn csv_round_trip() {
        let plan = SamplingPlan::uniform(0.0, 3.0, 11, Repetitions::Finite(100), NoiseModel::Gaussian, 1).unwrap();
        let tr = simulate_trace(&z_design(), SystemParams::new(1.0, 0.1).unwrap(), &plan);
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,p_hat,Ne\n"));
        let back = NoisyTrace::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.times, tr.times);
        assert_eq!(back.p_hat, tr.p_hat);
        assert_eq!(back.repetitions, tr.repetitions);
    }

    #[test]
    fn csv_errors() {
        assert!(NoisyTrace::read_csv("x,y\n".as_bytes()).is_err());
        let err = NoisyTrace::read_csv("t,p_hat,Ne\n0,0.5,10\n0,0.4,10\n".as_bytes()).unwrap_err();
        assert!(matches!(err, SimError::Csv { line: 3, .. }));
        assert!(NoisyTrace::read_csv("t,p_hat,Ne\n0,0.5\n".as_bytes()).is_err());
        assert!(NoisyTrace::read_csv("t,p_hat,Ne\n0,0.5,10\n1,0.5,11\n".as_bytes()).is_err());
        let inf = NoisyTrace::read_csv("t,p_hat,Ne\n0,0.5,inf\n".as_bytes()).unwrap();
        assert_eq!(inf.repetitions, Repetitions::Infinite);
    }

    #[test]
    fn average_of_traces() {
        let a = NoisyTrace { times: vec![0.0, 1.0], p_hat: vec![0.2, 0.4], repetitions: Repetitions::Finite(10), sigma: None };
        let b = NoisyTrace { p_hat: vec![0.4, 0.8], ..a.clone() };
        let m = NoisyTrace::average(&[a.clone(), b]).unwrap();
        assert_abs_diff_eq!(m.p_hat[0], 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(m.p_hat[1], 0.6, epsilon = 1e-15);
        assert_eq!(m.repetitions, Repetitions::Finite(20));
        let c = NoisyTrace { times: vec![0.0, 2.0], ..a.clone() };
        assert!(NoisyTrace::average(&[a, c]).is_none());
    }
}
