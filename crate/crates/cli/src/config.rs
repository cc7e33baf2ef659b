//! Flat `key = value` campaign configuration.
//!
//! Blank lines and `#` comments are ignored. Every key is optional; missing
//! keys take defaults, some of which (the likelihood grid) depend on the
//! nominal parameters. [`CampaignConfig::to_text`] writes every resolved key,
//! so its output parses back to an identical configuration.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::str::FromStr;

use dephasing_id::estimators::{LsqOptions, StopRule, Truncation};
use dephasing_id::{ExperimentDesign, ModelKind, NoiseModel, Repetitions, SamplingPlan, SystemParams};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown config key `{key}`")]
    UnknownKey { key: String },
    #[error("config key `{key}` given twice")]
    Duplicate { key: String },
    #[error("config key `{key}`: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EstimatorKind {
    Bayes,
    Fourier,
    Lsq,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Bayes => "bayes",
            EstimatorKind::Fourier => "fourier",
            EstimatorKind::Lsq => "lsq",
        }
    }
}

impl FromStr for EstimatorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "bayes" => Ok(EstimatorKind::Bayes),
            "fourier" => Ok(EstimatorKind::Fourier),
            "lsq" => Ok(EstimatorKind::Lsq),
            other => Err(format!("unknown estimator {other:?} (expected bayes, fourier or lsq)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    pub model: ModelKind,
    pub omega: f64,
    pub gamma: f64,
    pub theta_i: f64,
    pub theta_m: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub n_points: usize,
    pub repetitions: Repetitions,
    pub noise: NoiseModel,
    pub n_series: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorKind>,
    pub omega_min: f64,
    pub omega_max: f64,
    pub omega_points: usize,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub gamma_points: usize,
    pub refine: bool,
    pub zero_pad_factor: usize,
    pub mask_tol: f64,
    pub truncation: Truncation,
    pub stop_window: Option<usize>,
    pub stop_tol: f64,
}

const KEYS: &[&str] = &[
    "version",
    "model",
    "omega",
    "gamma",
    "theta_i",
    "theta_m",
    "t_start",
    "t_end",
    "n_points",
    "repetitions",
    "noise",
    "n_series",
    "seed",
    "estimators",
    "omega_min",
    "omega_max",
    "omega_points",
    "gamma_min",
    "gamma_max",
    "gamma_points",
    "refine",
    "zero_pad_factor",
    "mask_tol",
    "truncation",
    "pilot_floor",
    "truncation_time",
    "stop_window",
    "stop_tol",
];

/// Parses an angle in radians. Accepts plain numbers and multiples or
/// fractions of `pi`: `pi`, `-pi/4`, `2pi/3`, `2*pi/3`, `0.25*pi`.
pub fn parse_angle(s: &str) -> Result<f64, String> {
    let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let err = || format!("cannot parse angle {s:?}");
    let (num, den) = match compact.split_once('/') {
        Some((n, d)) => (n, Some(d.parse::<f64>().map_err(|_| err())?)),
        None => (compact.as_str(), None),
    };
    let (sign, body) = match num.strip_prefix('-') {
        Some(rest) => (-1.0, rest),
        None => (1.0, num),
    };
    let value = if let Some(coef) = body.strip_suffix("pi") {
        let coef = coef.strip_suffix('*').unwrap_or(coef);
        let c = if coef.is_empty() { 1.0 } else { coef.parse::<f64>().map_err(|_| err())? };
        c * std::f64::consts::PI
    } else {
        body.parse::<f64>().map_err(|_| err())?
    };
    let value = sign * value / den.unwrap_or(1.0);
    if value.is_finite() {
        Ok(value)
    } else {
        Err(err())
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| invalid(key, format!("{v:?}: {e}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(invalid(key, format!("expected true or false, got {v:?}"))),
    }
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self::parse("").expect("empty config is valid")
    }
}

impl CampaignConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut seen = BTreeSet::new();
        let mut pairs = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: idx + 1 })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(ConfigError::Syntax { line: idx + 1 });
            }
            if !KEYS.contains(&k) {
                return Err(ConfigError::UnknownKey { key: k.to_string() });
            }
            if !seen.insert(k.to_string()) {
                return Err(ConfigError::Duplicate { key: k.to_string() });
            }
            pairs.push((k.to_string(), v.to_string()));
        }
        let get = |key: &str| pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());

        let model = match get("model") {
            Some(v) => v.parse::<ModelKind>().map_err(|e| invalid("model", e.to_string()))?,
            None => ModelKind::ZDrive,
        };
        let omega = get("omega").map_or(Ok(1.0), |v| parse_num::<f64>("omega", v))?;
        let gamma = get("gamma").map_or(Ok(0.1), |v| parse_num::<f64>("gamma", v))?;
        SystemParams::new(omega, gamma).map_err(|e| {
            let key = if omega.is_finite() && omega >= 0.0 { "gamma" } else { "omega" };
            invalid(key, e.to_string())
        })?;
        let angle = |key: &str, default: f64| match get(key) {
            Some(v) => parse_angle(v).map_err(|e| invalid(key, e)),
            None => Ok(default),
        };
        let theta_i = angle("theta_i", std::f64::consts::FRAC_PI_2)?;
        let theta_m = angle("theta_m", std::f64::consts::FRAC_PI_2)?;

        let t_start = get("t_start").map_or(Ok(0.0), |v| parse_num::<f64>("t_start", v))?;
        let t_end = get("t_end").map_or(Ok(25.0), |v| parse_num::<f64>("t_end", v))?;
        if !(t_start.is_finite() && t_start >= 0.0) {
            return Err(invalid("t_start", "must be finite and non-negative"));
        }
        if !(t_end.is_finite() && t_end > t_start) {
            return Err(invalid("t_end", "must be finite and greater than t_start"));
        }
        let n_points = get("n_points").map_or(Ok(100), |v| parse_num::<usize>("n_points", v))?;
        if n_points < 2 {
            return Err(invalid("n_points", "need at least 2 sample times"));
        }
        let repetitions = match get("repetitions") {
            Some(v) => v.parse::<Repetitions>().map_err(|e| invalid("repetitions", e))?,
            None => Repetitions::Finite(100),
        };
        let noise = match get("noise") {
            Some(v) => v.parse::<NoiseModel>().map_err(|e| invalid("noise", e))?,
            None => NoiseModel::Bernoulli,
        };
        if let (Repetitions::Finite(n), NoiseModel::Gaussian) = (repetitions, noise) {
            if n < 3 {
                return Err(invalid("repetitions", "gaussian noise needs at least 3 repetitions"));
            }
        }
        let n_series = get("n_series").map_or(Ok(1), |v| parse_num::<usize>("n_series", v))?;
        if n_series == 0 {
            return Err(invalid("n_series", "must be at least 1"));
        }
        let seed = get("seed").map_or(Ok(0), |v| parse_num::<u64>("seed", v))?;

        let estimators = match get("estimators") {
            None | Some("auto") => {
                let mut e = vec![EstimatorKind::Bayes, EstimatorKind::Fourier];
                if model == ModelKind::ZDrive {
                    e.push(EstimatorKind::Lsq);
                }
                e
            }
            Some(v) => {
                let mut e = v
                    .split(',')
                    .map(|s| s.parse::<EstimatorKind>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|m| invalid("estimators", m))?;
                e.sort();
                e.dedup();
                if e.is_empty() {
                    return Err(invalid("estimators", "empty list"));
                }
                e
            }
        };

        let pos = |key: &str, default: f64| -> Result<f64, ConfigError> {
            let v = get(key).map_or(Ok(default), |v| parse_num::<f64>(key, v))?;
            if v.is_finite() && v >= 0.0 {
                Ok(v)
            } else {
                Err(invalid(key, "must be finite and non-negative"))
            }
        };
        let omega_min = pos("omega_min", 0.5 * omega)?;
        let omega_max = pos("omega_max", if omega > 0.0 { 1.5 * omega } else { 1.0 })?;
        let gamma_min = pos("gamma_min", 0.0)?;
        let gamma_max = pos("gamma_max", if gamma > 0.0 { 3.0 * gamma } else { 1.0 })?;
        if omega_max < omega_min {
            return Err(invalid("omega_max", "below omega_min"));
        }
        if gamma_max < gamma_min {
            return Err(invalid("gamma_max", "below gamma_min"));
        }
        let points = |key: &str, default: usize| -> Result<usize, ConfigError> {
            let n = get(key).map_or(Ok(default), |v| parse_num::<usize>(key, v))?;
            if n == 0 {
                Err(invalid(key, "must be at least 1"))
            } else {
                Ok(n)
            }
        };
        let omega_points = points("omega_points", 201)?;
        let gamma_points = points("gamma_points", 61)?;
        let refine = get("refine").map_or(Ok(true), |v| parse_bool("refine", v))?;
        let zero_pad_factor = points("zero_pad_factor", 4)?;

        let mask_tol = pos("mask_tol", dephasing_id::estimators::timeseries::DEFAULT_MASK_TOL)?;
        if mask_tol >= 1.0 {
            return Err(invalid("mask_tol", "must be below 1"));
        }
        let truncation = match get("truncation").unwrap_or("pilot") {
            "none" => {
                for k in ["pilot_floor", "truncation_time"] {
                    if get(k).is_some() {
                        return Err(invalid(k, "only valid with truncation = pilot or fixed"));
                    }
                }
                Truncation::None
            }
            "pilot" => {
                if get("truncation_time").is_some() {
                    return Err(invalid("truncation_time", "only valid with truncation = fixed"));
                }
                let floor = get("pilot_floor").map_or(Ok(0.6), |v| parse_num::<f64>("pilot_floor", v))?;
                if !(floor > 0.0 && floor < 1.0) {
                    return Err(invalid("pilot_floor", "must lie in (0, 1)"));
                }
                Truncation::Pilot { floor }
            }
            "fixed" => {
                if get("pilot_floor").is_some() {
                    return Err(invalid("pilot_floor", "only valid with truncation = pilot"));
                }
                let t = get("truncation_time")
                    .ok_or_else(|| invalid("truncation_time", "required with truncation = fixed"))
                    .and_then(|v| parse_num::<f64>("truncation_time", v))?;
                if !(t.is_finite() && t > 0.0) {
                    return Err(invalid("truncation_time", "must be positive"));
                }
                Truncation::At(t)
            }
            other => return Err(invalid("truncation", format!("expected none, pilot or fixed, got {other:?}"))),
        };
        let stop_window = match get("stop_window") {
            None | Some("none") => None,
            Some(v) => {
                let w = parse_num::<usize>("stop_window", v)?;
                if w < 2 {
                    return Err(invalid("stop_window", "must be at least 2"));
                }
                Some(w)
            }
        };
        let stop_tol = get("stop_tol").map_or(Ok(0.5), |v| parse_num::<f64>("stop_tol", v))?;
        if !(stop_tol > 0.0 && stop_tol.is_finite()) {
            return Err(invalid("stop_tol", "must be positive"));
        }

        Ok(Self {
            model,
            omega,
            gamma,
            theta_i,
            theta_m,
            t_start,
            t_end,
            n_points,
            repetitions,
            noise,
            n_series,
            seed,
            estimators,
            omega_min,
            omega_max,
            omega_points,
            gamma_min,
            gamma_max,
            gamma_points,
            refine,
            zero_pad_factor,
            mask_tol,
            truncation,
            stop_window,
            stop_tol,
        })
    }

    pub fn params(&self) -> SystemParams {
        SystemParams::new(self.omega, self.gamma).expect("validated at parse time")
    }

    pub fn design(&self) -> ExperimentDesign {
        ExperimentDesign::new(self.model, self.theta_i, self.theta_m).expect("validated at parse time")
    }

    pub fn times(&self) -> Vec<f64> {
        dephasing_id::sim::linspace(self.t_start, self.t_end, self.n_points)
    }

    pub fn plan(&self) -> SamplingPlan {
        SamplingPlan::new(self.times(), self.repetitions, self.noise, self.seed).expect("validated at parse time")
    }

    pub fn omega_grid(&self) -> Vec<f64> {
        dephasing_id::sim::linspace(self.omega_min, self.omega_max, self.omega_points)
    }

    pub fn gamma_grid(&self) -> Vec<f64> {
        dephasing_id::sim::linspace(self.gamma_min, self.gamma_max, self.gamma_points)
    }

    pub fn lsq_options(&self) -> LsqOptions {
        LsqOptions {
            mask_tol: self.mask_tol,
            truncation: self.truncation,
            stop: self.stop_window.map(|w| StopRule::new(w, self.stop_tol).expect("validated at parse time")),
        }
    }

    /// Every key with its resolved value, plus the toolkit version. Floats use
    /// the shortest representation that parses back to the same value.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("version", VERSION.to_string());
        kv("model", self.model.label().to_string());
        kv("omega", format!("{:?}", self.omega));
        kv("gamma", format!("{:?}", self.gamma));
        kv("theta_i", format!("{:?}", self.theta_i));
        kv("theta_m", format!("{:?}", self.theta_m));
        kv("t_start", format!("{:?}", self.t_start));
        kv("t_end", format!("{:?}", self.t_end));
        kv("n_points", self.n_points.to_string());
        kv("repetitions", self.repetitions.to_string());
        kv("noise", self.noise.to_string());
        kv("n_series", self.n_series.to_string());
        kv("seed", self.seed.to_string());
        kv("estimators", self.estimators.iter().map(|e| e.name()).collect::<Vec<_>>().join(","));
        kv("omega_min", format!("{:?}", self.omega_min));
        kv("omega_max", format!("{:?}", self.omega_max));
        kv("omega_points", self.omega_points.to_string());
        kv("gamma_min", format!("{:?}", self.gamma_min));
        kv("gamma_max", format!("{:?}", self.gamma_max));
        kv("gamma_points", self.gamma_points.to_string());
        kv("refine", self.refine.to_string());
        kv("zero_pad_factor", self.zero_pad_factor.to_string());
        kv("mask_tol", format!("{:?}", self.mask_tol));
        match self.truncation {
            Truncation::None => kv("truncation", "none".into()),
            Truncation::Pilot { floor } => {
                kv("truncation", "pilot".into());
                kv("pilot_floor", format!("{floor:?}"));
            }
            Truncation::At(t) => {
                kv("truncation", "fixed".into());
                kv("truncation_time", format!("{t:?}"));
            }
        }
        kv("stop_window", self.stop_window.map_or("none".into(), |w| w.to_string()));
        kv("stop_tol", format!("{:?}", self.stop_tol));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn angles() {
        assert_eq!(parse_angle("pi/3").unwrap(), PI / 3.0);
        assert_eq!(parse_angle("-pi/4").unwrap(), -PI / 4.0);
        assert_eq!(parse_angle("2pi/3").unwrap(), 2.0 * PI / 3.0);
        assert_eq!(parse_angle("2 * pi / 3").unwrap(), 2.0 * PI / 3.0);
        assert_eq!(parse_angle("0.5").unwrap(), 0.5);
        assert_eq!(parse_angle("pi").unwrap(), PI);
        assert!(parse_angle("tau").is_err());
        assert!(parse_angle("pi/0").is_err());
    }

    #[test]
    fn unknown_and_bad_keys_are_named() {
        assert_eq!(
            CampaignConfig::parse("omegaa = 1").unwrap_err(),
            ConfigError::UnknownKey { key: "omegaa".into() }
        );
        let e = CampaignConfig::parse("gamma = -1").unwrap_err();
        assert!(e.to_string().contains("`gamma`"), "{e}");
        let e = CampaignConfig::parse("model = D").unwrap_err();
        assert!(e.to_string().contains("`model`"), "{e}");
        let e = CampaignConfig::parse("noise = gaussian\nrepetitions = 2").unwrap_err();
        assert!(e.to_string().contains("`repetitions`"), "{e}");
        assert!(matches!(CampaignConfig::parse("seed = 1\nseed = 2"), Err(ConfigError::Duplicate { .. })));
        assert_eq!(CampaignConfig::parse("just words"), Err(ConfigError::Syntax { line: 1 }));
    }

    #[test]
    fn comments_and_defaults() {
        let c = CampaignConfig::parse("# scenario\nmodel = C   # y drive\n\nomega = 2\n").unwrap();
        assert_eq!(c.model, ModelKind::YDrive);
        assert_eq!((c.omega_min, c.omega_max), (1.0, 3.0));
        assert_eq!(c.estimators, vec![EstimatorKind::Bayes, EstimatorKind::Fourier]);
        assert_eq!(CampaignConfig::default().estimators.len(), 3);
    }

    #[test]
    fn text_round_trip() {
        let c = CampaignConfig::parse(
            "model = A\ntheta_i = pi/3\ntheta_m = pi/4\nseed = 77\nrepetitions = inf\ntruncation = fixed\ntruncation_time = 0.09\nstop_window = 4",
        )
        .unwrap();
        let again = CampaignConfig::parse(&c.to_text()).unwrap();
        assert_eq!(c, again);
        assert_eq!(again.to_text(), c.to_text());
    }
}
