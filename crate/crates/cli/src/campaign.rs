use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use dephasing_id::design::DesignWarning;
use dephasing_id::estimators::{bayes_surface, fourier_estimate, gamma_least_squares, periodogram};
use dephasing_id::{
    classify_with_params, multi_trace, visibility, Identifiability, IdentifiabilityVerdict, NoisyTrace, SimError,
};

use crate::config::{CampaignConfig, ConfigError, EstimatorKind};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Trace { path: PathBuf, source: SimError },
    #[error("simulation failed: {0}")]
    Sim(#[from] SimError),
    #[error(transparent)]
    Estimate(#[from] dephasing_id::EstimateError),
    #[error("design is not identifiable ({reason}); refusing to fit")]
    NotIdentifiable { reason: &'static str },
    #[error("no trace files given and none found in {0}")]
    NoTraces(PathBuf),
    #[error("trace {path} does not share the time grid of the first trace")]
    GridMismatch { path: PathBuf },
    #[error("unknown reproduction id `{id}`; valid ids: {valid}")]
    UnknownId { id: String, valid: String },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

pub(crate) fn write_trace(path: &Path, trace: &NoisyTrace) -> Result<(), CliError> {
    let mut w = create(path)?;
    trace.write_csv(&mut w).map_err(|source| CliError::Trace { path: path.to_path_buf(), source })?;
    w.flush().map_err(io_err(path))
}

pub fn read_trace(path: &Path) -> Result<NoisyTrace, CliError> {
    let f = File::open(path).map_err(io_err(path))?;
    NoisyTrace::read_csv(BufReader::new(f)).map_err(|source| CliError::Trace { path: path.to_path_buf(), source })
}

pub fn trace_file_name(index: usize) -> String {
    format!("trace_{index:03}.csv")
}

pub const MANIFEST: &str = "manifest.cfg";

/// Ordered key-value report, written in the same `key = value` syntax as the
/// configuration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub entries: Vec<(String, String)>,
}

impl Report {
    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(|v| v.parse().ok())
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

fn f(x: f64) -> String {
    format!("{x:?}")
}

pub fn verdict_report(cfg: &CampaignConfig) -> (IdentifiabilityVerdict, Report) {
    let design = cfg.design();
    let v = classify_with_params(&design, cfg.params());
    let mut r = Report::default();
    r.push("model", cfg.model.label());
    r.push("verdict", v.verdict);
    r.push("reason", v.reason.code());
    r.push("visibility", f(visibility(&design)));
    for w in &v.warnings {
        match w {
            DesignWarning::VanishingCoefficient { index } => {
                r.push("warning", format!("alpha{} vanishes for these parameters", index + 1))
            }
        }
    }
    (v, r)
}

#[derive(Debug, Clone)]
pub struct SimulateOutput {
    pub noiseless: PathBuf,
    pub traces: Vec<PathBuf>,
    pub manifest: PathBuf,
}

/// Writes the noiseless trace, one file per noisy series and a manifest that
/// reproduces this run when passed back as a configuration.
pub fn run_simulate(cfg: &CampaignConfig, out: &Path) -> Result<SimulateOutput, CliError> {
    ensure_dir(out)?;
    let design = cfg.design();
    let params = cfg.params();
    let plan = cfg.plan();
    let traces = multi_trace(&design, params, &plan, cfg.n_series)?;

    let noiseless = out.join("noiseless.csv");
    write_trace(&noiseless, &NoisyTrace::noiseless(&design, params, plan.times()))?;
    let mut paths = Vec::with_capacity(traces.len());
    for (i, tr) in traces.iter().enumerate() {
        let p = out.join(trace_file_name(i));
        write_trace(&p, tr)?;
        paths.push(p);
    }
    let manifest = out.join(MANIFEST);
    let mut w = create(&manifest)?;
    w.write_all(cfg.to_text().as_bytes()).map_err(io_err(&manifest))?;
    w.flush().map_err(io_err(&manifest))?;
    Ok(SimulateOutput { noiseless, traces: paths, manifest })
}

/// `trace_*.csv` files in `dir`, sorted by name.
pub fn find_traces(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("trace_") && n.ends_with(".csv"))
        })
        .collect();
    v.sort();
    Ok(v)
}

pub fn load_traces(paths: &[PathBuf]) -> Result<Vec<NoisyTrace>, CliError> {
    let mut out: Vec<NoisyTrace> = Vec::with_capacity(paths.len());
    for p in paths {
        let tr = read_trace(p)?;
        if let Some(first) = out.first() {
            if first.times != tr.times {
                return Err(CliError::GridMismatch { path: p.clone() });
            }
        }
        out.push(tr);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct EstimateOutput {
    pub report: Report,
    pub any_failed: bool,
}

/// Runs the configured estimators, writing `report.txt` and, where produced,
/// `surface.csv` and `spectrum.csv` into `out`.
///
/// Multiple traces are pooled by averaging for the likelihood and periodogram;
/// the least-squares estimator uses them as separate series.
pub fn run_estimate(cfg: &CampaignConfig, traces: &[NoisyTrace], out: &Path) -> Result<EstimateOutput, CliError> {
    let (verdict, mut report) = verdict_report(cfg);
    if verdict.verdict == Identifiability::None {
        return Err(CliError::NotIdentifiable { reason: verdict.reason.code() });
    }
    if traces.is_empty() {
        return Err(CliError::NoTraces(out.to_path_buf()));
    }
    ensure_dir(out)?;
    let pooled = NoisyTrace::average(traces).ok_or(CliError::GridMismatch { path: out.to_path_buf() })?;
    report.push("n_traces", traces.len());
    report.push("n_samples", pooled.len());
    let design = cfg.design();
    let mut failures = 0;

    for est in &cfg.estimators {
        match est {
            EstimatorKind::Bayes => {
                match bayes_surface(&pooled, cfg.model, &cfg.omega_grid(), &cfg.gamma_grid(), cfg.refine) {
                    Ok(s) => {
                        let b = s.best;
                        report.push("bayes.omega", f(b.omega));
                        report.push("bayes.gamma", f(b.gamma));
                        report.push("bayes.alpha1", f(b.alpha[0]));
                        report.push("bayes.alpha2", f(b.alpha[1]));
                        report.push("bayes.u1", f(b.uncertainty[0]));
                        report.push("bayes.u2", f(b.uncertainty[1]));
                        report.push("bayes.loglik", f(b.loglik));
                        report.push("bayes.refined", s.refined);
                        let path = out.join("surface.csv");
                        let mut w = create(&path)?;
                        s.write_csv(&mut w).and_then(|_| w.flush()).map_err(io_err(&path))?;
                    }
                    Err(e) => {
                        failures += 1;
                        report.push("bayes.error", e);
                    }
                }
            }
            EstimatorKind::Fourier => {
                let spec = match periodogram(&pooled, cfg.zero_pad_factor) {
                    Ok(s) => s,
                    Err(e) => {
                        failures += 1;
                        report.push("fourier.error", e);
                        continue;
                    }
                };
                let path = out.join("spectrum.csv");
                let mut w = create(&path)?;
                writeln!(w, "omega,magnitude").map_err(io_err(&path))?;
                for (om, m) in spec.frequencies.iter().zip(&spec.magnitude) {
                    writeln!(w, "{},{}", dephasing_id::sim::fmt_sig17(*om), dephasing_id::sim::fmt_sig17(*m))
                        .map_err(io_err(&path))?;
                }
                w.flush().map_err(io_err(&path))?;
                report.push("fourier.resolution", f(spec.resolution));
                match fourier_estimate(&spec) {
                    Ok(fe) => {
                        report.push("fourier.omega_star", f(fe.omega_star));
                        report.push("fourier.peak_height", f(fe.peak_height));
                        if let Some(d) = fe.halfwidth {
                            report.push("fourier.halfwidth", f(d));
                        }
                        report.push("fourier.gamma", f(fe.gamma()));
                        report.push("fourier.omega0", f(fe.omega0));
                    }
                    Err(e) => {
                        failures += 1;
                        report.push("fourier.error", e);
                    }
                }
            }
            EstimatorKind::Lsq => match gamma_least_squares(traces, &design, cfg.omega, &cfg.lsq_options()) {
                Ok(g) => {
                    report.push("lsq.gamma", f(g.mean));
                    report.push("lsq.std", f(g.std));
                    report.push("lsq.n_series", g.n_series);
                    report.push("lsq.failed", g.failed);
                    if let Some(t) = g.t_max {
                        report.push("lsq.t_max", f(t));
                    }
                    if let Some(k) = g.stopped_at {
                        report.push("lsq.stopped_at", k);
                    }
                }
                Err(e) => {
                    failures += 1;
                    report.push("lsq.error", e);
                }
            },
        }
    }
    if verdict.verdict == Identifiability::GammaOnly {
        report.push("note", "frequency does not enter the trace for this design; omega estimates are meaningless");
    }
    let path = out.join("report.txt");
    let mut w = create(&path)?;
    w.write_all(report.to_text().as_bytes()).and_then(|_| w.flush()).map_err(io_err(&path))?;
    Ok(EstimateOutput { report, any_failed: failures > 0 })
}
