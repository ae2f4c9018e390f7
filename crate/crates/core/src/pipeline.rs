//! The fit -> extract -> integrate workflow, the quadrature oracle and the
//! mass scan built from them.

use std::cell::RefCell;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

use crate::artifact::{ArtifactError, FitKey, Method, ModelArtifact, ScanRow, TrainingMeta};
use crate::config::{ConfigError, RunConfig};
use crate::fourier::{self, FourierError, FourierSeries2D};
use crate::iqae::{self, IqaeError, SeriesEstimate};
use crate::ltd::{Integrand, LtdError, ProcessRegistry};
use crate::quad::{self, QuadError};
use crate::vqc::{self, Dataset, QnnModel, VqcError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ltd(#[from] LtdError),
    #[error(transparent)]
    Vqc(#[from] VqcError),
    #[error(transparent)]
    Fourier(#[from] FourierError),
    #[error(transparent)]
    Iqae(#[from] IqaeError),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("oracle not converged: panel doubling changed {value:e} by {relative:.2e} (relative)")]
    NotConverged { value: f64, relative: f64 },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

pub fn read_file(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn write_file(path: &Path, contents: &[u8]) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

pub fn fit_key<'a>(
    config: &'a RunConfig,
    mass_ratio: f64,
    train: &'a vqc::TrainConfig,
) -> Result<FitKey<'a>, PipelineError> {
    let spec = config.process_spec(mass_ratio)?;
    Ok(FitKey {
        process: &config.process,
        mass_ratio,
        masses: spec.masses,
        coupling: spec.coupling,
        ansatz: config.qnn.ansatz(),
        train,
        grid_points: config.qnn.grid_points,
        seed: config.seed,
    })
}

/// Cache location of the model fitted for `mass_ratio`, if caching is on.
pub fn model_cache_path(config: &RunConfig, mass_ratio: f64) -> Result<Option<PathBuf>, PipelineError> {
    let Some(dir) = &config.artifact_dir else { return Ok(None) };
    let train = config.qnn.train(config.seed);
    let digest = fit_key(config, mass_ratio, &train)?.digest();
    Ok(Some(dir.join(format!("{digest}.model.toml"))))
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: QnnModel,
    pub meta: TrainingMeta,
    /// Training MSE in the integrand's own units.
    pub mse: f64,
    pub seconds: f64,
    pub cached: bool,
    pub artifact: Option<PathBuf>,
}

/// Samples the integrand on the training grid.
pub fn training_set(config: &RunConfig, mass_ratio: f64, registry: &ProcessRegistry) -> Result<Dataset, PipelineError> {
    let integrand = Integrand::new(&config.process_spec(mass_ratio)?, registry)?;
    Ok(Dataset::grid_2d(config.qnn.grid_points, |a, b| integrand.eval([a, b]))?)
}

/// Trains a model on `dataset` with the configured ansatz and optimizer.
pub fn fit_dataset(config: &RunConfig, dataset: &Dataset) -> Result<(QnnModel, TrainingMeta), PipelineError> {
    let (scale, offset) = dataset.normalization(config.qnn.margin);
    let normalized = dataset.normalized(scale, offset);
    let init = QnnModel::random(config.qnn.ansatz(), config.seed)?;
    let report = vqc::train(&init, &normalized, &config.qnn.train(config.seed))?;
    let mut model = report.model.clone();
    model.output_scale = scale;
    model.output_offset = offset;
    let meta = TrainingMeta {
        seed: config.seed,
        final_loss: report.best_loss,
        steps: report.steps_executed(),
        best_restart: report.best_restart,
        process: None,
        mass_ratio: None,
    };
    Ok((model, meta))
}

/// Fits the integrand at one mass ratio, reusing a cached artifact when
/// allowed.
pub fn fit(config: &RunConfig, mass_ratio: f64, registry: &ProcessRegistry) -> Result<FitOutcome, PipelineError> {
    config.validate()?;
    let start = Instant::now();
    let cache = model_cache_path(config, mass_ratio)?;
    if let Some(path) = cache.as_ref().filter(|p| config.reuse_artifacts && p.exists()) {
        let artifact = ModelArtifact::from_toml(&read_file(path)?)?;
        let model = artifact.model()?;
        return Ok(FitOutcome {
            mse: artifact.training.final_loss * model.output_scale * model.output_scale,
            model,
            meta: artifact.training,
            seconds: start.elapsed().as_secs_f64(),
            cached: true,
            artifact: Some(path.clone()),
        });
    }
    let dataset = training_set(config, mass_ratio, registry)?;
    let (model, mut meta) = fit_dataset(config, &dataset)?;
    meta.process = Some(config.process.clone());
    meta.mass_ratio = Some(mass_ratio);
    if let Some(path) = &cache {
        write_model(path, &model, &meta)?;
    }
    Ok(FitOutcome {
        mse: model.loss(&dataset)?,
        model,
        meta,
        seconds: start.elapsed().as_secs_f64(),
        cached: false,
        artifact: cache,
    })
}

pub fn write_model(path: &Path, model: &QnnModel, meta: &TrainingMeta) -> Result<(), PipelineError> {
    let text = ModelArtifact::new(model, meta.clone()).to_toml()?;
    write_file(path, text.as_bytes())
}

pub fn read_model(path: &Path) -> Result<(QnnModel, TrainingMeta), PipelineError> {
    let artifact = ModelArtifact::from_toml(&read_file(path)?)?;
    Ok((artifact.model()?, artifact.training))
}

/// Fourier series of a model as a function of its raw inputs' encoded
/// angles, extracted at the full spectrum bound so nothing aliases.
pub fn model_series(model: &QnnModel) -> Result<FourierSeries2D, PipelineError> {
    if model.ansatz.n_variables != 2 {
        return Err(VqcError::InputShape { expected: 2, got: model.ansatz.n_variables }.into());
    }
    let n = model.ansatz.spectrum_bound().min(fourier::MAX_N_MAX);
    let inputs: Vec<Vec<f64>> = fourier::grid_points(n)
        .iter()
        .map(|x| x.iter().zip(&model.input_scale).map(|(a, s)| a / s).collect())
        .collect();
    let samples = model.forward_batch(&inputs)?;
    Ok(fourier::extract_from_samples(&samples, n)?)
}

#[derive(Debug, Clone)]
pub struct IntegrateOutcome {
    pub estimate: f64,
    pub half_width: f64,
    /// Closed-form integral of the same truncated series.
    pub analytic: f64,
    /// Share of the model's power above the truncation.
    pub out_of_band: f64,
    pub series: FourierSeries2D,
    pub report: SeriesEstimate,
    pub seconds: f64,
}

/// Integrates a fitted model over the unit box by IQAE on each Fourier term.
pub fn integrate_model(config: &RunConfig, model: &QnnModel) -> Result<IntegrateOutcome, PipelineError> {
    config.validate()?;
    let start = Instant::now();
    let full = model_series(model)?;
    let series = full.truncate(config.n_fourier.min(full.n_max()));
    let power = full.power();
    let out_of_band = if power > 0.0 { full.out_of_band_power(series.n_max()) / power } else { 0.0 };
    let (s1, s2) = (model.input_scale[0], model.input_scale[1]);
    // u in [0, 1) is encoded as the angle s * u.
    let domain = [(0.0, s1), (0.0, s2)];
    let jacobian = 1.0 / (s1 * s2);
    let report = iqae::integrate_series(&series, domain, config.iqae.grid_bits, &config.iqae_config())?;
    Ok(IntegrateOutcome {
        estimate: report.total * jacobian,
        half_width: report.half_width * jacobian.abs(),
        analytic: series.analytic_integral(domain) * jacobian,
        out_of_band,
        series,
        report,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOutcome {
    /// Extrapolated value.
    pub value: f64,
    /// Change between the two extrapolations.
    pub error_estimate: f64,
    /// Raw values at `panels / 2`, `panels` and `2 * panels`.
    pub levels: [f64; 3],
    pub evaluations: u64,
    pub seconds: f64,
}

impl OracleOutcome {
    /// Relative change of the raw value under one panel doubling.
    pub fn doubling_change(&self) -> f64 {
        ((self.levels[2] - self.levels[1]) / self.levels[2]).abs()
    }
}

/// Nested Gauss-Legendre of the integrand, inner panels split at its
/// thresholds. Each row of the outer integral grows like `ln(1 - v)` near
/// `v = 1`, which makes the raw error proportional to the panel width; one
/// Richardson step `2 Q(2p) - Q(p)` removes that term. The value uses the
/// finest pair, the error estimate compares it with the coarser pair.
pub fn oracle(config: &RunConfig, mass_ratio: f64, registry: &ProcessRegistry) -> Result<OracleOutcome, PipelineError> {
    config.validate()?;
    let start = Instant::now();
    let integrand = Integrand::new(&config.process_spec(mass_ratio)?, registry)?;
    let failure = RefCell::new(None);
    let mut f = |u: f64, v: f64| {
        integrand.eval([u, v]).unwrap_or_else(|e| {
            failure.borrow_mut().get_or_insert(e);
            f64::NAN
        })
    };
    let breakpoints = |v: f64| integrand.u1_breakpoints(v);
    let p = config.oracle.panels;
    let mut levels = [0.0; 3];
    let mut evaluations = 0;
    for (level, panels) in levels.iter_mut().zip([(p / 2).max(1), p, 2 * p]) {
        let r = quad::nested_gauss_fixed(&mut f, &breakpoints, config.oracle.order, panels);
        if let Some(e) = failure.borrow_mut().take() {
            return Err(e.into());
        }
        let (value, n) = r?;
        *level = value;
        evaluations += n;
    }
    let fine = 2.0 * levels[2] - levels[1];
    let coarse = if p >= 2 { 2.0 * levels[1] - levels[0] } else { levels[1] };
    let out = OracleOutcome {
        value: fine,
        error_estimate: (fine - coarse).abs(),
        levels,
        evaluations,
        seconds: start.elapsed().as_secs_f64(),
    };
    let relative = out.doubling_change();
    if !(relative < config.oracle.tolerance) {
        return Err(PipelineError::NotConverged { value: levels[2], relative });
    }
    Ok(out)
}

pub fn oracle_row(config: &RunConfig, mass_ratio: f64, o: &OracleOutcome) -> ScanRow {
    ScanRow {
        process: config.process.clone(),
        mass_ratio,
        method: Method::Oracle,
        estimate: o.value,
        half_width: o.error_estimate,
        mse: None,
        queries: o.evaluations,
        seconds: if config.record_seconds { o.seconds } else { 0.0 },
    }
}

pub fn qfiae_row(config: &RunConfig, mass_ratio: f64, fit: &FitOutcome, i: &IntegrateOutcome) -> ScanRow {
    ScanRow {
        process: config.process.clone(),
        mass_ratio,
        method: Method::Qfiae,
        estimate: i.estimate,
        half_width: i.half_width,
        mse: Some(fit.mse),
        queries: i.report.oracle_queries(),
        seconds: if config.record_seconds { fit.seconds + i.seconds } else { 0.0 },
    }
}

/// Row recording a failed stage: no estimate and unbounded uncertainty.
pub fn failed_row(config: &RunConfig, mass_ratio: f64, method: Method) -> ScanRow {
    ScanRow {
        process: config.process.clone(),
        mass_ratio,
        method,
        estimate: f64::NAN,
        half_width: f64::INFINITY,
        mse: None,
        queries: 0,
        seconds: 0.0,
    }
}

#[derive(Debug, Default)]
pub struct ScanReport {
    pub rows: Vec<ScanRow>,
    /// `(mass_ratio, method, message)` for every flagged row.
    pub failures: Vec<(f64, Method, String)>,
}

/// Oracle and QFIAE rows for every configured mass ratio. Failures are
/// recorded and the scan moves on.
pub fn scan(config: &RunConfig, registry: &ProcessRegistry, mut progress: impl FnMut(&ScanRow)) -> ScanReport {
    let mut report = ScanReport::default();
    let mut push = |report: &mut ScanReport, row: ScanRow, err: Option<PipelineError>| {
        if let Some(e) = err {
            report.failures.push((row.mass_ratio, row.method, e.to_string()));
        }
        progress(&row);
        report.rows.push(row);
    };
    for &m in &config.mass_scan {
        match oracle(config, m, registry) {
            Ok(o) => push(&mut report, oracle_row(config, m, &o), None),
            Err(e) => push(&mut report, failed_row(config, m, Method::Oracle), Some(e)),
        }
        let q = fit(config, m, registry).and_then(|f| integrate_model(config, &f.model).map(|i| (f, i)));
        match q {
            Ok((f, i)) => push(&mut report, qfiae_row(config, m, &f, &i), None),
            Err(e) => push(&mut report, failed_row(config, m, Method::Qfiae), Some(e)),
        }
    }
    report
}

/// `value(uncertainty)` with two significant digits of uncertainty, as in
/// `0.0439(15)`.
pub fn paren_notation(value: f64, half_width: f64) -> String {
    if !value.is_finite() {
        return "failed".to_string();
    }
    if !(half_width > 0.0 && half_width.is_finite()) {
        return format!("{value:.6e}");
    }
    let exp = half_width.log10().floor() as i32;
    let decimals = (1 - exp).max(0) as usize;
    let mut digits = (half_width * 10f64.powi(decimals as i32)).round() as u64;
    if decimals == 0 {
        digits = half_width.round() as u64;
    }
    format!("{value:.decimals$}({digits})")
}

/// Plain-text table of a scan, one line per row.
pub fn summary_table(rows: &[ScanRow]) -> String {
    let mut out = format!("{:<8} {:>10} {:<7} {:>28} {:>10} {:>10}\n", "process", "mass_ratio", "method", "estimate", "mse", "queries");
    for r in rows {
        let mse = r.mse.map_or("-".to_string(), |m| format!("{m:.2e}"));
        out.push_str(&format!(
            "{:<8} {:>10} {:<7} {:>28} {:>10} {:>10}\n",
            r.process,
            r.mass_ratio,
            r.method.as_str(),
            paren_notation(r.estimate, r.half_width),
            mse,
            r.queries
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vqc::{AnsatzSpec, ParamSet};

    #[test]
    fn paren_notation_examples() {
        assert_eq!(paren_notation(0.0439, 0.0015), "0.0439(15)");
        assert_eq!(paren_notation(0.0205, 0.00012), "0.02050(12)");
        assert_eq!(paren_notation(12.3, 4.0), "12.3(40)");
        assert_eq!(paren_notation(1234.0, 56.0), "1234(56)");
        assert_eq!(paren_notation(0.5, 0.0), "5.000000e-1");
        assert_eq!(paren_notation(f64::NAN, f64::INFINITY), "failed");
    }

    #[test]
    fn constant_model_integrates_exactly() {
        let ansatz = AnsatzSpec::with_layers(2);
        let mut model = QnnModel::new(ansatz, ParamSet::random(&ansatz, 2)).unwrap();
        model.output_scale = 0.0;
        model.output_offset = 0.75;
        let config = RunConfig { exact: true, ..RunConfig::default() };
        let out = integrate_model(&config, &model).unwrap();
        assert!((out.estimate - 0.75).abs() < 1e-12);
        assert_eq!(out.half_width, 0.0);
        assert_eq!(out.out_of_band, 0.0);
    }

    #[test]
    fn input_scale_rescales_the_box() {
        let ansatz = AnsatzSpec::with_layers(1);
        let mut model = QnnModel::random(ansatz, 5).unwrap();
        model.input_scale = vec![2.0, 0.5];
        let config = RunConfig { exact: true, n_fourier: 3, ..RunConfig::default() };
        let out = integrate_model(&config, &model).unwrap();
        let r = quad::gauss_2d(|a, b| model.forward(&[a, b]).unwrap(), 16, 4).unwrap();
        assert!((out.analytic - r.value).abs() < 1e-10, "{} vs {}", out.analytic, r.value);
        assert!((out.estimate - out.analytic).abs() < 1e-10);
    }

    #[test]
    fn oracle_rejects_unknown_process() {
        let config = RunConfig { process: "nope".into(), ..RunConfig::default() };
        assert!(matches!(oracle(&config, 0.2, &ProcessRegistry::default()), Err(PipelineError::Ltd(_))));
    }
}
