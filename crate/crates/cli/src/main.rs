use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qfiae::artifact::{self, ScanRow};
use qfiae::config::{Overrides, RunConfig};
use qfiae::iqae::TermReport;
use qfiae::ltd::ProcessRegistry;
use qfiae::pipeline::{self, PipelineError};
use qfiae::selftest;

#[derive(Parser)]
#[command(name = "qfiae", version, about = "Fourier-series quantum integration of loop-tree-duality decay rates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Command {
    /// Train the surrogate model for each mass ratio and write its artifact.
    Fit,
    /// Integrate fitted models by amplitude estimation on their Fourier terms.
    Integrate {
        /// Model artifact to integrate instead of the cached fit.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Classical quadrature of the integrand.
    Oracle,
    /// Oracle and QFIAE rows for every mass ratio.
    Scan,
    /// Run the built-in invariant suites.
    Selftest,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    process: Option<String>,
    /// Replaces the configured scan; repeat for several points.
    #[arg(long = "mass-ratio", global = true)]
    mass_ratio: Vec<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    shots: Option<u64>,
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    layers: Option<usize>,
    #[arg(long = "n-fourier", global = true)]
    n_fourier: Option<usize>,
    /// Read amplitudes from the statevector.
    #[arg(long, global = true, conflicts_with = "sampled")]
    exact: bool,
    /// Estimate amplitudes from shots (default).
    #[arg(long, global = true)]
    sampled: bool,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            process: self.process.clone(),
            mass_ratios: self.mass_ratio.clone(),
            seed: self.seed,
            shots: self.shots,
            epsilon: self.epsilon,
            alpha: self.alpha,
            layers: self.layers,
            n_fourier: self.n_fourier,
            exact: if self.exact {
                Some(true)
            } else if self.sampled {
                Some(false)
            } else {
                None
            },
        }
    }

    fn load(&self) -> Result<RunConfig, PipelineError> {
        let mut config = match &self.config {
            Some(path) => RunConfig::from_toml(&pipeline::read_file(path)?)?,
            None => RunConfig::default(),
        };
        config.apply(&self.overrides());
        config.validate()?;
        Ok(config)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode, PipelineError> {
    if let Command::Selftest = cli.command {
        let results = selftest::run_all();
        print!("{}", selftest::report(&results));
        let ok = results.iter().all(|r| r.passed);
        return Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE });
    }
    let config = cli.common.load()?;
    let registry = ProcessRegistry::default();
    let out = cli.common.out.as_deref();
    match &cli.command {
        Command::Fit => fit(&config, &registry, out),
        Command::Integrate { model } => integrate(&config, &registry, model.as_deref(), out),
        Command::Oracle => oracle(&config, &registry, out),
        Command::Scan => scan(&config, &registry, out),
        Command::Selftest => unreachable!(),
    }
}

fn label(mass_ratio: f64) -> String {
    format!("m{mass_ratio}")
}

fn fit(config: &RunConfig, registry: &ProcessRegistry, out: Option<&Path>) -> Result<ExitCode, PipelineError> {
    let several = config.mass_scan.len() > 1;
    for &m in &config.mass_scan {
        let f = pipeline::fit(config, m, registry)?;
        let target = match out {
            Some(p) if several => Some(p.join(format!("model_{}.toml", label(m)))),
            Some(p) => Some(p.to_path_buf()),
            None => None,
        };
        if let Some(path) = &target {
            pipeline::write_model(path, &f.model, &f.meta)?;
        }
        let written = target.or(f.artifact.clone()).map_or("not written (set --out or artifact_dir)".into(), |p| p.display().to_string());
        println!(
            "mass_ratio {m}: mse {:.6e} (normalized {:.6e}), {} steps{}, artifact {written}",
            f.mse,
            f.meta.final_loss,
            f.meta.steps,
            if f.cached { " (cached)" } else { "" }
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn integrate(
    config: &RunConfig,
    registry: &ProcessRegistry,
    model: Option<&Path>,
    out: Option<&Path>,
) -> Result<ExitCode, PipelineError> {
    let mut jobs = Vec::new();
    if let Some(path) = model {
        let (model, meta) = pipeline::read_model(path)?;
        let m = meta.mass_ratio.unwrap_or(config.mass_scan[0]);
        let mse = meta.final_loss * model.output_scale * model.output_scale;
        jobs.push((m, pipeline::FitOutcome { model, meta, mse, seconds: 0.0, cached: true, artifact: Some(path.into()) }));
    } else {
        for &m in &config.mass_scan {
            let cached = pipeline::model_cache_path(config, m)?.is_some_and(|p| p.exists());
            if !cached || !config.reuse_artifacts {
                return Err(PipelineError::Io {
                    path: PathBuf::from(format!("<model for mass_ratio {m}>")),
                    source: io::Error::new(
                        io::ErrorKind::NotFound,
                        "no cached fit; run `qfiae fit` with artifact_dir set, or pass --model",
                    ),
                });
            }
            jobs.push((m, pipeline::fit(config, m, registry)?));
        }
    }
    let mut rows = Vec::new();
    let mut terms = Vec::new();
    for (m, f) in &jobs {
        let i = pipeline::integrate_model(config, &f.model)?;
        let mut fit = f.clone();
        fit.seconds = 0.0;
        rows.push(pipeline::qfiae_row(config, *m, &fit, &i));
        eprintln!(
            "mass_ratio {m}: {} terms, out-of-band power {:.3e}, closed form {:.9e}",
            i.report.terms.len(),
            i.out_of_band,
            i.analytic
        );
        terms.extend(i.report.terms.iter().map(|t| (*m, t.clone())));
        if let Some(dir) = &config.artifact_dir {
            let path = dir.join(format!("series_{}_n{}.txt", label(*m), i.series.n_max()));
            pipeline::write_file(&path, i.series.to_text().as_bytes())?;
        }
    }
    emit_rows(&rows, out)?;
    if let Some(path) = out {
        write_terms(&path.with_extension("terms.csv"), &terms)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn oracle(config: &RunConfig, registry: &ProcessRegistry, out: Option<&Path>) -> Result<ExitCode, PipelineError> {
    let mut rows = Vec::new();
    for &m in &config.mass_scan {
        let o = pipeline::oracle(config, m, registry)?;
        rows.push(pipeline::oracle_row(config, m, &o));
    }
    emit_rows(&rows, out)?;
    Ok(ExitCode::SUCCESS)
}

fn scan(config: &RunConfig, registry: &ProcessRegistry, out: Option<&Path>) -> Result<ExitCode, PipelineError> {
    let report = pipeline::scan(config, registry, |row| {
        eprintln!("{} {} {}", row.mass_ratio, row.method.as_str(), pipeline::paren_notation(row.estimate, row.half_width));
    });
    for (m, method, msg) in &report.failures {
        eprintln!("flagged: mass_ratio {m} {}: {msg}", method.as_str());
    }
    emit_rows(&report.rows, out)?;
    Ok(ExitCode::SUCCESS)
}

/// CSV to `out` with the summary table on stdout, or CSV on stdout when no
/// path is given.
fn emit_rows(rows: &[ScanRow], out: Option<&Path>) -> Result<(), PipelineError> {
    match out {
        Some(path) => {
            let mut buf = Vec::new();
            artifact::write_csv(&mut buf, rows)?;
            pipeline::write_file(path, &buf)?;
            print!("{}", pipeline::summary_table(rows));
        }
        None => artifact::write_csv(io::stdout().lock(), rows)?,
    }
    Ok(())
}

fn write_terms(path: &Path, terms: &[(f64, TermReport)]) -> Result<(), PipelineError> {
    let io_err = |source| PipelineError::Io { path: path.to_path_buf(), source };
    let mut f = io::BufWriter::new(File::create(path).map_err(io_err)?);
    let mut lines = vec![
        "mass_ratio,omega1,omega2,amplitude,phase,a_hat,ci_lo,ci_hi,queries,rounds,sinc_factor,skipped,estimate,half_width".to_string(),
    ];
    for (m, t) in terms {
        lines.push(format!(
            "{m},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            t.omega.0,
            t.omega.1,
            t.amplitude,
            t.phase,
            t.a_hat,
            t.ci.0,
            t.ci.1,
            t.queries,
            t.rounds,
            t.sinc_factor,
            t.skipped,
            t.estimate,
            t.half_width
        ));
    }
    for line in lines {
        writeln!(f, "{line}").map_err(io_err)?;
    }
    f.flush().map_err(io_err)
}
