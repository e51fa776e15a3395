//! Experiment harness: run a set of solver configurations against one
//! degraded image and emit quality rows, in the three-model layout used
//! by the bundled `table1`/`table2`/`table3` presets.
//!
//! Within one experiment the degradation is sampled once and shared by
//! every model, so the comparison sees identical noise.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use crate::degrade::{degrade, Blur, DegradationSpec};
use crate::error::{Error, Result};
use crate::img::{load_image, make_synthetic, ImageGrid};
use crate::metrics::{psnr, snr, ssim, QualityReport};
use crate::solver::{self, ConvergenceTrace, SolverConfig};

/// Where the clean image comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ImageSource {
    Synthetic(usize),
    File(PathBuf),
}

impl ImageSource {
    fn load(&self) -> Result<ImageGrid> {
        match self {
            ImageSource::Synthetic(size) => make_synthetic(*size),
            ImageSource::File(path) => load_image(path),
        }
    }
}

/// One labelled solver configuration.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub label: String,
    pub config: SolverConfig,
}

/// Output table format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(TableFormat::Csv),
            "markdown" | "md" => Ok(TableFormat::Markdown),
            other => Err(Error::InvalidParameter(format!(
                "bad format '{other}': expected csv or markdown"
            ))),
        }
    }
}

/// One experiment cell: an image, a degradation, and the models to race.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub image_label: String,
    pub image: ImageSource,
    pub degradation: DegradationSpec,
    pub models: Vec<ModelSpec>,
    pub format: TableFormat,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::InvalidParameter("experiment needs at least one model".into()));
        }
        let mut labels: Vec<&str> = self.models.iter().map(|m| m.label.as_str()).collect();
        labels.sort_unstable();
        labels.dedup();
        if labels.len() != self.models.len() {
            return Err(Error::InvalidParameter("model labels must be unique".into()));
        }
        self.degradation.validate()?;
        for m in &self.models {
            m.config.validate()?;
        }
        Ok(())
    }
}

/// One successful table row.
#[derive(Debug, Clone)]
pub struct TableRow {
    pub image: String,
    pub model: String,
    pub report: QualityReport,
}

/// One model that failed, with its reason; other rows still proceed.
#[derive(Debug, Clone)]
pub struct RowFailure {
    pub image: String,
    pub model: String,
    pub reason: String,
}

/// Everything produced by one experiment.
#[derive(Debug, Clone, Default)]
pub struct ExperimentRun {
    pub rows: Vec<TableRow>,
    pub failures: Vec<RowFailure>,
    pub traces: Vec<(String, String, ConvergenceTrace)>,
}

/// Degrades the image once, then runs and scores every model against the
/// clean original.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentRun> {
    spec.validate()?;
    let clean = spec.image.load()?;
    let observed = degrade(&clean, &spec.degradation)?;
    let psf = spec.degradation.blur.to_psf()?;

    let mut out = ExperimentRun::default();
    for model in &spec.models {
        let started = Instant::now();
        match solver::run(&observed, &psf, &model.config) {
            Ok((restored, trace)) => {
                let cpu_seconds = started.elapsed().as_secs_f64();
                let report = QualityReport {
                    psnr: psnr(&restored, &clean)?,
                    snr: snr(&restored, &clean)?,
                    ssim: ssim(&restored, &clean)?,
                    iterations: trace.iterations(),
                    cpu_seconds,
                };
                out.rows.push(TableRow {
                    image: spec.image_label.clone(),
                    model: model.label.clone(),
                    report,
                });
                out.traces.push((spec.image_label.clone(), model.label.clone(), trace));
            }
            Err(e) => out.failures.push(RowFailure {
                image: spec.image_label.clone(),
                model: model.label.clone(),
                reason: e.to_string(),
            }),
        }
    }
    Ok(out)
}

fn format_db(v: f64) -> String {
    format!("{v:.2}")
}

/// Renders rows with the fixed column order
/// `Image, Model, PSNR, SNR, SSIM, Iterations, CPU`; PSNR/SNR to two
/// decimals, SSIM to four, CPU seconds to two.
pub fn emit_table(rows: &[TableRow], format: TableFormat) -> String {
    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            out.push_str("Image,Model,PSNR,SNR,SSIM,Iterations,CPU\n");
            for r in rows {
                out.push_str(&format!(
                    "{},{},{},{},{:.4},{},{:.2}\n",
                    r.image,
                    r.model,
                    format_db(r.report.psnr),
                    format_db(r.report.snr),
                    r.report.ssim,
                    r.report.iterations,
                    r.report.cpu_seconds
                ));
            }
        }
        TableFormat::Markdown => {
            out.push_str("| Image | Model | PSNR | SNR | SSIM | Iterations | CPU |\n");
            out.push_str("|---|---|---|---|---|---|---|\n");
            for r in rows {
                out.push_str(&format!(
                    "| {} | {} | {} | {} | {:.4} | {} | {:.2} |\n",
                    r.image,
                    r.model,
                    format_db(r.report.psnr),
                    format_db(r.report.snr),
                    r.report.ssim,
                    r.report.iterations,
                    r.report.cpu_seconds
                ));
            }
        }
    }
    out
}

/// The bundled experiment presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Poisson noise only.
    Table1,
    /// Motion blur (length 10, 90 degrees) plus Poisson noise.
    Table2,
    /// Gaussian blur (radius 3, sigma 3) plus Poisson noise.
    Table3,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table1" => Ok(Preset::Table1),
            "table2" => Ok(Preset::Table2),
            "table3" => Ok(Preset::Table3),
            other => Err(Error::InvalidParameter(format!(
                "bad preset '{other}': expected table1, table2, or table3"
            ))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preset::Table1 => write!(f, "table1"),
            Preset::Table2 => write!(f, "table2"),
            Preset::Table3 => write!(f, "table3"),
        }
    }
}

const PRESET_SEED: u64 = 42;

fn three_models(lambda: f64, gamma3: f64) -> Vec<ModelSpec> {
    let with_gamma3 = |mut cfg: SolverConfig| {
        cfg.gamma3 = gamma3;
        cfg
    };
    vec![
        ModelSpec { label: "tv".into(), config: with_gamma3(SolverConfig::tv(lambda)) },
        ModelSpec { label: "l2l1".into(), config: with_gamma3(SolverConfig::l2_l1(lambda)) },
        ModelSpec { label: "our".into(), config: with_gamma3(SolverConfig::our_model(lambda)) },
    ]
}

fn find_user_image(image_dir: &Path, stem: &str) -> Option<PathBuf> {
    for ext in ["pgm", "png"] {
        let candidate = image_dir.join(format!("{stem}.{ext}"));
        if candidate.is_file() {
            return Some(candidate);
        }
    }
    None
}

/// Expands a preset into per-image experiment specs. User-supplied
/// `lena`/`peppers` files are picked up from `image_dir` when present;
/// missing ones are skipped with a warning so the synthetic cell always
/// runs.
pub fn preset_specs(preset: Preset, image_dir: Option<&Path>) -> (Vec<ExperimentSpec>, Vec<String>) {
    // (image slot, fidelity weight, gamma3) per preset.
    let (blur, cells): (Blur, [(&str, f64, f64); 3]) = match preset {
        Preset::Table1 => (
            Blur::None,
            [("synthetic", 6.0, 30.0), ("lena", 7.0, 30.0), ("peppers", 5.0, 30.0)],
        ),
        Preset::Table2 => (
            Blur::Motion { length: 10.0, angle_deg: 90.0 },
            [("synthetic", 8.0, 30.0), ("lena", 8.0, 30.0), ("peppers", 10.0, 30.0)],
        ),
        Preset::Table3 => (
            Blur::Gaussian { radius: 3, sigma: 3.0 },
            [("synthetic", 8.0, 30.0), ("lena", 6.0, 30.0), ("peppers", 6.0, 25.0)],
        ),
    };

    let dir = image_dir.unwrap_or(Path::new("."));
    let mut specs = Vec::new();
    let mut warnings = Vec::new();
    for (label, lambda, gamma3) in cells {
        let source = if label == "synthetic" {
            ImageSource::Synthetic(128)
        } else if let Some(path) = find_user_image(dir, label) {
            ImageSource::File(path)
        } else {
            warnings.push(format!(
                "warning: no {label}.pgm or {label}.png under {}; skipping the {label} rows",
                dir.display()
            ));
            continue;
        };
        specs.push(ExperimentSpec {
            image_label: label.to_string(),
            image: source,
            degradation: DegradationSpec { blur, noise_peak: 255.0, seed: PRESET_SEED },
            models: three_models(lambda, gamma3),
            format: TableFormat::Csv,
        });
    }
    (specs, warnings)
}

/// Parses the flat key-value experiment format:
///
/// ```text
/// # comment
/// image  = synthetic:128          (or a .pgm/.png path)
/// blur   = none                   (none | motion:LEN:ANGLE | gaussian:RADIUS:SIGMA)
/// peak   = 255                    (Poisson peak; inf for no noise)
/// seed   = 42
/// format = csv                    (csv | markdown)
/// model  = our,lambda=6           (repeatable: tv|l2l1|our, then key=value
///                                  overrides of mu,p,lambda,gamma1,gamma3,
///                                  tol,max_iter and an optional label=...)
/// ```
pub fn parse_spec_file(text: &str) -> Result<ExperimentSpec> {
    let mut image: Option<(String, ImageSource)> = None;
    let mut blur = Blur::None;
    let mut peak = 255.0;
    let mut seed = PRESET_SEED;
    let mut format = TableFormat::Csv;
    let mut models: Vec<ModelSpec> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::InvalidParameter(format!("line {}: expected key = value", lineno + 1))
        })?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "image" => {
                image = Some(parse_image_source(value)?);
            }
            "blur" => blur = value.parse()?,
            "peak" => {
                peak = value.parse().map_err(|_| {
                    Error::InvalidParameter(format!("bad peak '{value}'"))
                })?;
            }
            "seed" => {
                seed = value.parse().map_err(|_| {
                    Error::InvalidParameter(format!("bad seed '{value}'"))
                })?;
            }
            "format" => format = value.parse()?,
            "model" => models.push(parse_model_spec(value)?),
            other => {
                return Err(Error::InvalidParameter(format!(
                    "line {}: unknown key '{other}'",
                    lineno + 1
                )))
            }
        }
    }

    let (image_label, image) = image.ok_or_else(|| {
        Error::InvalidParameter("spec file needs an 'image = ...' line".into())
    })?;
    if models.is_empty() {
        return Err(Error::InvalidParameter("spec file needs at least one 'model = ...' line".into()));
    }
    let spec = ExperimentSpec {
        image_label,
        image,
        degradation: DegradationSpec { blur, noise_peak: peak, seed },
        models,
        format,
    };
    spec.validate()?;
    Ok(spec)
}

fn parse_image_source(value: &str) -> Result<(String, ImageSource)> {
    if let Some(size) = value.strip_prefix("synthetic:") {
        let size = size.parse().map_err(|_| {
            Error::InvalidParameter(format!("bad synthetic size '{size}'"))
        })?;
        Ok(("synthetic".to_string(), ImageSource::Synthetic(size)))
    } else {
        let path = PathBuf::from(value);
        let label = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("image")
            .to_string();
        Ok((label, ImageSource::File(path)))
    }
}

fn parse_model_spec(value: &str) -> Result<ModelSpec> {
    let mut parts = value.split(',').map(str::trim);
    let base = parts.next().unwrap_or("");
    let mut config = match base {
        "tv" => SolverConfig::tv(6.0),
        "l2l1" => SolverConfig::l2_l1(6.0),
        "our" => SolverConfig::our_model(6.0),
        other => {
            return Err(Error::InvalidParameter(format!(
                "bad model '{other}': expected tv, l2l1, or our"
            )))
        }
    };
    let mut label = base.to_string();
    for part in parts {
        let (key, val) = part.split_once('=').ok_or_else(|| {
            Error::InvalidParameter(format!("bad model option '{part}': expected key=value"))
        })?;
        let number = || -> Result<f64> {
            val.parse().map_err(|_| {
                Error::InvalidParameter(format!("bad numeric value '{val}' for '{key}'"))
            })
        };
        match key {
            "mu" => config.mu = number()?,
            "p" => config.p = number()?,
            "lambda" => config.lambda = number()?,
            "gamma1" => {
                config.gamma1 = number()?;
                config.gamma2 = config.gamma1;
            }
            "gamma3" => config.gamma3 = number()?,
            "tol" => config.eps_tol = number()?,
            "max_iter" => {
                config.max_iter = val.parse().map_err(|_| {
                    Error::InvalidParameter(format!("bad max_iter '{val}'"))
                })?;
            }
            "label" => label = val.to_string(),
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown model option '{other}'"
                )))
            }
        }
    }
    config.validate()?;
    Ok(ModelSpec { label, config })
}
