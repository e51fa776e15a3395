//! Command-line front end: degrade, denoise, metrics, bench, synth.
//!
//! Exit codes: 0 on success, 1 on user/input errors, 2 when the solver
//! detects a non-finite value mid-run.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lprestore::bench::{
    emit_table, parse_spec_file, preset_specs, run_experiment, ExperimentRun, Preset, TableFormat,
};
use lprestore::degrade::{degrade, Blur, DegradationSpec};
use lprestore::error::Error;
use lprestore::img::{load_image, make_synthetic, save_image};
use lprestore::metrics::{psnr, snr, ssim, ssim_global};
use lprestore::solver::{self, SolverConfig};

#[derive(Parser)]
#[command(
    name = "lprestore",
    version,
    about = "Poisson noise removal and deblurring with an l2-lp augmented Lagrangian solver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the deterministic synthetic test image.
    Synth {
        /// Output image (.pgm or .png).
        output: PathBuf,
        /// Side length in pixels (at least 32).
        #[arg(long, default_value_t = 128)]
        size: usize,
    },

    /// Blur an image and add Poisson noise.
    Degrade {
        /// Input image (.pgm or .png, 8-bit grayscale).
        input: PathBuf,
        /// Output image (.pgm or .png).
        output: PathBuf,
        #[command(flatten)]
        degradation: DegradationArgs,
    },

    /// Restore a degraded image.
    Denoise {
        /// Input image (.pgm or .png, 8-bit grayscale).
        input: PathBuf,
        /// Output image (.pgm or .png).
        output: PathBuf,
        /// Base parameterisation: our (mu=0.01, p=1/2), l2l1 (mu=0.01, p=1),
        /// or tv (mu=0, p=1). Individual flags below override it.
        #[arg(long, default_value = "our")]
        model: String,
        /// Smoothness weight (default 0.01; 0 under --model tv).
        #[arg(long)]
        mu: Option<f64>,
        /// Fidelity weight (default 6).
        #[arg(long)]
        lambda: Option<f64>,
        /// Shrinkage exponent in (0,1] (default 1/2; 1 under tv/l2l1).
        #[arg(long)]
        p: Option<f64>,
        /// Gradient-split penalty, also used for gamma2 (default 0.5).
        #[arg(long)]
        gamma1: Option<f64>,
        /// Blur-split penalty (default 30).
        #[arg(long)]
        gamma3: Option<f64>,
        /// Relative-change stopping tolerance (default 1e-4).
        #[arg(long)]
        tol: Option<f64>,
        /// Iteration cap (default 250).
        #[arg(long)]
        max_iter: Option<usize>,
        /// Blur to invert: none, motion:LEN:ANGLE, or gaussian:RADIUS:SIGMA
        /// (e.g. gaussian:1:3 for the compact 3x3 reading of a radius-3 blur).
        #[arg(long, default_value = "none")]
        blur: String,
        /// Write the per-iteration trace CSV here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },

    /// Print PSNR, SNR, and SSIM of a restored image against a reference.
    Metrics {
        restored: PathBuf,
        reference: PathBuf,
        /// Use the single-window whole-image SSIM instead of the
        /// 11x11 Gaussian-windowed default.
        #[arg(long)]
        global: bool,
    },

    /// Run a bundled preset or a spec file and emit a quality table.
    Bench {
        /// Bundled preset: table1 (noise only), table2 (motion blur),
        /// table3 (gaussian blur).
        #[arg(long, conflicts_with = "spec")]
        preset: Option<String>,
        /// Flat key-value experiment file (see --help of this subcommand).
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Table format: csv or markdown.
        #[arg(long, default_value = "csv")]
        format: String,
        /// Write the table here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Write per-cell convergence traces into this directory.
        #[arg(long)]
        trace_dir: Option<PathBuf>,
        /// Directory searched for user-supplied lena/peppers images.
        #[arg(long)]
        image_dir: Option<PathBuf>,
    },
}

/// Degradation flags shared by `degrade`.
#[derive(Args)]
struct DegradationArgs {
    /// Blur: none, motion:LEN:ANGLE, or gaussian:RADIUS:SIGMA.
    #[arg(long, default_value = "none")]
    blur: String,
    /// Poisson peak: pixel value v becomes a draw with mean v*peak/255,
    /// scaled back. 255 uses pixel values directly; inf disables noise.
    #[arg(long, default_value_t = 255.0)]
    peak: f64,
    /// RNG seed; the same seed reproduces the same image bit for bit.
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's rendering includes usage; keep its output but pin the
            // user-error exit code.
            eprint!("{e}");
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::NonFinite { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn dispatch(command: Command) -> Result<(), Error> {
    match command {
        Command::Synth { output, size } => {
            let grid = make_synthetic(size)?;
            save_image(&grid, &output)
        }
        Command::Degrade { input, output, degradation } => {
            let blur: Blur = degradation.blur.parse()?;
            let clean = load_image(&input)?;
            let spec = DegradationSpec {
                blur,
                noise_peak: degradation.peak,
                seed: degradation.seed,
            };
            let observed = degrade(&clean, &spec)?;
            save_image(&observed, &output)
        }
        Command::Denoise {
            input,
            output,
            model,
            mu,
            lambda,
            p,
            gamma1,
            gamma3,
            tol,
            max_iter,
            blur,
            trace,
        } => {
            let mut cfg = match model.as_str() {
                "our" => SolverConfig::our_model(6.0),
                "l2l1" => SolverConfig::l2_l1(6.0),
                "tv" => SolverConfig::tv(6.0),
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "bad model '{other}': expected our, l2l1, or tv"
                    )))
                }
            };
            if let Some(mu) = mu {
                cfg.mu = mu;
            }
            if let Some(lambda) = lambda {
                cfg.lambda = lambda;
            }
            if let Some(p) = p {
                cfg.p = p;
            }
            if let Some(gamma1) = gamma1 {
                cfg.gamma1 = gamma1;
                cfg.gamma2 = gamma1;
            }
            if let Some(gamma3) = gamma3 {
                cfg.gamma3 = gamma3;
            }
            if let Some(tol) = tol {
                cfg.eps_tol = tol;
            }
            if let Some(max_iter) = max_iter {
                cfg.max_iter = max_iter;
            }
            cfg.validate()?;
            let blur: Blur = blur.parse()?;
            let psf = blur.to_psf()?;
            let observed = load_image(&input)?;
            let (restored, run_trace) = solver::run(&observed, &psf, &cfg)?;
            save_image(&restored, &output)?;
            if let Some(trace_path) = trace {
                let mut buf = Vec::new();
                run_trace.write_csv(&mut buf).expect("writing to memory");
                fs::write(&trace_path, buf)
                    .map_err(|source| Error::Write { path: trace_path, source })?;
            }
            let last = run_trace.last().expect("at least one iteration");
            println!(
                "iterations={} rel_change={:.3e}",
                run_trace.iterations(),
                last.rel_change
            );
            Ok(())
        }
        Command::Metrics { restored, reference, global } => {
            let a = load_image(&restored)?;
            let b = load_image(&reference)?;
            let s = if global { ssim_global(&a, &b)? } else { ssim(&a, &b)? };
            println!(
                "PSNR={:.2}, SNR={:.2}, SSIM={:.4}",
                psnr(&a, &b)?,
                snr(&a, &b)?,
                s
            );
            Ok(())
        }
        Command::Bench { preset, spec, format, output, trace_dir, image_dir } => {
            let format: TableFormat = format.parse()?;
            let specs = match (preset, spec) {
                (Some(preset), None) => {
                    let preset: Preset = preset.parse()?;
                    let (specs, warnings) = preset_specs(preset, image_dir.as_deref());
                    for w in warnings {
                        eprintln!("{w}");
                    }
                    specs
                }
                (None, Some(path)) => {
                    let text = fs::read_to_string(&path)
                        .map_err(|source| Error::Read { path, source })?;
                    vec![parse_spec_file(&text)?]
                }
                _ => {
                    return Err(Error::InvalidParameter(
                        "bench needs exactly one of --preset or --spec".into(),
                    ))
                }
            };

            let mut rows = Vec::new();
            for spec in &specs {
                let ExperimentRun { rows: cell_rows, failures, traces } = run_experiment(spec)?;
                for failure in failures {
                    eprintln!(
                        "warning: {}/{} failed: {}",
                        failure.image, failure.model, failure.reason
                    );
                }
                if let Some(dir) = &trace_dir {
                    fs::create_dir_all(dir)
                        .map_err(|source| Error::Write { path: dir.clone(), source })?;
                    for (image, model, trace) in &traces {
                        let path = dir.join(format!("{image}_{model}.csv"));
                        let mut buf = Vec::new();
                        trace.write_csv(&mut buf).expect("writing to memory");
                        fs::write(&path, buf)
                            .map_err(|source| Error::Write { path, source })?;
                    }
                }
                rows.extend(cell_rows);
            }

            let table = emit_table(&rows, format);
            match output {
                Some(path) => fs::write(&path, table)
                    .map_err(|source| Error::Write { path, source })?,
                None => print!("{table}"),
            }
            Ok(())
        }
    }
}
