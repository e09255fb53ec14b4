//! `snowball` — adversarial patch placement from the command line.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on runtime failures.

use std::error::Error;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use snowball_cli::manifest::{ClassifierSpec, Manifest};
use snowball_cli::runner::{build_oracle, run_experiment, RunOptions};
use snowball_core::mask::MaskParams;
use snowball_core::{generate_mask, Raster, StubRule};

#[derive(Parser)]
#[command(
    name = "snowball",
    version,
    about = "Black-box adversarial patch placement toolkit"
)]
struct Cli {
    /// Seed recorded in run outputs for provenance. Runs are deterministic;
    /// the seed only labels the artifacts.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derive the valid-placement mask for a sign image.
    Mask {
        image: PathBuf,
        /// Output PNG (default: `<stem>.mask.png` beside the input).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Gaussian blur kernel size (odd).
        #[arg(long, default_value_t = MaskParams::default().blur_kernel)]
        blur_kernel: u32,
        /// Gaussian blur sigma.
        #[arg(long, default_value_t = MaskParams::default().blur_sigma)]
        blur_sigma: f64,
        /// Lower hysteresis threshold for edge detection.
        #[arg(long, default_value_t = MaskParams::default().canny_low)]
        canny_low: u8,
        /// Upper hysteresis threshold for edge detection.
        #[arg(long, default_value_t = MaskParams::default().canny_high)]
        canny_high: u8,
        /// Radius of the morphological closing applied to the edge map.
        #[arg(long, default_value_t = MaskParams::default().close_radius)]
        close_radius: u32,
    },
    /// Classify one image and print the verdict as JSON.
    Classify {
        image: PathBuf,
        /// Weights file for the builtin CNN (requires --classes).
        #[arg(long, requires = "classes", conflicts_with_all = ["endpoint", "stub"])]
        weights: Option<PathBuf>,
        /// Class list: one name per line, line number = class id.
        #[arg(long)]
        classes: Option<PathBuf>,
        /// Remote classifier URL (SNOWBALL_ENDPOINT overrides it).
        #[arg(long, conflicts_with = "stub")]
        endpoint: Option<String>,
        /// Request timeout in seconds for --endpoint.
        #[arg(long, default_value_t = 10.0)]
        timeout: f64,
        /// Stub rule: quadrant-brightness or mean-threshold.
        /// Used by default when no classifier is given.
        #[arg(long)]
        stub: Option<String>,
        /// Brightness threshold for the mean-threshold stub.
        #[arg(long, default_value_t = 128)]
        threshold: u8,
    },
    /// Run the batch attack described by a JSON manifest.
    Attack {
        manifest: PathBuf,
        /// Write results here instead of the manifest's output_dir.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Emit CSV and Markdown tables for a results directory.
    Report { results_dir: PathBuf },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let is_help = matches!(
                err.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            if is_help {
                print!("{err}");
                std::process::exit(0);
            }
            eprint!("{err}");
            std::process::exit(1);
        }
    };
    if let Err(err) = execute(cli) {
        eprintln!("error: {err}");
        let mut source = err.source();
        while let Some(cause) = source {
            eprintln!("  caused by: {cause}");
            source = cause.source();
        }
        std::process::exit(2);
    }
}

fn execute(cli: Cli) -> Result<(), Box<dyn Error>> {
    match cli.command {
        Command::Mask {
            image,
            out,
            blur_kernel,
            blur_sigma,
            canny_low,
            canny_high,
            close_radius,
        } => {
            let raster = Raster::load(&image)?;
            let params = MaskParams {
                blur_kernel,
                blur_sigma,
                canny_low,
                canny_high,
                close_radius,
            };
            let mask = generate_mask(&raster, &params)?;
            let out = out.unwrap_or_else(|| {
                let stem = image
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "image".into());
                image.with_file_name(format!("{stem}.mask.png"))
            });
            mask.to_raster().save(&out)?;
            let total = u64::from(mask.width()) * u64::from(mask.height());
            println!(
                "{} ({} of {} pixels valid)",
                out.display(),
                mask.valid_area(),
                total
            );
            Ok(())
        }
        Command::Classify {
            image,
            weights,
            classes,
            endpoint,
            timeout,
            stub,
            threshold,
        } => {
            let spec = classifier_spec(weights, classes, endpoint, timeout, stub, threshold)?;
            let oracle = build_oracle(&spec)?;
            let raster = Raster::load(&image)?;
            let verdict = oracle.classify(&raster)?;
            println!("{}", serde_json::to_string_pretty(&verdict)?);
            Ok(())
        }
        Command::Attack {
            manifest,
            output_dir,
        } => {
            let manifest = Manifest::load(&manifest)?;
            let summary = run_experiment(
                &manifest,
                &RunOptions {
                    seed: cli.seed,
                    output_dir,
                },
            )?;
            println!(
                "{}: wrote {} of {} cells ({} groups were already complete)",
                summary.output_dir.display(),
                summary.cells_written,
                summary.cells_total,
                summary.groups_skipped
            );
            Ok(())
        }
        Command::Report { results_dir } => {
            for path in snowball_cli::report::emit_tables(&results_dir)? {
                println!("{}", path.display());
            }
            Ok(())
        }
    }
}

fn classifier_spec(
    weights: Option<PathBuf>,
    classes: Option<PathBuf>,
    endpoint: Option<String>,
    timeout: f64,
    stub: Option<String>,
    threshold: u8,
) -> Result<ClassifierSpec, Box<dyn Error>> {
    if let Some(weights) = weights {
        let classes = classes.ok_or("--weights requires --classes")?;
        return Ok(ClassifierSpec::Builtin {
            weights,
            classes,
            input: None,
        });
    }
    if let Some(endpoint) = endpoint {
        return Ok(ClassifierSpec::Remote {
            endpoint,
            timeout_secs: timeout,
        });
    }
    let rule = match stub.as_deref().unwrap_or("quadrant-brightness") {
        "quadrant-brightness" => StubRule::QuadrantBrightness,
        "mean-threshold" => StubRule::MeanThreshold { threshold },
        other => {
            return Err(format!(
                "unknown stub rule {other:?} (expected quadrant-brightness or mean-threshold)"
            )
            .into())
        }
    };
    Ok(ClassifierSpec::Stub { rule })
}
