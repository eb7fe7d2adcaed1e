//! Thin command-line front end over the library: generate datasets, run
//! density sweeps, build/apply CSR reference curves, localize, evaluate,
//! and render reconstructions.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use smlm_sim::config::SimulationConfig;
use smlm_sim::density::build_csr_curve;
use smlm_sim::io;
use smlm_sim::metrics::MatchTolerance;
use smlm_sim::pipeline;

#[derive(Parser)]
#[command(name = "smlm-sim", version, about = "SMLM frame simulator and evaluation toolkit")]
struct Cli {
    /// TOML configuration file; absent keys take built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores). Output bytes do not depend on
    /// this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset (frames.raw + gt.csv + manifest.json).
    Generate(GenerateArgs),
    /// Generate one dataset per nominal-density target.
    Sweep(SweepArgs),
    /// Build or apply a CSR mean-NN reference curve.
    Density(DensityArgs),
    /// Run the baseline MLE localizer over a stored dataset.
    Localize(LocalizeArgs),
    /// Score predictions against ground truth.
    Evaluate(EvaluateArgs),
    /// Render a localization list as an upsampled histogram PNG.
    Render(RenderArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Override the config's emitters-per-frame density.
    #[arg(long)]
    density: Option<f64>,
    /// Override the config's frame count.
    #[arg(long)]
    frames: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    /// Output directory (one subdirectory per target).
    #[arg(long)]
    out: PathBuf,
    /// CSR reference curve (built with `density build`); defaults to an
    /// internally built curve spanning the target range.
    #[arg(long)]
    curve: Option<PathBuf>,
    /// Lowest nominal-density target.
    #[arg(long, default_value_t = 0.38)]
    min: f64,
    /// Highest nominal-density target.
    #[arg(long, default_value_t = 13.0)]
    max: f64,
    /// Number of targets (log-spaced).
    #[arg(long, default_value_t = 9)]
    count: usize,
}

#[derive(Args)]
struct DensityArgs {
    #[command(subcommand)]
    action: DensityAction,
}

#[derive(Subcommand)]
enum DensityAction {
    /// Monte Carlo a CSR density -> mean-NN curve and save it as JSON.
    Build {
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated ascending densities.
        #[arg(long, default_value = "0.3,0.5,0.8,1.3,2.0,3.2,5.0,8.0,12.0,16.0")]
        densities: String,
        #[arg(long, default_value_t = 5000)]
        mc_frames: usize,
    },
    /// Compute the nominal density of an emitter CSV through a curve.
    Apply {
        #[arg(long)]
        curve: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
}

#[derive(Args)]
struct LocalizeArgs {
    /// Dataset directory or manifest.json path.
    #[arg(long)]
    dataset: PathBuf,
    /// Output predictions CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    /// Lateral gate in nm.
    #[arg(long, default_value_t = 250.0)]
    lateral_nm: f64,
    /// Axial gate in nm.
    #[arg(long, default_value_t = 500.0)]
    axial_nm: f64,
    /// Pixel size for the sub-pixel bias histogram.
    #[arg(long, default_value_t = 100.0)]
    pixel_size_nm: f64,
    /// Optional CSR curve enabling the nominal-density field.
    #[arg(long)]
    curve: Option<PathBuf>,
    /// Write the JSON report here (stdout otherwise).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    /// Localization CSV (predictions or ground truth).
    #[arg(long)]
    pred: PathBuf,
    /// Output PNG.
    #[arg(long)]
    out: PathBuf,
    /// Sub-pixel bins per camera pixel.
    #[arg(long, default_value_t = 10)]
    upsample: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            // Machine-readable error on stderr.
            let payload = serde_json::json!({ "error": format!("{err:#}") });
            eprintln!("{payload}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(cli: &Cli) -> Result<SimulationConfig> {
    let mut config = match &cli.config {
        Some(path) => SimulationConfig::load(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => SimulationConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring thread pool")?;
    }
    let config = load_config(&cli)?;

    match &cli.command {
        Command::Generate(args) => {
            let mut config = config;
            if let Some(d) = args.density {
                config.density = d;
            }
            if let Some(n) = args.frames {
                config.n_frames = n;
            }
            let manifest = pipeline::generate_dataset(&config, &args.out)?;
            println!(
                "wrote {} frames to {} (checksum {})",
                config.n_frames,
                args.out.display(),
                manifest.checksum
            );
        }
        Command::Sweep(args) => {
            let targets = pipeline::sweep_targets(args.min, args.max, args.count);
            let curve = match &args.curve {
                Some(path) => io::load_curve(path)?,
                None => {
                    // Curve entries must bracket the targets.
                    let densities: Vec<f64> = pipeline::sweep_targets(
                        (args.min * 0.7).max(0.05),
                        args.max * 1.5,
                        14,
                    );
                    eprintln!("building CSR reference curve ({} entries)...", densities.len());
                    build_csr_curve(&config.geometry, &densities, 5000, config.master_seed ^ 0xc0_4e)?
                }
            };
            let summary = pipeline::sweep(&config, &targets, &curve, &args.out)?;
            for e in &summary.entries {
                println!(
                    "{}: target {:.3} -> configured {:.3}, measured nominal {:.3} ({} frames)",
                    e.dir, e.target_nominal, e.configured_density, e.measured_nominal, e.n_frames
                );
            }
        }
        Command::Density(args) => match &args.action {
            DensityAction::Build { out, densities, mc_frames } => {
                let densities: Vec<f64> = densities
                    .split(',')
                    .map(|s| s.trim().parse::<f64>().context("parsing --densities"))
                    .collect::<Result<_>>()?;
                let curve = build_csr_curve(&config.geometry, &densities, *mc_frames, config.master_seed)?;
                io::save_curve(&curve, out)?;
                println!("wrote curve with {} entries to {}", curve.entries.len(), out.display());
            }
            DensityAction::Apply { curve, gt } => {
                let curve = io::load_curve(curve)?;
                let emitters = io::read_emitters_csv(gt)?;
                let frames = io::group_by_frame(&emitters);
                let est = smlm_sim::density::nominal_density(&frames, &curve)?;
                if est.extrapolated {
                    eprintln!("warning: mean NN {:.1} nm is outside the curve range; extrapolating", est.mean_nn_nm);
                }
                println!(
                    "{}",
                    serde_json::json!({
                        "mean_nn_nm": est.mean_nn_nm,
                        "nominal_density": est.density,
                        "extrapolated": est.extrapolated,
                    })
                );
            }
        },
        Command::Localize(args) => {
            let manifest = if args.dataset.is_dir() {
                pipeline::manifest_path(&args.dataset)
            } else {
                args.dataset.clone()
            };
            let n = pipeline::localize_dataset(&manifest, &args.out)?;
            println!("wrote {n} localizations to {}", args.out.display());
        }
        Command::Evaluate(args) => {
            let gt = io::read_emitters_csv(&args.gt)?;
            let pred = io::read_emitters_csv(&args.pred)?;
            let tol = MatchTolerance {
                lateral_nm: args.lateral_nm,
                axial_nm: args.axial_nm,
            };
            let curve = args.curve.as_ref().map(|p| io::load_curve(p)).transpose()?;
            let eval = pipeline::evaluate(&gt, &pred, &tol, args.pixel_size_nm, curve.as_ref())?;
            for w in &eval.warnings {
                eprintln!("warning: {w}");
            }
            let json = serde_json::to_string_pretty(&eval.report)?;
            match &args.out {
                Some(path) => {
                    std::fs::write(path, &json)
                        .with_context(|| format!("writing {}", path.display()))?;
                    println!("wrote report to {}", path.display());
                }
                None => println!("{json}"),
            }
        }
        Command::Render(args) => {
            let emitters = io::read_emitters_csv(&args.pred)?;
            io::render_reconstruction(&emitters, &config.geometry, args.upsample, &args.out)?;
            println!("wrote {}", args.out.display());
        }
    }
    Ok(())
}
