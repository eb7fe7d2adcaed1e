//! Dataset orchestration: the on-the-fly generation loop, the density
//! sweep, localization over stored datasets, and evaluation.
//!
//! Generation fans out across frames; frame `i` draws everything — scene,
//! emitter selection, photons, camera noise, in that order — from
//! `substream(master_seed, i)`, and files are assembled in frame order, so
//! output bytes are independent of the worker count.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::apply_noise;
use crate::config::{SamplingMode, SimulationConfig};
use crate::density::{nominal_density, NnCurve};
use crate::error::{Error, Result};
use crate::frame::CountsFrame;
use crate::geometry::Emitter;
use crate::io::{
    fnv1a64, frames_to_bytes, group_by_frame, write_emitters_csv, DatasetManifest, FORMAT_VERSION,
};
use crate::localizer::localize_stack;
use crate::metrics::{match_frames, subpixel_bias, MatchResult, MatchTolerance, MetricsReport};
use crate::optics::render_frame;
use crate::rng::{substream, Stream};
use crate::sampler::{assign_photons, build_helix_cloud, sample_csr, select_frame_emitters};

/// Samples one frame's emitters (positions + photons) from the frame's
/// stream, stamping `frame_id`. Structured mode builds a fresh scene every
/// call; scenes are never shared between frames.
fn sample_frame(config: &SimulationConfig, frame_id: u64, rng: &mut Stream) -> Result<Vec<Emitter>> {
    let positions = match config.sampling_mode {
        SamplingMode::Csr => sample_csr(&config.geometry, config.density, rng),
        SamplingMode::Structured => {
            let mut cloud = build_helix_cloud(&config.geometry, &config.helix, rng)?;
            cloud.structure_id = frame_id;
            select_frame_emitters(&cloud, config.density, rng)
        }
    };
    let mut emitters = assign_photons(&positions, &config.photon_model, rng);
    for e in &mut emitters {
        e.frame_id = frame_id;
        assert!(
            e.validate(&config.geometry).is_ok(),
            "sampler produced an invalid emitter: {e:?}"
        );
    }
    Ok(emitters)
}

/// Ground-truth-only simulation: the sampling stage for `n_frames` frames,
/// without rendering or noise. Frame `i` of this output is identical to the
/// ground truth of frame `i` of a full [`generate_dataset`] run with the
/// same config.
pub fn simulate_emitters(config: &SimulationConfig, n_frames: usize) -> Result<Vec<Vec<Emitter>>> {
    config.validate()?;
    (0..n_frames as u64)
        .into_par_iter()
        .map(|i| sample_frame(config, i, &mut substream(config.master_seed, i)))
        .collect()
}

/// Generates a complete dataset: raw frame file, ground-truth CSV, and the
/// JSON manifest, all under `out_dir`. Byte-deterministic for a fixed
/// config regardless of thread count.
pub fn generate_dataset(config: &SimulationConfig, out_dir: &Path) -> Result<DatasetManifest> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io("create", out_dir, e))?;

    let per_frame: Vec<(Vec<Emitter>, CountsFrame)> = (0..config.n_frames as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(config.master_seed, i);
            let emitters = sample_frame(config, i, &mut rng)?;
            let expected = render_frame(
                &emitters,
                &config.geometry,
                &config.psf,
                config.background_photons,
            );
            let counts = apply_noise(&expected, &config.camera, &mut rng);
            Ok((emitters, counts))
        })
        .collect::<Result<_>>()?;

    let frames: Vec<CountsFrame> = per_frame.iter().map(|(_, f)| f.clone()).collect();
    let gt: Vec<Vec<Emitter>> = per_frame.into_iter().map(|(e, _)| e).collect();

    let frame_bytes = frames_to_bytes(&frames);
    let frame_path = out_dir.join("frames.raw");
    std::fs::write(&frame_path, &frame_bytes).map_err(|e| Error::io("write", &frame_path, e))?;

    let gt_path = out_dir.join("gt.csv");
    write_emitters_csv(&gt_path, &gt)?;

    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        config: *config,
        frame_file: "frames.raw".into(),
        gt_file: "gt.csv".into(),
        checksum: format!("{:016x}", fnv1a64(&frame_bytes)),
    };
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Localizes every frame of a stored dataset and writes predictions in the
/// ground-truth CSV format. Returns the number of localizations.
pub fn localize_dataset(manifest_path: &Path, out_csv: &Path) -> Result<usize> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let frames = crate::io::read_frames(&manifest, manifest_path)?;
    let predictions = localize_stack(&frames, &manifest.config.camera, &manifest.config.psf);
    let count = predictions.iter().map(Vec::len).sum();
    write_emitters_csv(out_csv, &predictions)?;
    Ok(count)
}

/// A full evaluation: the report, the underlying matching, and any
/// alignment warnings.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub matches: MatchResult,
    pub warnings: Vec<String>,
}

/// Matches predictions against ground truth and assembles the metrics
/// report. `curve` enables the nominal-density field (computed on the
/// ground truth); `pixel_size_nm` drives the sub-pixel bias histogram.
pub fn evaluate(
    gt: &[Emitter],
    pred: &[Emitter],
    tol: &MatchTolerance,
    pixel_size_nm: f64,
    curve: Option<&NnCurve>,
) -> Result<Evaluation> {
    tol.validate()?;
    let gt_frames = group_by_frame(gt);
    let pred_frames = group_by_frame(pred);

    let mut warnings = Vec::new();
    if gt_frames.len() != pred_frames.len() {
        warnings.push(format!(
            "frame-id ranges differ: ground truth spans {} frames, predictions span {}",
            gt_frames.len(),
            pred_frames.len()
        ));
    }

    let matches = match_frames(&gt_frames, &pred_frames, tol);
    let subpixel = match subpixel_bias(pred, pixel_size_nm, 20) {
        Ok(v) => Some(v),
        Err(Error::TooFewPredictions { min, got }) => {
            warnings.push(format!(
                "sub-pixel bias skipped: needs {min} predictions, got {got}"
            ));
            None
        }
        Err(e) => return Err(e),
    };
    let nominal = match curve {
        Some(c) => {
            let est = nominal_density(&gt_frames, c)?;
            if est.extrapolated {
                warnings.push(format!(
                    "nominal density {:.3} extrapolated beyond the curve's range",
                    est.density
                ));
            }
            Some(est.density)
        }
        None => None,
    };

    let report = MetricsReport::from_match(&matches, subpixel, nominal);
    Ok(Evaluation {
        report,
        matches,
        warnings,
    })
}

/// One dataset produced by the density sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepEntry {
    pub target_nominal: f64,
    /// Poisson density the generator was configured with (differs from the
    /// target in structured mode, where clustering raises nominal density).
    pub configured_density: f64,
    pub measured_nominal: f64,
    pub n_frames: usize,
    pub dir: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSummary {
    pub entries: Vec<SweepEntry>,
}

/// Expected NN-contributing emitters per frame at Poisson density `d`
/// (frames need >= 2 emitters to contribute).
fn nn_contrib_per_frame(d: f64) -> f64 {
    (d * (1.0 - (-d).exp())).max(1e-6)
}

/// Frames needed so the nominal-density measurement noise stays well under
/// the sweep's 10% verification band.
fn frames_for_measurement(configured_density: f64, floor: usize) -> usize {
    let wanted_distances = 2500.0;
    let frames = (wanted_distances / nn_contrib_per_frame(configured_density)).ceil() as usize;
    frames.clamp(floor.max(1), 20_000)
}

/// `count` log-spaced sweep targets across `[lo, hi]`.
pub fn sweep_targets(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(count >= 2 && lo > 0.0 && hi > lo);
    let step = (hi / lo).powf(1.0 / (count - 1) as f64);
    (0..count).map(|i| lo * step.powi(i as i32)).collect()
}

/// Finds the configured Poisson density whose *measured nominal density*
/// hits `target` in structured mode, by damped proportional iteration on
/// GT-only probe datasets.
fn calibrate_structured_density(
    base: &SimulationConfig,
    target: f64,
    curve: &NnCurve,
) -> Result<f64> {
    let mut d = target / 3.0; // clustering typically triples nominal density
    for _ in 0..10 {
        let mut probe = *base;
        probe.density = d;
        probe.master_seed = base.master_seed ^ 0x5eed_ca1b;
        let frames = simulate_emitters(&probe, frames_for_measurement(d, 1500))?;
        let est = nominal_density(&frames, curve)?;
        let ratio = target / est.density.max(1e-9);
        if (ratio - 1.0).abs() < 0.03 {
            return Ok(d);
        }
        d *= ratio.clamp(0.25, 4.0);
    }
    Err(Error::CalibrationFailed { target })
}

/// Generates one dataset per nominal-density target under `out_dir`
/// (`density_00`, `density_01`, ...), measures each dataset's nominal
/// density through `curve`, and writes a `sweep.json` summary.
pub fn sweep(
    base: &SimulationConfig,
    targets: &[f64],
    curve: &NnCurve,
    out_dir: &Path,
) -> Result<SweepSummary> {
    base.validate()?;
    curve.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io("create", out_dir, e))?;

    let mut entries = Vec::with_capacity(targets.len());
    for (i, &target) in targets.iter().enumerate() {
        let configured = match base.sampling_mode {
            SamplingMode::Csr => target,
            SamplingMode::Structured => calibrate_structured_density(base, target, curve)?,
        };
        let mut config = *base;
        config.density = configured;
        config.n_frames = frames_for_measurement(configured, base.n_frames);
        config.master_seed = base.master_seed.wrapping_add(i as u64);

        let dir_name = format!("density_{i:02}");
        let dir = out_dir.join(&dir_name);
        generate_dataset(&config, &dir)?;

        let gt = crate::io::read_emitters_csv(&dir.join("gt.csv"))?;
        let est = nominal_density(&group_by_frame(&gt), curve)?;
        entries.push(SweepEntry {
            target_nominal: target,
            configured_density: configured,
            measured_nominal: est.density,
            n_frames: config.n_frames,
            dir: dir_name,
        });
    }

    let summary = SweepSummary { entries };
    let path = out_dir.join("sweep.json");
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    std::fs::write(&path, json).map_err(|e| Error::io("write", &path, e))?;
    Ok(summary)
}

/// Path of the manifest inside a dataset directory.
pub fn manifest_path(dataset_dir: &Path) -> PathBuf {
    dataset_dir.join("manifest.json")
}
