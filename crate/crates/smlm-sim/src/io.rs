//! File formats.
//!
//! * Frames: raw little-endian u16 pixels, row-major, frames concatenated,
//!   with a JSON manifest carrying the generating config, frame count, a
//!   format version, and an FNV-1a checksum of the frame bytes. Bit-exact
//!   and dependency-free on the reader side.
//! * Emitter lists (ground truth and predictions): CSV with the mandatory
//!   header `frame,x_nm,y_nm,z_nm,photons`, positions at 0.001 nm,
//!   photons at 0.01.
//! * CSR reference curves and metric reports: versioned JSON documents.
//! * Reconstructions: upsampled 2D histograms written as 8-bit PNG.

use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::SimulationConfig;
use crate::density::NnCurve;
use crate::error::{Error, Result};
use crate::frame::{CountsFrame, Frame};
use crate::geometry::{Emitter, FrameGeometry};
use crate::metrics::MetricsReport;

pub const FORMAT_VERSION: u32 = 1;
pub const CSV_HEADER: &str = "frame,x_nm,y_nm,z_nm,photons";

/// FNV-1a 64-bit hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Sidecar manifest for one generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub config: SimulationConfig,
    pub frame_file: String,
    pub gt_file: String,
    /// FNV-1a 64-bit hash of the raw frame bytes, hex encoded.
    pub checksum: String,
}

impl DatasetManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, json).map_err(|e| Error::io("write", path, e))
    }

    pub fn load(path: &Path) -> Result<DatasetManifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io("read", path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.into(),
            msg: e.to_string(),
        })
    }

    /// Path of the frame file relative to the manifest's directory.
    pub fn frame_path(&self, manifest_path: &Path) -> PathBuf {
        manifest_path.parent().unwrap_or(Path::new(".")).join(&self.frame_file)
    }

    pub fn gt_path(&self, manifest_path: &Path) -> PathBuf {
        manifest_path.parent().unwrap_or(Path::new(".")).join(&self.gt_file)
    }
}

/// Serializes frames as raw little-endian u16, row-major, concatenated.
pub fn frames_to_bytes(frames: &[CountsFrame]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(frames.iter().map(|f| f.pixels().len() * 2).sum());
    for frame in frames {
        for &v in frame.pixels() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    bytes
}

/// Reads a raw frame file via its manifest, verifying size and checksum.
pub fn read_frames(manifest: &DatasetManifest, manifest_path: &Path) -> Result<Vec<CountsFrame>> {
    let path = manifest.frame_path(manifest_path);
    let bytes = std::fs::read(&path).map_err(|e| Error::io("read", &path, e))?;

    let actual = format!("{:016x}", fnv1a64(&bytes));
    if actual != manifest.checksum {
        return Err(Error::ChecksumMismatch {
            path,
            expected: manifest.checksum.clone(),
            actual,
        });
    }

    let g = manifest.config.geometry;
    let frame_px = g.width_px * g.height_px;
    let expected_len = manifest.config.n_frames as u64 * frame_px as u64 * 2;
    if bytes.len() as u64 != expected_len {
        return Err(Error::FrameFileSize {
            path,
            expected: expected_len,
            actual: bytes.len() as u64,
        });
    }

    let mut frames = Vec::with_capacity(manifest.config.n_frames);
    for chunk in bytes.chunks_exact(frame_px * 2) {
        let pixels: Vec<u16> = chunk
            .chunks_exact(2)
            .map(|b| u16::from_le_bytes([b[0], b[1]]))
            .collect();
        frames.push(Frame::from_pixels(g, pixels));
    }
    Ok(frames)
}

/// Writes emitters as CSV: positions at 0.001 nm, photons at 0.01.
pub fn write_emitters_csv(path: &Path, frames: &[Vec<Emitter>]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io("create", path, e))?;
    let mut out = BufWriter::new(file);
    let io_err = |e| Error::io("write", path, e);
    writeln!(out, "{CSV_HEADER}").map_err(io_err)?;
    for frame in frames {
        for e in frame {
            writeln!(
                out,
                "{},{:.3},{:.3},{:.3},{:.2}",
                e.frame_id, e.x_nm, e.y_nm, e.z_nm, e.photons
            )
            .map_err(io_err)?;
        }
    }
    out.flush().map_err(io_err)
}

/// Reads an emitter CSV, reporting the offending line on parse errors.
pub fn read_emitters_csv(path: &Path) -> Result<Vec<Emitter>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io("open", path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    {
        let headers = reader.headers().map_err(|e| Error::CsvParse {
            path: path.into(),
            line: 1,
            msg: e.to_string(),
        })?;
        let expected: Vec<&str> = CSV_HEADER.split(',').collect();
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::CsvParse {
                path: path.into(),
                line: 1,
                msg: format!("header must be `{CSV_HEADER}`, got `{}`", headers.iter().collect::<Vec<_>>().join(",")),
            });
        }
    }

    let mut emitters = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::CsvParse {
            path: path.into(),
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let parse_err = |msg: String| Error::CsvParse {
            path: path.into(),
            line,
            msg,
        };
        if record.len() != 5 {
            return Err(parse_err(format!("expected 5 fields, got {}", record.len())));
        }
        let field = |i: usize, name: &str| -> Result<f64> {
            record[i]
                .parse::<f64>()
                .map_err(|e| parse_err(format!("bad {name} `{}`: {e}", &record[i])))
        };
        let frame_id = record[0]
            .parse::<u64>()
            .map_err(|e| parse_err(format!("bad frame `{}`: {e}", &record[0])))?;
        emitters.push(Emitter {
            frame_id,
            x_nm: field(1, "x_nm")?,
            y_nm: field(2, "y_nm")?,
            z_nm: field(3, "z_nm")?,
            photons: field(4, "photons")?,
        });
    }
    Ok(emitters)
}

/// Buckets a flat emitter list into per-frame lists indexed by frame_id.
pub fn group_by_frame(emitters: &[Emitter]) -> Vec<Vec<Emitter>> {
    let n = emitters.iter().map(|e| e.frame_id + 1).max().unwrap_or(0) as usize;
    let mut frames = vec![Vec::new(); n];
    for e in emitters {
        frames[e.frame_id as usize].push(*e);
    }
    frames
}

/// Versioned JSON wrapper for [`NnCurve`].
#[derive(Debug, Serialize, Deserialize)]
struct CurveFile {
    format_version: u32,
    geometry: FrameGeometry,
    entries: Vec<crate::density::CurveEntry>,
    mc_frames_per_entry: usize,
    seed: u64,
}

pub fn save_curve(curve: &NnCurve, path: &Path) -> Result<()> {
    let file = CurveFile {
        format_version: FORMAT_VERSION,
        geometry: curve.geometry,
        entries: curve.entries.clone(),
        mc_frames_per_entry: curve.mc_frames_per_entry,
        seed: curve.seed,
    };
    let json = serde_json::to_string_pretty(&file).expect("curve serializes");
    std::fs::write(path, json).map_err(|e| Error::io("write", path, e))
}

pub fn load_curve(path: &Path) -> Result<NnCurve> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io("read", path, e))?;
    let file: CurveFile = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.into(),
        msg: e.to_string(),
    })?;
    let curve = NnCurve {
        geometry: file.geometry,
        entries: file.entries,
        mc_frames_per_entry: file.mc_frames_per_entry,
        seed: file.seed,
    };
    curve.validate()?;
    Ok(curve)
}

pub fn save_report(report: &MetricsReport, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    std::fs::write(path, json).map_err(|e| Error::io("write", path, e))
}

/// Renders a localization list as an upsampled 2D histogram image.
///
/// Bin size is `pixel_size / upsample`; intensity is the per-bin count,
/// gamma-compressed for display and scaled to the 8-bit range.
pub fn render_reconstruction(
    emitters: &[Emitter],
    geometry: &FrameGeometry,
    upsample: usize,
    out_png: &Path,
) -> Result<()> {
    let img = reconstruction_image(emitters, geometry, upsample)?;
    img.save(out_png).map_err(|e| Error::Format {
        path: out_png.into(),
        msg: e.to_string(),
    })
}

/// The histogram rendering itself, exposed so tests can checksum pixels
/// without decoding PNGs.
pub fn reconstruction_image(
    emitters: &[Emitter],
    geometry: &FrameGeometry,
    upsample: usize,
) -> Result<image::GrayImage> {
    if upsample == 0 {
        return Err(Error::invalid("upsample", "must be >= 1"));
    }
    geometry.validate()?;
    let w = geometry.width_px * upsample;
    let h = geometry.height_px * upsample;
    let bin_nm = geometry.pixel_size_nm / upsample as f64;

    let mut counts = vec![0u32; w * h];
    for e in emitters {
        if !geometry.contains_lateral(e.x_nm, e.y_nm) {
            continue;
        }
        let bx = ((e.x_nm / bin_nm) as usize).min(w - 1);
        let by = ((e.y_nm / bin_nm) as usize).min(h - 1);
        counts[by * w + bx] += 1;
    }

    let max = counts.iter().copied().max().unwrap_or(0);
    let img = image::GrayImage::from_fn(w as u32, h as u32, |x, y| {
        let c = counts[y as usize * w + x as usize];
        if max == 0 || c == 0 {
            image::Luma([0u8])
        } else {
            // Display gamma 1/2.2 keeps dim strands visible.
            let v = (c as f64 / max as f64).powf(1.0 / 2.2);
            image::Luma([(v * 255.0).round().clamp(0.0, 255.0) as u8])
        }
    });
    Ok(img)
}
