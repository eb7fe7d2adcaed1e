//! Camera model: expected photons -> noisy integer counts -> photon
//! estimates.
//!
//! The chain is the standard sCMOS-style model: shot noise on detected
//! electrons, Gaussian read noise, linear gain, a baseline offset, and
//! 16-bit quantization. EM-gain cascades, dark current, and per-pixel gain
//! maps are out of scope.

use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{CountsFrame, ExpectedFrame, Frame};
use crate::rng::Stream;

const ADU_MAX: f64 = 65_535.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    /// Read noise RMS in electrons.
    pub read_noise_e: f64,
    /// Conversion gain in ADU per electron.
    pub gain_adu_per_e: f64,
    /// Constant offset added before quantization, in ADU.
    pub baseline_adu: f64,
    /// Fraction of expected photons converted to electrons, in (0, 1].
    pub quantum_efficiency: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        CameraModel {
            read_noise_e: 3.0,
            gain_adu_per_e: 1.0,
            baseline_adu: 100.0,
            quantum_efficiency: 1.0,
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.read_noise_e >= 0.0) {
            return Err(Error::invalid("CameraModel", "read_noise_e must be >= 0"));
        }
        if !(self.gain_adu_per_e > 0.0) {
            return Err(Error::invalid("CameraModel", "gain_adu_per_e must be > 0"));
        }
        if !(self.baseline_adu >= 0.0) {
            return Err(Error::invalid("CameraModel", "baseline_adu must be >= 0"));
        }
        if !(self.quantum_efficiency > 0.0 && self.quantum_efficiency <= 1.0) {
            return Err(Error::invalid("CameraModel", "quantum_efficiency must be in (0, 1]"));
        }
        Ok(())
    }
}

/// Simulates the detector: per pixel, electrons ~ Poisson(qe * mu), then
/// `round(gain * (electrons + N(0, read_noise)) + baseline)` clamped to the
/// 16-bit range. Pixels are processed in row-major order, so a given stream
/// maps to exactly one output frame.
pub fn apply_noise(expected: &ExpectedFrame, cam: &CameraModel, rng: &mut Stream) -> CountsFrame {
    let read = if cam.read_noise_e > 0.0 {
        Some(Normal::new(0.0, cam.read_noise_e).expect("validated read noise"))
    } else {
        None
    };
    let pixels = expected
        .pixels()
        .iter()
        .map(|&mu| {
            debug_assert!(mu >= 0.0, "expected frame must be non-negative");
            let rate = cam.quantum_efficiency * mu;
            let electrons = if rate > 0.0 {
                Poisson::new(rate).expect("positive rate").sample(rng)
            } else {
                0.0
            };
            let noisy = match &read {
                Some(n) => electrons + n.sample(rng),
                None => electrons,
            };
            let adu = (cam.gain_adu_per_e * noisy + cam.baseline_adu).round();
            adu.clamp(0.0, ADU_MAX) as u16
        })
        .collect();
    Frame::from_pixels(*expected.geometry(), pixels)
}

/// Inverts the deterministic part of the chain: photon estimate
/// `max(0, (adu - baseline) / gain)` per pixel.
pub fn photons_from_adu(counts: &CountsFrame, cam: &CameraModel) -> ExpectedFrame {
    let pixels = counts
        .pixels()
        .iter()
        .map(|&adu| ((adu as f64 - cam.baseline_adu) / cam.gain_adu_per_e).max(0.0))
        .collect();
    Frame::from_pixels(*counts.geometry(), pixels)
}
