//! Simulation configuration and its on-disk TOML form.
//!
//! Every field has a default, so a config file only states what it changes;
//! an empty file is the default 64x64 @ 100 nm medium-SNR CSR setup.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::error::{Error, Result};
use crate::geometry::FrameGeometry;
use crate::optics::AstigmaticPsf;
use crate::sampler::{HelixParams, PhotonModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Homogeneous Poisson process over the 3D domain.
    Csr,
    /// Fresh helix microtubule scene per frame, emitters selected from it.
    Structured,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub sampling_mode: SamplingMode,
    /// Mean emitters per frame (Poisson).
    pub density: f64,
    pub n_frames: usize,
    pub master_seed: u64,
    /// Constant background, photons per pixel.
    pub background_photons: f64,
    pub geometry: FrameGeometry,
    pub psf: AstigmaticPsf,
    pub camera: CameraModel,
    pub photon_model: PhotonModel,
    /// Only used in structured mode.
    pub helix: HelixParams,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            sampling_mode: SamplingMode::Csr,
            density: 1.0,
            n_frames: 100,
            master_seed: 0,
            background_photons: 50.0,
            geometry: FrameGeometry::default(),
            psf: AstigmaticPsf::default(),
            camera: CameraModel::default(),
            photon_model: PhotonModel::default(),
            helix: HelixParams::default(),
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_frames < 1 {
            return Err(Error::invalid("SimulationConfig", "n_frames must be >= 1"));
        }
        if !(self.density >= 0.0) {
            return Err(Error::invalid("SimulationConfig", "density must be >= 0"));
        }
        if !(self.background_photons >= 0.0) {
            return Err(Error::invalid("SimulationConfig", "background_photons must be >= 0"));
        }
        self.geometry.validate()?;
        self.psf.validate()?;
        self.camera.validate()?;
        self.photon_model.validate()?;
        self.helix.validate()?;
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: SimulationConfig = toml::from_str(text).map_err(|e| Error::Format {
            path: "<toml>".into(),
            msg: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io("read", path, e))?;
        let config: SimulationConfig = toml::from_str(&text).map_err(|e| Error::Format {
            path: path.into(),
            msg: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }
}
