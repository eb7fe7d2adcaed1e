//! Emitter sampling: the two regimes that drive frame generation.
//!
//! * [`sample_csr`] draws a homogeneous Poisson point process over the 3D
//!   domain (complete spatial randomness) — the classical training
//!   hypothesis.
//! * [`build_helix_cloud`] + [`select_frame_emitters`] implement
//!   structure-based sampling: a fresh scene of helical microtubule point
//!   clouds is generated, and the frame's active emitters are a sparse
//!   random subset of it, so overlapping PSFs carry structural correlation.
//!
//! All operations are pure given an explicit [`Stream`]; the dataset
//! pipeline derives one substream per frame so results never depend on
//! worker scheduling.

use rand::seq::index::sample as index_sample;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Emitter, FrameGeometry, Point3};
use crate::rng::Stream;

/// Shape parameters of one helical microtubule scene.
///
/// A structure is a straight axis crossing the field of view with
/// `strands_per_structure` co-axial helical strands wound around it;
/// `seeds_per_structure` points are spread uniformly by arc length over the
/// strands and blurred by isotropic Gaussian jitter. `n_structures = 3,
/// strands = 1` gives the alternative "three independent single-helix
/// microtubules" reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HelixParams {
    pub n_structures: usize,
    pub seeds_per_structure: usize,
    pub strands_per_structure: usize,
    pub helix_radius_nm: f64,
    pub pitch_nm: f64,
    pub jitter_sigma_nm: f64,
}

impl Default for HelixParams {
    fn default() -> Self {
        HelixParams {
            n_structures: 3,
            seeds_per_structure: 5000,
            strands_per_structure: 3,
            helix_radius_nm: 25.0,
            pitch_nm: 300.0,
            jitter_sigma_nm: 5.0,
        }
    }
}

impl HelixParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_structures < 1 || self.seeds_per_structure < 1 || self.strands_per_structure < 1
        {
            return Err(Error::invalid("HelixParams", "all counts must be >= 1"));
        }
        if !(self.helix_radius_nm > 0.0) || !(self.pitch_nm > 0.0) {
            return Err(Error::invalid("HelixParams", "radius and pitch must be > 0"));
        }
        if !(self.jitter_sigma_nm >= 0.0) {
            return Err(Error::invalid("HelixParams", "jitter_sigma_nm must be >= 0"));
        }
        Ok(())
    }
}

/// How emitter brightness is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhotonMode {
    /// Every emitter gets exactly `mean_photons` (analytically checkable).
    Fixed,
    /// Photons ~ Gamma(shape, mean/shape): realistic brightness spread.
    Gamma,
}

/// Expected-photon model for emitter brightness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonModel {
    pub mode: PhotonMode,
    pub mean_photons: f64,
    pub gamma_shape: f64,
}

impl Default for PhotonModel {
    fn default() -> Self {
        PhotonModel {
            mode: PhotonMode::Gamma,
            mean_photons: 5000.0,
            gamma_shape: 3.0,
        }
    }
}

impl PhotonModel {
    pub fn fixed(mean_photons: f64) -> Self {
        PhotonModel {
            mode: PhotonMode::Fixed,
            mean_photons,
            gamma_shape: 3.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mean_photons > 0.0) {
            return Err(Error::invalid("PhotonModel", "mean_photons must be > 0"));
        }
        if !(self.gamma_shape > 0.0) {
            return Err(Error::invalid("PhotonModel", "gamma_shape must be > 0"));
        }
        Ok(())
    }
}

/// One generated microtubule scene: the structured pool a frame's emitters
/// are selected from.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    /// Identifier of the scene (the dataset pipeline sets it to the frame
    /// index; scenes are never reused across frames).
    pub structure_id: u64,
    pub params: HelixParams,
}

/// Poisson draw that tolerates a zero rate.
fn poisson_count(rng: &mut Stream, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let p = Poisson::new(mean).expect("positive finite Poisson mean");
    p.sample(rng) as usize
}

/// Complete spatial randomness: emitter count ~ Poisson(`density`), every
/// position independent and uniform over the full lateral extent and the
/// axial range.
pub fn sample_csr(geometry: &FrameGeometry, density: f64, rng: &mut Stream) -> Vec<Point3> {
    let n = poisson_count(rng, density);
    let (w, h) = (geometry.width_nm(), geometry.height_nm());
    (0..n)
        .map(|_| {
            Point3::new(
                rng.gen::<f64>() * w,
                rng.gen::<f64>() * h,
                geometry.z_min_nm + rng.gen::<f64>() * geometry.z_range_nm(),
            )
        })
        .collect()
}

/// Redraw budget per requested point before the generator reports a
/// degenerate geometry.
const REDRAW_CAP_PER_POINT: usize = 100;

/// Builds one microtubule scene spanning the field of view.
///
/// Each structure gets a straight axis whose endpoints sit on two opposite
/// lateral boundary faces (so the point cloud always crosses the frame) at
/// uniformly random axial offsets. Strands are phase-offset by
/// `2π/strands`, seeds are spread uniformly by arc length, jittered, then
/// clipped: z is clamped to the axial range, laterally out-of-bounds points
/// are discarded and redrawn so the final count is exact.
pub fn build_helix_cloud(
    geometry: &FrameGeometry,
    params: &HelixParams,
    rng: &mut Stream,
) -> Result<PointCloud> {
    geometry.validate()?;
    params.validate()?;

    let mut points = Vec::with_capacity(params.n_structures * params.seeds_per_structure);
    for _ in 0..params.n_structures {
        let axis = HelixAxis::sample(geometry, rng);
        sample_structure_points(geometry, params, &axis, rng, &mut points)?;
    }
    Ok(PointCloud {
        points,
        structure_id: 0,
        params: *params,
    })
}

/// A structure's straight axis, with an orthonormal frame for winding the
/// strands.
struct HelixAxis {
    start: Point3,
    dir: Point3,
    length: f64,
    u: Point3,
    v: Point3,
}

impl HelixAxis {
    fn sample(geometry: &FrameGeometry, rng: &mut Stream) -> HelixAxis {
        let (w, h) = (geometry.width_nm(), geometry.height_nm());
        let z = |rng: &mut Stream| geometry.z_min_nm + rng.gen::<f64>() * geometry.z_range_nm();
        // Crossing direction: left->right or bottom->top, endpoints uniform
        // on the two opposite faces.
        let (start, end) = if rng.gen::<bool>() {
            (
                Point3::new(0.0, rng.gen::<f64>() * h, z(rng)),
                Point3::new(w, rng.gen::<f64>() * h, z(rng)),
            )
        } else {
            (
                Point3::new(rng.gen::<f64>() * w, 0.0, z(rng)),
                Point3::new(rng.gen::<f64>() * w, h, z(rng)),
            )
        };
        let span = end.sub(start);
        let length = span.norm();
        let dir = span.scale(1.0 / length);
        // Orthonormal frame perpendicular to the axis. The axis always has a
        // lateral component, so crossing with ez is safe.
        let u = dir.cross(Point3::new(0.0, 0.0, 1.0)).normalized();
        let v = dir.cross(u);
        HelixAxis {
            start,
            dir,
            length,
            u,
            v,
        }
    }

    /// Point on strand `k` of `strands` at axis coordinate `t`.
    fn strand_point(&self, t: f64, k: usize, strands: usize, radius: f64, pitch: f64) -> Point3 {
        let phase = std::f64::consts::TAU * (t / pitch + k as f64 / strands as f64);
        self.start
            .add(self.dir.scale(t))
            .add(self.u.scale(radius * phase.cos()))
            .add(self.v.scale(radius * phase.sin()))
    }
}

fn sample_structure_points(
    geometry: &FrameGeometry,
    params: &HelixParams,
    axis: &HelixAxis,
    rng: &mut Stream,
    out: &mut Vec<Point3>,
) -> Result<()> {
    let wanted = params.seeds_per_structure;
    let cap = wanted.saturating_mul(REDRAW_CAP_PER_POINT);
    let mut accepted = 0;
    let mut attempts = 0;
    while accepted < wanted {
        attempts += 1;
        if attempts > cap {
            return Err(Error::DegenerateGeometry { attempts, wanted });
        }
        let t = rng.gen::<f64>() * axis.length;
        let k = rng.gen_range(0..params.strands_per_structure);
        let mut p = axis.strand_point(
            t,
            k,
            params.strands_per_structure,
            params.helix_radius_nm,
            params.pitch_nm,
        );
        if params.jitter_sigma_nm > 0.0 {
            let n = rand_distr::Normal::new(0.0, params.jitter_sigma_nm).unwrap();
            p.x_nm += n.sample(rng);
            p.y_nm += n.sample(rng);
            p.z_nm += n.sample(rng);
        }
        if !geometry.contains_lateral(p.x_nm, p.y_nm) {
            continue;
        }
        p.z_nm = p.z_nm.clamp(geometry.z_min_nm, geometry.z_max_nm);
        out.push(p);
        accepted += 1;
    }
    Ok(())
}

/// Picks the frame's active emitters from a scene: count ~ Poisson(`density`)
/// capped at the cloud size, chosen uniformly without replacement.
pub fn select_frame_emitters(cloud: &PointCloud, density: f64, rng: &mut Stream) -> Vec<Point3> {
    let k = poisson_count(rng, density).min(cloud.points.len());
    index_sample(rng, cloud.points.len(), k)
        .into_iter()
        .map(|i| cloud.points[i])
        .collect()
}

/// Attaches photon counts to sampled positions. `frame_id` is left at 0;
/// the dataset pipeline stamps it.
pub fn assign_photons(positions: &[Point3], model: &PhotonModel, rng: &mut Stream) -> Vec<Emitter> {
    match model.mode {
        PhotonMode::Fixed => positions
            .iter()
            .map(|&p| Emitter::new(0, p, model.mean_photons))
            .collect(),
        PhotonMode::Gamma => {
            let scale = model.mean_photons / model.gamma_shape;
            let gamma = Gamma::new(model.gamma_shape, scale).expect("validated photon model");
            positions
                .iter()
                .map(|&p| Emitter::new(0, p, gamma.sample(rng)))
                .collect()
        }
    }
}
