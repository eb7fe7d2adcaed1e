//! Frame geometry, 3D points, and emitters — the domain vocabulary shared by
//! every other module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The simulated field of view: lateral pixel grid plus axial working range.
///
/// Lateral coordinates are in nanometers with the origin at the frame corner,
/// so `x ∈ [0, width_px · pixel_size_nm]`. Axial `z = 0` is the focal plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameGeometry {
    pub width_px: usize,
    pub height_px: usize,
    pub pixel_size_nm: f64,
    pub z_min_nm: f64,
    pub z_max_nm: f64,
}

impl Default for FrameGeometry {
    fn default() -> Self {
        FrameGeometry {
            width_px: 64,
            height_px: 64,
            pixel_size_nm: 100.0,
            z_min_nm: -750.0,
            z_max_nm: 750.0,
        }
    }
}

impl FrameGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.width_px < 8 || self.height_px < 8 {
            return Err(Error::invalid(
                "FrameGeometry",
                format!("frame must be at least 8x8 px, got {}x{}", self.width_px, self.height_px),
            ));
        }
        if !(self.pixel_size_nm > 0.0) {
            return Err(Error::invalid("FrameGeometry", "pixel_size_nm must be > 0"));
        }
        if !(self.z_min_nm < self.z_max_nm) {
            return Err(Error::invalid("FrameGeometry", "z_min_nm must be < z_max_nm"));
        }
        Ok(())
    }

    /// Lateral extent in nm along x.
    pub fn width_nm(&self) -> f64 {
        self.width_px as f64 * self.pixel_size_nm
    }

    /// Lateral extent in nm along y.
    pub fn height_nm(&self) -> f64 {
        self.height_px as f64 * self.pixel_size_nm
    }

    pub fn z_range_nm(&self) -> f64 {
        self.z_max_nm - self.z_min_nm
    }

    /// Whether a point lies inside the 3D domain (boundaries included).
    pub fn contains(&self, p: Point3) -> bool {
        p.x_nm >= 0.0
            && p.x_nm <= self.width_nm()
            && p.y_nm >= 0.0
            && p.y_nm <= self.height_nm()
            && p.z_nm >= self.z_min_nm
            && p.z_nm <= self.z_max_nm
    }

    /// Whether the lateral coordinates lie inside the frame.
    pub fn contains_lateral(&self, x_nm: f64, y_nm: f64) -> bool {
        x_nm >= 0.0 && x_nm <= self.width_nm() && y_nm >= 0.0 && y_nm <= self.height_nm()
    }
}

/// A 3D position in nanometers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x_nm: f64,
    pub y_nm: f64,
    pub z_nm: f64,
}

impl Point3 {
    pub fn new(x_nm: f64, y_nm: f64, z_nm: f64) -> Self {
        Point3 { x_nm, y_nm, z_nm }
    }

    pub fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x_nm - o.x_nm, self.y_nm - o.y_nm, self.z_nm - o.z_nm)
    }

    pub fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x_nm + o.x_nm, self.y_nm + o.y_nm, self.z_nm + o.z_nm)
    }

    pub fn scale(self, s: f64) -> Point3 {
        Point3::new(self.x_nm * s, self.y_nm * s, self.z_nm * s)
    }

    pub fn dot(self, o: Point3) -> f64 {
        self.x_nm * o.x_nm + self.y_nm * o.y_nm + self.z_nm * o.z_nm
    }

    pub fn cross(self, o: Point3) -> Point3 {
        Point3::new(
            self.y_nm * o.z_nm - self.z_nm * o.y_nm,
            self.z_nm * o.x_nm - self.x_nm * o.z_nm,
            self.x_nm * o.y_nm - self.y_nm * o.x_nm,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Point3 {
        let n = self.norm();
        debug_assert!(n > 0.0);
        self.scale(1.0 / n)
    }

    /// Euclidean distance to the infinite line through `a` with unit
    /// direction `dir`.
    pub fn distance_to_line(self, a: Point3, dir: Point3) -> f64 {
        let r = self.sub(a);
        r.sub(dir.scale(r.dot(dir))).norm()
    }
}

/// One fluorophore activation: a 3D position, a frame index, and an expected
/// photon count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Emitter {
    pub frame_id: u64,
    pub x_nm: f64,
    pub y_nm: f64,
    pub z_nm: f64,
    pub photons: f64,
}

impl Emitter {
    pub fn new(frame_id: u64, position: Point3, photons: f64) -> Self {
        Emitter {
            frame_id,
            x_nm: position.x_nm,
            y_nm: position.y_nm,
            z_nm: position.z_nm,
            photons,
        }
    }

    pub fn position(&self) -> Point3 {
        Point3::new(self.x_nm, self.y_nm, self.z_nm)
    }

    pub fn validate(&self, geometry: &FrameGeometry) -> Result<()> {
        if !geometry.contains(self.position()) {
            return Err(Error::invalid(
                "Emitter",
                format!(
                    "position ({:.1}, {:.1}, {:.1}) nm outside the domain",
                    self.x_nm, self.y_nm, self.z_nm
                ),
            ));
        }
        if !(self.photons >= 0.0) {
            return Err(Error::invalid("Emitter", "photons must be >= 0"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_validation_rejects_bad_fields() {
        let ok = FrameGeometry::default();
        assert!(ok.validate().is_ok());

        let mut g = ok;
        g.width_px = 7;
        assert!(g.validate().is_err());

        g = ok;
        g.pixel_size_nm = 0.0;
        assert!(g.validate().is_err());

        g = ok;
        g.z_min_nm = g.z_max_nm;
        assert!(g.validate().is_err());
    }

    #[test]
    fn containment_includes_boundaries() {
        let g = FrameGeometry::default();
        assert!(g.contains(Point3::new(0.0, 0.0, -750.0)));
        assert!(g.contains(Point3::new(6400.0, 6400.0, 750.0)));
        assert!(!g.contains(Point3::new(-0.1, 0.0, 0.0)));
        assert!(!g.contains(Point3::new(0.0, 0.0, 750.1)));
    }

    #[test]
    fn distance_to_line_on_axis_is_zero() {
        let dir = Point3::new(1.0, 1.0, 1.0).normalized();
        let a = Point3::new(5.0, 5.0, 5.0);
        let p = a.add(dir.scale(12.3));
        assert!(p.distance_to_line(a, dir) < 1e-9);
    }
}
