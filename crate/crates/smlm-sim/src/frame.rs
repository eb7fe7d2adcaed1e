//! Pixel grids.
//!
//! Two frame flavors move through the pipeline: expected-photon frames
//! (`Frame<f64>`, the noiseless rendering) and camera-count frames
//! (`Frame<u16>`, quantized ADU). Keeping them as distinct types makes
//! "noise applied twice" and "fit run on an expected frame" compile errors
//! instead of runtime surprises.

use crate::geometry::FrameGeometry;

/// A row-major 2D pixel grid tied to a [`FrameGeometry`].
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<T> {
    geometry: FrameGeometry,
    pixels: Vec<T>,
}

/// Noiseless expected photons per pixel.
pub type ExpectedFrame = Frame<f64>;

/// Quantized camera counts (ADU) per pixel.
pub type CountsFrame = Frame<u16>;

impl<T: Copy + Default> Frame<T> {
    pub fn zeros(geometry: FrameGeometry) -> Self {
        Frame {
            geometry,
            pixels: vec![T::default(); geometry.width_px * geometry.height_px],
        }
    }

    pub fn from_pixels(geometry: FrameGeometry, pixels: Vec<T>) -> Self {
        assert_eq!(
            pixels.len(),
            geometry.width_px * geometry.height_px,
            "pixel buffer does not match geometry"
        );
        Frame { geometry, pixels }
    }

    pub fn geometry(&self) -> &FrameGeometry {
        &self.geometry
    }

    pub fn width(&self) -> usize {
        self.geometry.width_px
    }

    pub fn height(&self) -> usize {
        self.geometry.height_px
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.pixels[y * self.geometry.width_px + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.pixels[y * self.geometry.width_px + x] = v;
    }

    pub fn pixels(&self) -> &[T] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [T] {
        &mut self.pixels
    }
}

impl ExpectedFrame {
    /// Sum of all pixel values (total expected photons in the frame).
    pub fn total(&self) -> f64 {
        self.pixels.iter().sum()
    }

    pub fn add_constant(&mut self, c: f64) {
        for p in &mut self.pixels {
            *p += c;
        }
    }

    /// Pixelwise `self + other`; panics if geometries differ.
    pub fn add_frame(&mut self, other: &ExpectedFrame) {
        assert_eq!(self.geometry, other.geometry);
        for (a, b) in self.pixels.iter_mut().zip(&other.pixels) {
            *a += b;
        }
    }
}
