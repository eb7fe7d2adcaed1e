//! Baseline classical localizer: candidate detection plus per-emitter
//! astigmatic Gaussian MLE.
//!
//! Each detected spot is fit independently under a Poisson likelihood with
//! model `mu_ij = N * IntegratedGaussian_ij(x, y, z) + b`. That is exactly
//! the regime where per-PSF methods are strong (sparse, well-separated
//! emitters) and is used here for end-to-end pipeline verification, not as
//! a high-density solver. Read noise is omitted from the likelihood; at the
//! default 3 e- it is a documented approximation.

use rayon::prelude::*;
use statrs::function::erf::erf;

use crate::camera::{photons_from_adu, CameraModel};
use crate::error::{Error, Result};
use crate::frame::CountsFrame;
use crate::geometry::{Emitter, Point3};
use crate::optics::{sigma_xy, AstigmaticPsf};

/// Outcome of one spot fit. Positions are frame-global nm.
#[derive(Debug, Clone, Copy)]
pub struct FitResult {
    pub x_nm: f64,
    pub y_nm: f64,
    pub z_nm: f64,
    pub photons: f64,
    pub background: f64,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
}

pub const DEFAULT_THRESHOLD_SIGMA: f64 = 4.0;
pub const DEFAULT_WINDOW_PX: usize = 15;
const MIN_WINDOW_PX: usize = 9;
const MAX_ITERATIONS: usize = 200;
const MIN_SEPARATION_PX: f64 = 5.0;
/// Accepted-step convergence thresholds: 0.01 nm on positions, 1e-6
/// relative on photons and background.
const POSITION_TOL_NM: f64 = 0.01;
const SCALE_TOL_REL: f64 = 1e-6;

/// Finds candidate emitter pixels in a camera frame.
///
/// The frame is converted to photons, smoothed with a normalized Gaussian
/// of width `sigma0 / pixel_size`, and local maxima above
/// `median + threshold_sigma * sqrt(median)` are kept with a 5-pixel
/// minimum separation (brighter wins).
pub fn detect_candidates(
    frame: &CountsFrame,
    cam: &CameraModel,
    psf: &AstigmaticPsf,
    threshold_sigma: f64,
) -> Vec<(usize, usize)> {
    let photons = photons_from_adu(frame, cam);
    let (w, h) = (photons.width(), photons.height());

    let mut sorted: Vec<f64> = photons.pixels().to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let background = sorted[sorted.len() / 2];
    let threshold = background + threshold_sigma * background.max(0.0).sqrt();

    let sigma_px = psf.sigma0_nm / frame.geometry().pixel_size_nm;
    let smoothed = gaussian_smooth(photons.pixels(), w, h, sigma_px);

    let at = |x: usize, y: usize| smoothed[y * w + x];
    let mut peaks: Vec<(usize, usize, f64)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = at(x, y);
            if v <= threshold {
                continue;
            }
            let mut is_max = true;
            'nb: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let nx = x as i64 + dx;
                    let ny = y as i64 + dy;
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    if at(nx as usize, ny as usize) > v {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                peaks.push((x, y, v));
            }
        }
    }

    // Brighter peaks claim their neighborhood first; scan order breaks ties.
    peaks.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then(a.1.cmp(&b.1)).then(a.0.cmp(&b.0)));
    let mut kept: Vec<(usize, usize)> = Vec::new();
    let min_sep_sq = MIN_SEPARATION_PX * MIN_SEPARATION_PX;
    for (x, y, _) in peaks {
        let far_enough = kept.iter().all(|&(kx, ky)| {
            let dx = kx as f64 - x as f64;
            let dy = ky as f64 - y as f64;
            dx * dx + dy * dy >= min_sep_sq
        });
        if far_enough {
            kept.push((x, y));
        }
    }
    kept
}

/// Separable Gaussian blur with kernel renormalization at the borders.
fn gaussian_smooth(pixels: &[f64], w: usize, h: usize, sigma_px: f64) -> Vec<f64> {
    let radius = (3.0 * sigma_px).ceil() as i64;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-0.5 * (k as f64 / sigma_px).powi(2)).exp())
        .collect();

    let mut tmp = vec![0.0; pixels.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for (ki, &kv) in kernel.iter().enumerate() {
                let sx = x as i64 + ki as i64 - radius;
                if sx >= 0 && sx < w as i64 {
                    acc += kv * pixels[y * w + sx as usize];
                    wsum += kv;
                }
            }
            tmp[y * w + x] = acc / wsum;
        }
    }
    let mut out = vec![0.0; pixels.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for (ki, &kv) in kernel.iter().enumerate() {
                let sy = y as i64 + ki as i64 - radius;
                if sy >= 0 && sy < h as i64 {
                    acc += kv * tmp[sy as usize * w + x];
                    wsum += kv;
                }
            }
            out[y * w + x] = acc / wsum;
        }
    }
    out
}

/// Photon-converted fit window with frame-global pixel coordinates.
struct FitWindow {
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
    photons: Vec<f64>,
    px: f64,
}

impl FitWindow {
    fn extract(frame: &CountsFrame, cam: &CameraModel, seed_px: (usize, usize), window_px: usize) -> FitWindow {
        let photons = photons_from_adu(frame, cam);
        let (fw, fh) = (frame.width(), frame.height());
        let clamp_range = |seed: usize, size: usize, limit: usize| -> (usize, usize) {
            let half = size / 2;
            let lo = seed.saturating_sub(half);
            let hi = (seed + half + 1).min(limit);
            let mut lo = lo.min(hi.saturating_sub(1));
            let mut hi = hi;
            // Grow back toward MIN_WINDOW_PX if the border clipped us.
            let min_size = MIN_WINDOW_PX.min(limit);
            while hi - lo < min_size {
                if lo > 0 {
                    lo -= 1;
                } else if hi < limit {
                    hi += 1;
                } else {
                    break;
                }
            }
            (lo, hi - lo)
        };
        let (x0, w) = clamp_range(seed_px.0, window_px, fw);
        let (y0, h) = clamp_range(seed_px.1, window_px, fh);
        let mut vals = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                vals.push(photons.get(x, y));
            }
        }
        FitWindow {
            x0,
            y0,
            w,
            h,
            photons: vals,
            px: frame.geometry().pixel_size_nm,
        }
    }
}

#[inline]
fn std_normal_cdf(t: f64) -> f64 {
    0.5 * (1.0 + erf(t * std::f64::consts::FRAC_1_SQRT_2))
}

#[inline]
fn std_normal_pdf(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (std::f64::consts::TAU).sqrt()
}

/// Per-axis integrated-Gaussian mass and its derivatives for one pixel.
/// Returns (mass, d/d_center, d/d_sigma).
#[inline]
fn axis_mass(lo: f64, hi: f64, center: f64, sigma: f64) -> (f64, f64, f64) {
    let th = (hi - center) / sigma;
    let tl = (lo - center) / sigma;
    let ph = std_normal_pdf(th);
    let pl = std_normal_pdf(tl);
    let mass = std_normal_cdf(th) - std_normal_cdf(tl);
    let d_center = -(ph - pl) / sigma;
    let d_sigma = -(th * ph - tl * pl) / sigma;
    (mass, d_center, d_sigma)
}

const MU_FLOOR: f64 = 1e-9;

/// Poisson log-likelihood and its gradient at theta = [x, y, z, n, b].
#[cfg(test)]
fn ll_and_grad(win: &FitWindow, psf: &AstigmaticPsf, theta: &[f64; 5]) -> (f64, [f64; 5]) {
    let (ll, grad, _) = ll_grad_fisher(win, psf, theta, false);
    (ll, grad)
}

/// Log-likelihood, gradient, and (optionally) the Fisher information
/// matrix, accumulated over the window.
fn ll_grad_fisher(
    win: &FitWindow,
    psf: &AstigmaticPsf,
    theta: &[f64; 5],
    with_fisher: bool,
) -> (f64, [f64; 5], [[f64; 5]; 5]) {
    let [x, y, z, n, b] = *theta;
    let (sx, sy) = sigma_xy(z, psf);
    // d sigma / dz from sigma^2 = sigma0^2 (1 + ((z -+ gamma)/d)^2).
    let s0_sq = psf.sigma0_nm * psf.sigma0_nm;
    let dsx_dz = s0_sq * (z - psf.gamma_nm) / (psf.d_nm * psf.d_nm * sx);
    let dsy_dz = s0_sq * (z + psf.gamma_nm) / (psf.d_nm * psf.d_nm * sy);

    let mut ll = 0.0;
    let mut grad = [0.0; 5];
    let mut fisher = [[0.0; 5]; 5];

    // Column masses are reused across rows.
    let cols: Vec<(f64, f64, f64)> = (0..win.w)
        .map(|ix| {
            let lo = (win.x0 + ix) as f64 * win.px;
            axis_mass(lo, lo + win.px, x, sx)
        })
        .collect();

    for iy in 0..win.h {
        let lo = (win.y0 + iy) as f64 * win.px;
        let (my, dmy_dy, dmy_dsy) = axis_mass(lo, lo + win.px, y, sy);
        for ix in 0..win.w {
            let (mx, dmx_dx, dmx_dsx) = cols[ix];
            let p = mx * my;
            let mu = (n * p + b).max(MU_FLOOR);
            let k = win.photons[iy * win.w + ix];

            ll += k * mu.ln() - mu;

            let dmu = [
                n * my * dmx_dx,
                n * mx * dmy_dy,
                n * (my * dmx_dsx * dsx_dz + mx * dmy_dsy * dsy_dz),
                p,
                1.0,
            ];
            let resid = k / mu - 1.0;
            for i in 0..5 {
                grad[i] += resid * dmu[i];
            }
            if with_fisher {
                let inv_mu = 1.0 / mu;
                for i in 0..5 {
                    for j in i..5 {
                        fisher[i][j] += dmu[i] * dmu[j] * inv_mu;
                    }
                }
            }
        }
    }
    if with_fisher {
        for i in 0..5 {
            for j in 0..i {
                fisher[i][j] = fisher[j][i];
            }
        }
    }
    (ll, grad, fisher)
}

/// Solves A s = g for a 5x5 system by Gaussian elimination with partial
/// pivoting; None if A is numerically singular.
fn solve5(a: &[[f64; 5]; 5], g: &[f64; 5]) -> Option<[f64; 5]> {
    let mut m = [[0.0f64; 6]; 5];
    for i in 0..5 {
        m[i][..5].copy_from_slice(&a[i]);
        m[i][5] = g[i];
    }
    for col in 0..5 {
        let pivot = (col..5).max_by(|&r, &s| m[r][col].abs().partial_cmp(&m[s][col].abs()).unwrap())?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        for r in col + 1..5 {
            let f = m[r][col] / m[col][col];
            for c in col..6 {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    let mut s = [0.0f64; 5];
    for i in (0..5).rev() {
        let mut acc = m[i][5];
        for j in i + 1..5 {
            acc -= m[i][j] * s[j];
        }
        s[i] = acc / m[i][i];
    }
    if s.iter().all(|v| v.is_finite()) {
        Some(s)
    } else {
        None
    }
}

/// Maximum-likelihood fit of one spot.
///
/// Damped Fisher-scoring iteration: steps are accepted only when the
/// likelihood does not decrease, so the objective ascends monotonically.
/// Convergence requires an accepted step below 0.01 nm in each position and
/// 1e-6 relative in photons and background. Hitting the iteration cap
/// flags `converged = false`; the result is still returned.
pub fn fit_mle(
    frame: &CountsFrame,
    cam: &CameraModel,
    psf: &AstigmaticPsf,
    seed_px: (usize, usize),
    window_px: usize,
) -> Result<FitResult> {
    let win = FitWindow::extract(frame, cam, seed_px, window_px);
    let total: f64 = win.photons.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateWindow);
    }

    let geometry = frame.geometry();
    // Initialization: photon-weighted centroid, median background, the rest
    // of the mass as signal.
    let mut sorted = win.photons.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let b0 = sorted[sorted.len() / 2].max(0.0);
    let n0 = (total - b0 * win.photons.len() as f64).max(1.0);
    let (mut cx, mut cy) = (0.0, 0.0);
    for iy in 0..win.h {
        for ix in 0..win.w {
            let v = win.photons[iy * win.w + ix];
            cx += v * ((win.x0 + ix) as f64 + 0.5) * win.px;
            cy += v * ((win.y0 + iy) as f64 + 0.5) * win.px;
        }
    }
    let mut theta = [cx / total, cy / total, 0.0, n0, b0];

    // Box constraints keep the model finite and the spot inside the window.
    let x_lo = win.x0 as f64 * win.px - win.px;
    let x_hi = (win.x0 + win.w + 1) as f64 * win.px;
    let y_lo = win.y0 as f64 * win.px - win.px;
    let y_hi = (win.y0 + win.h + 1) as f64 * win.px;
    let z_pad = 0.25 * geometry.z_range_nm();
    let z_lo = geometry.z_min_nm - z_pad;
    let z_hi = geometry.z_max_nm + z_pad;
    let clamp = |t: &mut [f64; 5]| {
        t[0] = t[0].clamp(x_lo, x_hi);
        t[1] = t[1].clamp(y_lo, y_hi);
        t[2] = t[2].clamp(z_lo, z_hi);
        t[3] = t[3].max(1e-3);
        t[4] = t[4].max(0.0);
    };
    clamp(&mut theta);

    let (mut ll, mut grad, mut fisher) = ll_grad_fisher(&win, psf, &theta, true);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut accepted = false;
        let mut small_proposal = false;
        for _ in 0..40 {
            let mut damped = fisher;
            for i in 0..5 {
                damped[i][i] += lambda * fisher[i][i].max(1e-12);
            }
            let Some(step) = solve5(&damped, &grad) else {
                lambda *= 10.0;
                continue;
            };
            let mut proposal = theta;
            for i in 0..5 {
                proposal[i] += step[i];
            }
            clamp(&mut proposal);
            let applied: Vec<f64> = (0..5).map(|i| proposal[i] - theta[i]).collect();
            let step_small = applied[0].abs() < POSITION_TOL_NM
                && applied[1].abs() < POSITION_TOL_NM
                && applied[2].abs() < POSITION_TOL_NM
                && applied[3].abs() < SCALE_TOL_REL * theta[3].abs().max(1e-12)
                && applied[4].abs() < SCALE_TOL_REL * theta[4].abs().max(1e-12);

            let (new_ll, new_grad, new_fisher) = ll_grad_fisher(&win, psf, &proposal, true);
            if new_ll >= ll {
                theta = proposal;
                ll = new_ll;
                grad = new_grad;
                fisher = new_fisher;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if step_small {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e12 {
                // No ascent direction left; if the proposal is already
                // below tolerance we are at the optimum.
                small_proposal = step_small;
                break;
            }
        }
        if converged {
            break;
        }
        if !accepted {
            converged = small_proposal;
            break;
        }
    }

    Ok(FitResult {
        x_nm: theta[0],
        y_nm: theta[1],
        z_nm: theta[2],
        photons: theta[3],
        background: theta[4],
        converged,
        iterations,
        log_likelihood: ll,
    })
}

/// Runs detection and fitting over a frame stack.
///
/// Non-converged and out-of-domain fits are dropped so evaluation metrics
/// are not polluted by optimizer failures. Pure per-frame work; parallel
/// across frames with deterministic ordering.
pub fn localize_stack(
    frames: &[CountsFrame],
    cam: &CameraModel,
    psf: &AstigmaticPsf,
) -> Vec<Vec<Emitter>> {
    frames
        .par_iter()
        .enumerate()
        .map(|(frame_id, frame)| {
            let geometry = frame.geometry();
            detect_candidates(frame, cam, psf, DEFAULT_THRESHOLD_SIGMA)
                .into_iter()
                .filter_map(|seed| fit_mle(frame, cam, psf, seed, DEFAULT_WINDOW_PX).ok())
                .filter(|fit| {
                    fit.converged
                        && geometry.contains(Point3::new(fit.x_nm, fit.y_nm, fit.z_nm))
                })
                .map(|fit| {
                    Emitter::new(
                        frame_id as u64,
                        Point3::new(fit.x_nm, fit.y_nm, fit.z_nm),
                        fit.photons,
                    )
                })
                .collect()
        })
        .collect()
}
