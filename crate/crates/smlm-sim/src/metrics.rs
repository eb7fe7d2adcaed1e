//! Localization evaluation: gated optimal matching, Jaccard index, RMSE
//! decompositions, efficiency scores, and the checkerboard (sub-pixel bias)
//! diagnostic.

use serde::{Deserialize, Serialize};

use crate::assignment;
use crate::error::{Error, Result};
use crate::geometry::Emitter;

/// Gating radii for ground-truth/prediction pairing. Defaults follow the
/// community challenge convention: 250 nm lateral, 500 nm axial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchTolerance {
    pub lateral_nm: f64,
    pub axial_nm: f64,
}

impl Default for MatchTolerance {
    fn default() -> Self {
        MatchTolerance {
            lateral_nm: 250.0,
            axial_nm: 500.0,
        }
    }
}

impl MatchTolerance {
    pub fn validate(&self) -> Result<()> {
        if !(self.lateral_nm > 0.0) || !(self.axial_nm > 0.0) {
            return Err(Error::invalid("MatchTolerance", "radii must be > 0"));
        }
        Ok(())
    }
}

/// One matched ground-truth/prediction pair. Indices are flat positions in
/// the concatenated input datasets (frames in order, emitters in list
/// order).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub gt_index: usize,
    pub pred_index: usize,
    pub dx_nm: f64,
    pub dy_nm: f64,
    pub dz_nm: f64,
}

impl MatchedPair {
    pub fn lateral_sq(&self) -> f64 {
        self.dx_nm * self.dx_nm + self.dy_nm * self.dy_nm
    }

    pub fn dist_3d(&self) -> f64 {
        (self.lateral_sq() + self.dz_nm * self.dz_nm).sqrt()
    }
}

/// Complete matching outcome over a dataset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchedPair>,
    pub false_positives: Vec<usize>,
    pub false_negatives: Vec<usize>,
}

impl MatchResult {
    pub fn n_tp(&self) -> usize {
        self.pairs.len()
    }

    pub fn n_fp(&self) -> usize {
        self.false_positives.len()
    }

    pub fn n_fn(&self) -> usize {
        self.false_negatives.len()
    }

    pub fn total_distance(&self) -> f64 {
        self.pairs.iter().map(|p| p.dist_3d()).sum()
    }
}

/// Matches predictions to ground truth frame by frame.
///
/// Within each frame the assignment maximizes the number of pairs passing
/// both tolerance gates and, among those, minimizes the total 3D distance
/// (optimal bipartite matching; disallowed pairs carry a dominating cost).
/// Inputs are aligned by index: `gt[f]` and `pred[f]` are frame `f`. A
/// shorter list is treated as empty frames.
pub fn match_frames(gt: &[Vec<Emitter>], pred: &[Vec<Emitter>], tol: &MatchTolerance) -> MatchResult {
    let n_frames = gt.len().max(pred.len());
    let empty: Vec<Emitter> = Vec::new();

    let mut result = MatchResult::default();
    let mut gt_offset = 0usize;
    let mut pred_offset = 0usize;
    for f in 0..n_frames {
        let g = gt.get(f).unwrap_or(&empty);
        let p = pred.get(f).unwrap_or(&empty);
        match_one_frame(g, p, tol, gt_offset, pred_offset, &mut result);
        gt_offset += g.len();
        pred_offset += p.len();
    }
    result
}

fn match_one_frame(
    gt: &[Emitter],
    pred: &[Emitter],
    tol: &MatchTolerance,
    gt_offset: usize,
    pred_offset: usize,
    out: &mut MatchResult,
) {
    if gt.is_empty() || pred.is_empty() {
        out.false_negatives.extend((0..gt.len()).map(|i| gt_offset + i));
        out.false_positives.extend((0..pred.len()).map(|j| pred_offset + j));
        return;
    }

    // A forbidden pair must cost more than any re-arrangement of allowed
    // pairs, so cardinality dominates distance.
    let max_allowed = (tol.lateral_nm * tol.lateral_nm + tol.axial_nm * tol.axial_nm).sqrt();
    let forbidden = max_allowed * (gt.len().min(pred.len()) as f64 + 1.0) + 1.0;

    let gate = |a: &Emitter, b: &Emitter| -> Option<f64> {
        let dx = a.x_nm - b.x_nm;
        let dy = a.y_nm - b.y_nm;
        let dz = a.z_nm - b.z_nm;
        let lat_sq = dx * dx + dy * dy;
        if lat_sq <= tol.lateral_nm * tol.lateral_nm && dz.abs() <= tol.axial_nm {
            Some((lat_sq + dz * dz).sqrt())
        } else {
            None
        }
    };

    // Rows must be the smaller side for the solver.
    let gt_rows = gt.len() <= pred.len();
    let (rows, cols): (&[Emitter], &[Emitter]) = if gt_rows { (gt, pred) } else { (pred, gt) };
    let cost: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| cols.iter().map(|c| gate(r, c).unwrap_or(forbidden)).collect())
        .collect();
    let row_to_col = assignment::solve(&cost);

    let mut gt_matched = vec![false; gt.len()];
    let mut pred_matched = vec![false; pred.len()];
    for (r, &c) in row_to_col.iter().enumerate() {
        if cost[r][c] >= forbidden {
            continue;
        }
        let (gi, pj) = if gt_rows { (r, c) } else { (c, r) };
        gt_matched[gi] = true;
        pred_matched[pj] = true;
        out.pairs.push(MatchedPair {
            gt_index: gt_offset + gi,
            pred_index: pred_offset + pj,
            dx_nm: pred[pj].x_nm - gt[gi].x_nm,
            dy_nm: pred[pj].y_nm - gt[gi].y_nm,
            dz_nm: pred[pj].z_nm - gt[gi].z_nm,
        });
    }
    out.false_negatives
        .extend(gt_matched.iter().enumerate().filter(|(_, &m)| !m).map(|(i, _)| gt_offset + i));
    out.false_positives
        .extend(pred_matched.iter().enumerate().filter(|(_, &m)| !m).map(|(j, _)| pred_offset + j));
}

/// Jaccard index TP/(TP+FP+FN); 1.0 when there was nothing to find and
/// nothing was found.
pub fn jaccard(m: &MatchResult) -> f64 {
    let denom = m.n_tp() + m.n_fp() + m.n_fn();
    if denom == 0 {
        1.0
    } else {
        m.n_tp() as f64 / denom as f64
    }
}

/// RMSE over matched pairs: (lateral, axial, volumetric) in nm.
///
/// Undefined (error) over an empty pair set; reports carry `null` there
/// rather than a fake zero.
pub fn rmse(m: &MatchResult) -> Result<(f64, f64, f64)> {
    if m.pairs.is_empty() {
        return Err(Error::EmptyMatchSet);
    }
    let n = m.pairs.len() as f64;
    let lat_ms: f64 = m.pairs.iter().map(|p| p.lateral_sq()).sum::<f64>() / n;
    let ax_ms: f64 = m.pairs.iter().map(|p| p.dz_nm * p.dz_nm).sum::<f64>() / n;
    Ok((lat_ms.sqrt(), ax_ms.sqrt(), (lat_ms + ax_ms).sqrt()))
}

/// Weights folding RMSE (nm) into the efficiency score; challenge
/// convention is 1.0 lateral, 0.5 axial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyWeights {
    pub alpha_lateral: f64,
    pub alpha_axial: f64,
}

impl Default for EfficiencyWeights {
    fn default() -> Self {
        EfficiencyWeights {
            alpha_lateral: 1.0,
            alpha_axial: 0.5,
        }
    }
}

/// Efficiency scores (lateral, axial, 3D), each <= 100, 100 = perfect.
pub fn efficiency(ji: f64, rmse_lateral_nm: f64, rmse_axial_nm: f64) -> (f64, f64, f64) {
    efficiency_with_weights(ji, rmse_lateral_nm, rmse_axial_nm, &EfficiencyWeights::default())
}

pub fn efficiency_with_weights(
    ji: f64,
    rmse_lateral_nm: f64,
    rmse_axial_nm: f64,
    w: &EfficiencyWeights,
) -> (f64, f64, f64) {
    let miss = 100.0 * (1.0 - ji);
    let lat = 100.0 - (miss * miss + (w.alpha_lateral * rmse_lateral_nm).powi(2)).sqrt();
    let ax = 100.0 - (miss * miss + (w.alpha_axial * rmse_axial_nm).powi(2)).sqrt();
    (lat, ax, 0.5 * (lat + ax))
}

/// Minimum predictions for a meaningful sub-pixel histogram.
pub const SUBPIXEL_BIAS_MIN_POINTS: usize = 100;

/// Checkerboard diagnostic: total variation distance between the joint
/// (x, y) sub-pixel histogram and the uniform distribution.
///
/// 0 means no grid bias; localizations snapped to a per-pixel position
/// score `1 - 1/bins^2` (the TV maximum, ~0.9975 at 20 bins).
pub fn subpixel_bias(pred: &[Emitter], pixel_size_nm: f64, bins: usize) -> Result<f64> {
    if pred.len() < SUBPIXEL_BIAS_MIN_POINTS {
        return Err(Error::TooFewPredictions {
            min: SUBPIXEL_BIAS_MIN_POINTS,
            got: pred.len(),
        });
    }
    if !(pixel_size_nm > 0.0) || bins == 0 {
        return Err(Error::invalid("subpixel_bias", "pixel size and bins must be positive"));
    }
    let mut hist = vec![0u64; bins * bins];
    for e in pred {
        let fx = (e.x_nm / pixel_size_nm).rem_euclid(1.0);
        let fy = (e.y_nm / pixel_size_nm).rem_euclid(1.0);
        let bx = ((fx * bins as f64) as usize).min(bins - 1);
        let by = ((fy * bins as f64) as usize).min(bins - 1);
        hist[by * bins + bx] += 1;
    }
    let n = pred.len() as f64;
    let uniform = 1.0 / (bins * bins) as f64;
    let tv: f64 = hist.iter().map(|&c| (c as f64 / n - uniform).abs()).sum::<f64>() * 0.5;
    Ok(tv)
}

/// Full evaluation summary; serializes with exactly these field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ji: f64,
    pub rmse_lateral_nm: Option<f64>,
    pub rmse_axial_nm: Option<f64>,
    pub rmse_volumetric_nm: Option<f64>,
    pub efficiency_lateral: Option<f64>,
    pub efficiency_axial: Option<f64>,
    pub efficiency_3d: Option<f64>,
    pub n_tp: usize,
    pub n_fp: usize,
    pub n_fn: usize,
    pub nominal_density: Option<f64>,
    pub subpixel_bias: Option<f64>,
}

impl MetricsReport {
    /// Assembles the report from a match result. `subpixel` and `nominal`
    /// are optional because they need extra context (pixel size, a CSR
    /// curve) the matcher does not have.
    pub fn from_match(m: &MatchResult, subpixel: Option<f64>, nominal: Option<f64>) -> Self {
        let ji = jaccard(m);
        let rmse = rmse(m).ok();
        let eff = rmse.map(|(lat, ax, _)| efficiency(ji, lat, ax));
        MetricsReport {
            ji,
            rmse_lateral_nm: rmse.map(|r| r.0),
            rmse_axial_nm: rmse.map(|r| r.1),
            rmse_volumetric_nm: rmse.map(|r| r.2),
            efficiency_lateral: eff.map(|e| e.0),
            efficiency_axial: eff.map(|e| e.1),
            efficiency_3d: eff.map(|e| e.2),
            n_tp: m.n_tp(),
            n_fp: m.n_fp(),
            n_fn: m.n_fn(),
            nominal_density: nominal,
            subpixel_bias: subpixel,
        }
    }
}
