//! Turning predicted `[background, background-cell, tumor-cell]` maps into
//! cell detections.

use serde::{Deserialize, Serialize};

use crate::annotation::{CellClass, Detection};
use crate::error::{Error, Result};
use crate::imgproc::{
    center_of_mass, euclidean_distance_transform, gaussian_blur, otsu_threshold, peak_local_max,
    remove_small_objects_and_fill_holes, watershed,
};
use crate::raster::{BinaryMask, LabelMap, Raster};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PostprocParams {
    pub blur_sigma_px: f64,
    pub min_distance_px: usize,
    pub peak_threshold: f64,
    pub min_area_px: usize,
}

impl Default for PostprocParams {
    fn default() -> Self {
        Self {
            blur_sigma_px: 2.0,
            min_distance_px: 7,
            peak_threshold: 0.2,
            min_area_px: 10,
        }
    }
}

impl PostprocParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.blur_sigma_px > 0.0 && self.blur_sigma_px.is_finite()) {
            return Err(Error::Parameter("blur_sigma_px must be positive".into()));
        }
        if self.min_distance_px == 0 {
            return Err(Error::Parameter("min_distance_px must be positive".into()));
        }
        if !(self.peak_threshold > 0.0 && self.peak_threshold.is_finite()) {
            return Err(Error::Parameter("peak_threshold must be positive".into()));
        }
        if self.min_area_px == 0 {
            return Err(Error::Parameter("min_area_px must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectMode {
    Soft,
    Hard,
}

fn check_pred(pred: &Raster) -> Result<()> {
    if pred.channels() != 3 {
        return Err(Error::Shape(format!(
            "prediction must have channels [background, background-cell, tumor-cell], got {}",
            pred.channels()
        )));
    }
    Ok(())
}

/// Sum of the two cell-class channels.
pub fn foreground_map(pred: &Raster) -> Result<Raster> {
    check_pred(pred)?;
    let (h, w) = pred.dims();
    let mut out = pred.channel(1);
    for (o, t) in out.data_mut().iter_mut().zip(pred.plane(2)) {
        *o += t;
    }
    debug_assert_eq!(out.dims(), (h, w));
    Ok(out)
}

/// Peaks of the blurred foreground, kept where a cell class beats background.
pub fn detect_cells_soft(pred: &Raster, p: &PostprocParams) -> Result<Vec<Detection>> {
    p.validate()?;
    let fg = foreground_map(pred)?;
    let blurred = gaussian_blur(&fg, p.blur_sigma_px)?;
    let mut out = Vec::new();
    for peak in peak_local_max(&blurred, p.min_distance_px, p.peak_threshold) {
        let (y, x) = (peak.y, peak.x);
        let (bg, bc, tc) = (pred.get(0, y, x), pred.get(1, y, x), pred.get(2, y, x));
        if bc.max(tc) <= bg {
            continue;
        }
        let class = if tc > bc {
            CellClass::TumorCell
        } else {
            CellClass::BackgroundCell
        };
        out.push(Detection {
            x,
            y,
            class,
            confidence: blurred.get(0, y, x).clamp(0.0, 1.0),
        });
    }
    Ok(out)
}

/// Intermediate products of the watershed detector.
#[derive(Debug, Clone)]
pub struct HardStages {
    pub threshold: f64,
    pub mask: BinaryMask,
    pub distance: Raster,
    pub markers: LabelMap,
    pub instances: LabelMap,
}

/// Otsu mask, distance-transform markers, and watershed instances of the foreground.
/// `None` when the foreground is constant.
pub fn hard_stages(pred: &Raster, p: &PostprocParams) -> Result<Option<HardStages>> {
    p.validate()?;
    let fg = foreground_map(pred)?;
    let threshold = match otsu_threshold(&fg) {
        Ok(t) => t,
        Err(Error::Degenerate(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let (h, w) = fg.dims();
    let mask = remove_small_objects_and_fill_holes(&BinaryMask::threshold(&fg, threshold), p.min_area_px);
    let distance = euclidean_distance_transform(&mask);
    let mut markers = LabelMap::zeros(h, w);
    // Any foreground pixel is at least one pixel away from background.
    for (i, peak) in peak_local_max(&distance, p.min_distance_px, 0.5)
        .into_iter()
        .enumerate()
    {
        if mask.get(peak.y, peak.x) {
            markers.set(peak.y, peak.x, i as u32 + 1);
        }
    }
    let elevation = distance.map(|d| -d);
    let instances = watershed(&elevation, &markers, &mask)?;
    Ok(Some(HardStages {
        threshold,
        mask,
        distance,
        markers,
        instances,
    }))
}

/// Watershed-separated instances, one detection per instance at its centroid.
pub fn detect_cells_hard(pred: &Raster, p: &PostprocParams) -> Result<Vec<Detection>> {
    let Some(stages) = hard_stages(pred, p)? else {
        return Ok(Vec::new());
    };
    let (h, w) = pred.dims();
    let n = stages.instances.max_label() as usize + 1;
    let mut votes = vec![[0usize; 2]; n];
    let mut fg_sum = vec![0.0; n];
    let mut area = vec![0usize; n];
    for y in 0..h {
        for x in 0..w {
            let l = stages.instances.get(y, x) as usize;
            if l == 0 {
                continue;
            }
            let (bc, tc) = (pred.get(1, y, x), pred.get(2, y, x));
            votes[l][usize::from(tc > bc)] += 1;
            fg_sum[l] += bc + tc;
            area[l] += 1;
        }
    }
    Ok(center_of_mass(&stages.instances)
        .into_iter()
        .map(|(l, c)| {
            let l = l as usize;
            let class = if votes[l][1] > votes[l][0] {
                CellClass::TumorCell
            } else {
                CellClass::BackgroundCell
            };
            Detection {
                x: c.x,
                y: c.y,
                class,
                confidence: (fg_sum[l] / area[l] as f64).clamp(0.0, 1.0),
            }
        })
        .collect())
}

pub fn detect_cells(pred: &Raster, mode: DetectMode, p: &PostprocParams) -> Result<Vec<Detection>> {
    match mode {
        DetectMode::Soft => detect_cells_soft(pred, p),
        DetectMode::Hard => detect_cells_hard(pred, p),
    }
}
