//! Training-time augmentation applied jointly to images, ground-truth maps
//! and point annotations, plus class-balancing sample weights.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::{CellClass, CellPoint, PointAnnotations};
use crate::error::{Error, Result};
use crate::geometry::{apply_transform, GeomTransform, Rotation, TISSUE_BACKGROUND, TISSUE_CANCER};
use crate::groundtruth::{GroundTruthMaps, GtFormat};
use crate::imgproc::{crop, resize, ResizeMode};
use crate::raster::{LabelMap, Raster};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentParams {
    /// Rescale factors are drawn from `[1 - r, 1 + r]`.
    pub rescale_range: f64,
    /// Side of the square output crop.
    pub crop_hw: usize,
    pub brightness_contrast_range: f64,
    pub per_aug_probability: f64,
    pub seed: u64,
    /// Leading image channels that receive brightness and contrast changes.
    pub photometric_channels: usize,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            rescale_range: 0.10,
            crop_hw: 896,
            brightness_contrast_range: 0.20,
            per_aug_probability: 0.70,
            seed: 0,
            photometric_channels: 3,
        }
    }
}

impl AugmentParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.per_aug_probability) {
            return Err(Error::Parameter(format!(
                "per_aug_probability must lie in [0, 1], got {}",
                self.per_aug_probability
            )));
        }
        if !(0.0..1.0).contains(&self.rescale_range) {
            return Err(Error::Parameter(format!(
                "rescale_range must lie in [0, 1), got {}",
                self.rescale_range
            )));
        }
        if !(0.0..=1.0).contains(&self.brightness_contrast_range) {
            return Err(Error::Parameter(format!(
                "brightness_contrast_range must lie in [0, 1], got {}",
                self.brightness_contrast_range
            )));
        }
        if self.crop_hw == 0 {
            return Err(Error::Parameter("crop_hw must be positive".into()));
        }
        Ok(())
    }
}

/// One concrete draw of the augmentation policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentPlan {
    pub scale: f64,
    /// Top-left corner of the crop in the rescaled image.
    pub crop_origin: (usize, usize),
    pub crop_hw: usize,
    pub transform: GeomTransform,
    /// Additive offset per photometric channel.
    pub brightness: Vec<f64>,
    /// Contrast factor per photometric channel.
    pub contrast: Vec<f64>,
}

fn scaled_len(n: usize, scale: f64) -> usize {
    ((n as f64 * scale).round() as usize).max(1)
}

impl AugmentPlan {
    /// Centred crop with no other change.
    pub fn identity(h: usize, w: usize, crop_hw: usize) -> Result<Self> {
        if crop_hw > h || crop_hw > w {
            return Err(crop_error(crop_hw, h, w));
        }
        Ok(Self {
            scale: 1.0,
            crop_origin: ((w - crop_hw) / 2, (h - crop_hw) / 2),
            crop_hw,
            transform: GeomTransform::IDENTITY,
            brightness: Vec::new(),
            contrast: Vec::new(),
        })
    }

    /// `(height, width)` of the image after rescaling.
    pub fn scaled_dims(&self, h: usize, w: usize) -> (usize, usize) {
        if self.scale == 1.0 {
            (h, w)
        } else {
            (scaled_len(h, self.scale), scaled_len(w, self.scale))
        }
    }

    fn check(&self, h: usize, w: usize) -> Result<()> {
        let (sh, sw) = self.scaled_dims(h, w);
        let (x0, y0) = self.crop_origin;
        if self.crop_hw == 0 || x0 + self.crop_hw > sw || y0 + self.crop_hw > sh {
            return Err(crop_error(self.crop_hw, sh, sw));
        }
        Ok(())
    }

    fn geometric(&self, r: &Raster, mode: ResizeMode) -> Result<Raster> {
        let (h, w) = r.dims();
        self.check(h, w)?;
        let (sh, sw) = self.scaled_dims(h, w);
        let scaled = if (sh, sw) == (h, w) {
            r.clone()
        } else {
            resize(r, sh, sw, mode)?
        };
        let (x0, y0) = self.crop_origin;
        let cropped = crop(&scaled, x0, y0, self.crop_hw, self.crop_hw)?;
        apply_transform(&cropped, self.transform)
    }

    pub fn apply_image(&self, img: &Raster) -> Result<Raster> {
        let mut out = self.geometric(img, ResizeMode::Bilinear)?;
        let n = self.brightness.len().min(self.contrast.len()).min(out.channels());
        for c in 0..n {
            let (b, k) = (self.brightness[c], self.contrast[c]);
            if b == 0.0 && k == 1.0 {
                continue;
            }
            let plane = out.plane_mut(c);
            let mean = plane.iter().sum::<f64>() / plane.len() as f64;
            for v in plane.iter_mut() {
                *v = mean + k * (*v - mean) + b;
            }
        }
        for v in out.data_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        Ok(out)
    }

    /// Nearest resampling keeps one-hot maps one-hot; bilinear keeps soft
    /// maps on the simplex.
    pub fn apply_gt(&self, gt: &GroundTruthMaps) -> Result<GroundTruthMaps> {
        let mode = match gt.format {
            GtFormat::SoftIs => ResizeMode::Bilinear,
            GtFormat::Circle | GtFormat::HardIs => ResizeMode::Nearest,
        };
        Ok(GroundTruthMaps {
            maps: self.geometric(&gt.maps, mode)?,
            format: gt.format,
        })
    }

    pub fn apply_labels(&self, labels: &LabelMap) -> Result<LabelMap> {
        let (h, w) = labels.dims();
        let as_raster = Raster::from_fn(h, w, |x, y| labels.get(y, x) as f64);
        let out = self.geometric(&as_raster, ResizeMode::Nearest)?;
        let (oh, ow) = out.dims();
        LabelMap::from_vec(oh, ow, out.plane(0).iter().map(|&v| v as u32).collect())
    }

    /// Maps a point of an `h x w` input; `None` when it leaves the crop.
    pub fn map_point(&self, x: usize, y: usize, h: usize, w: usize) -> Option<(usize, usize)> {
        let (sh, sw) = self.scaled_dims(h, w);
        let sx = forward_coord(x, w, sw);
        let sy = forward_coord(y, h, sh);
        let (x0, y0) = (self.crop_origin.0 as f64, self.crop_origin.1 as f64);
        let cx = (sx - x0).round();
        let cy = (sy - y0).round();
        let n = self.crop_hw as f64;
        if cx < 0.0 || cy < 0.0 || cx >= n || cy >= n {
            return None;
        }
        Some(
            self.transform
                .map_point(cx as usize, cy as usize, self.crop_hw, self.crop_hw),
        )
    }

    pub fn apply_points(&self, pts: &PointAnnotations, h: usize, w: usize) -> PointAnnotations {
        let points = pts
            .points
            .iter()
            .filter_map(|p| {
                self.map_point(p.x, p.y, h, w)
                    .map(|(x, y)| CellPoint::new(x, y, p.class))
            })
            .collect();
        PointAnnotations::new(points, pts.mpp / self.scale)
    }
}

/// Inverse of the corner-aligned resize sampling rule.
fn forward_coord(src: usize, in_n: usize, out_n: usize) -> f64 {
    if in_n == out_n {
        src as f64
    } else if in_n == 1 {
        0.0
    } else {
        src as f64 * (out_n - 1) as f64 / (in_n - 1) as f64
    }
}

fn crop_error(crop_hw: usize, h: usize, w: usize) -> Error {
    Error::Parameter(format!(
        "crop of {crop_hw}x{crop_hw} does not fit the rescaled {w}x{h} image"
    ))
}

/// Draws each augmentation independently with probability
/// `per_aug_probability`.
pub fn sample_plan<R: Rng + ?Sized>(rng: &mut R, h: usize, w: usize, p: &AugmentParams) -> Result<AugmentPlan> {
    p.validate()?;
    let prob = p.per_aug_probability;
    let scale = if rng.gen_bool(prob) && p.rescale_range > 0.0 {
        rng.gen_range(1.0 - p.rescale_range..=1.0 + p.rescale_range)
    } else {
        1.0
    };
    let mut plan = AugmentPlan {
        scale,
        crop_origin: (0, 0),
        crop_hw: p.crop_hw,
        transform: GeomTransform::IDENTITY,
        brightness: Vec::new(),
        contrast: Vec::new(),
    };
    let (sh, sw) = plan.scaled_dims(h, w);
    if p.crop_hw > sh || p.crop_hw > sw {
        return Err(crop_error(p.crop_hw, sh, sw));
    }
    let (free_x, free_y) = (sw - p.crop_hw, sh - p.crop_hw);
    plan.crop_origin = if rng.gen_bool(prob) {
        (rng.gen_range(0..=free_x), rng.gen_range(0..=free_y))
    } else {
        (free_x / 2, free_y / 2)
    };
    let flip = rng.gen_bool(prob);
    let rotation = if rng.gen_bool(prob) {
        Rotation::ALL[rng.gen_range(1..4)]
    } else {
        Rotation::R0
    };
    plan.transform = GeomTransform::new(rotation, flip);
    let d = p.brightness_contrast_range;
    for _ in 0..p.photometric_channels {
        let b = if rng.gen_bool(prob) && d > 0.0 {
            rng.gen_range(-d..=d)
        } else {
            0.0
        };
        plan.brightness.push(b);
    }
    for _ in 0..p.photometric_channels {
        let k = if rng.gen_bool(prob) && d > 0.0 {
            rng.gen_range(1.0 - d..=1.0 + d)
        } else {
            1.0
        };
        plan.contrast.push(k);
    }
    Ok(plan)
}

/// Samples a plan and applies it to the image, its ground truth and points.
pub fn random_augment<R: Rng + ?Sized>(
    img: &Raster,
    gts: &GroundTruthMaps,
    pts: &PointAnnotations,
    p: &AugmentParams,
    rng: &mut R,
) -> Result<(Raster, GroundTruthMaps, PointAnnotations)> {
    if img.dims() != gts.maps.dims() {
        return Err(Error::Shape(format!(
            "image {}x{} and ground truth {}x{} are not aligned",
            img.height(),
            img.width(),
            gts.maps.height(),
            gts.maps.width()
        )));
    }
    let (h, w) = img.dims();
    let plan = sample_plan(rng, h, w, p)?;
    Ok((plan.apply_image(img)?, plan.apply_gt(gts)?, plan.apply_points(pts, h, w)))
}

/// Per-sample draw weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleWeighting {
    pub weights: Vec<f64>,
}

impl SampleWeighting {
    pub fn uniform(n: usize) -> Self {
        Self { weights: vec![1.0; n] }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let total: f64 = self.weights.iter().sum();
        self.weights.iter().map(|w| w / total).collect()
    }

    /// Draws `n` sample indices with replacement.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Vec<usize>> {
        let dist = WeightedIndex::new(&self.weights)
            .map_err(|e| Error::Parameter(format!("invalid sample weights: {e}")))?;
        Ok((0..n).map(|_| dist.sample(rng)).collect())
    }
}

/// Raises the weight of samples rich in the globally scarcer of two counts
/// until both are equal in expectation. Uniform when either count is absent
/// everywhere or no sample favours the scarce one.
fn balance_weights(counts: &[(f64, f64)]) -> Vec<f64> {
    let (ta, tb) = counts
        .iter()
        .fold((0.0, 0.0), |(a, b), &(ca, cb)| (a + ca, b + cb));
    let mut weights: Vec<f64> = counts
        .iter()
        .map(|&(a, b)| if a + b > 0.0 { 1.0 } else { 0.0 })
        .collect();
    if weights.iter().all(|&w| w == 0.0) {
        return vec![1.0; counts.len()];
    }
    if ta == 0.0 || tb == 0.0 || ta == tb {
        return weights;
    }
    // Orient so that `b` is the scarce count.
    let oriented: Vec<(f64, f64)> = if tb < ta {
        counts.to_vec()
    } else {
        counts.iter().map(|&(a, b)| (b, a)).collect()
    };
    let gap = (ta - tb).abs();
    let excess: Vec<f64> = oriented
        .iter()
        .map(|&(a, b)| if b > a { (b - a) / (a + b) } else { 0.0 })
        .collect();
    let leverage: f64 = oriented
        .iter()
        .zip(&excess)
        .map(|(&(a, b), r)| r * (b - a))
        .sum();
    if leverage <= 0.0 {
        return weights;
    }
    let lambda = gap / leverage;
    for (w, r) in weights.iter_mut().zip(&excess) {
        if *w > 0.0 {
            *w += lambda * r;
        }
    }
    weights
}

/// Balances expected tumor-cell and background-cell instances.
pub fn oversample_weights_cells(samples: &[PointAnnotations]) -> SampleWeighting {
    let counts: Vec<(f64, f64)> = samples
        .iter()
        .map(|s| {
            (
                s.count(CellClass::TumorCell) as f64,
                s.count(CellClass::BackgroundCell) as f64,
            )
        })
        .collect();
    let mut weights = balance_weights(&counts);
    // A sample without cells still carries negative examples.
    for (w, &(a, b)) in weights.iter_mut().zip(&counts) {
        if a + b == 0.0 {
            *w = 1.0;
        }
    }
    SampleWeighting { weights }
}

/// Balances expected background and cancer tissue pixels; other labels are
/// ignored and samples without any known pixel get weight 0.
pub fn oversample_weights_tissue(masks: &[LabelMap]) -> SampleWeighting {
    let counts: Vec<(f64, f64)> = masks
        .iter()
        .map(|m| {
            m.labels().iter().fold((0.0, 0.0), |(bg, ca), &l| match l {
                TISSUE_BACKGROUND => (bg + 1.0, ca),
                TISSUE_CANCER => (bg, ca + 1.0),
                _ => (bg, ca),
            })
        })
        .collect();
    SampleWeighting {
        weights: balance_weights(&counts),
    }
}
