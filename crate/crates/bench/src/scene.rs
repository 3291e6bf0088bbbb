//! Synthetic cell/tissue patch pairs with fully known ground truth.

use celldet_core::geometry::{PatchRegistration, TISSUE_BACKGROUND, TISSUE_CANCER, TISSUE_UNKNOWN};
use celldet_core::groundtruth::InstanceGroundTruth;
use celldet_core::imgproc::gaussian_blur;
use celldet_core::{CellClass, CellPoint, LabelMap, PointAnnotations, Raster};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

pub const ORGANS: [&str; 6] = ["bladder", "endometrium", "head-and-neck", "kidney", "prostate", "stomach"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    /// Side of the square cell patch in pixels.
    pub cell_size: usize,
    pub cell_mpp: f64,
    /// Side of the square tissue patch in pixels.
    pub tissue_size: usize,
    pub tissue_mpp: f64,
    pub min_cells: usize,
    pub max_cells: usize,
    /// Minimum centre-to-centre distance in cell pixels.
    pub min_separation_px: f64,
    /// Cell–tissue correlation: P(tumor cell | cancer) = (1 + rho) / 2.
    pub rho: f64,
    /// 1 gives clearly different nucleus colours per class, 0 identical ones.
    pub color_separation: f64,
    pub tumor_radius_px: (f64, f64),
    pub background_radius_px: (f64, f64),
    /// Paint opacity range of annotated nuclei; low values give faint cells.
    pub nucleus_strength: (f64, f64),
    /// Unannotated nucleus-like blobs per cell patch.
    pub distractors: usize,
    pub distractor_strength: (f64, f64),
    pub distractor_radius_px: (f64, f64),
    /// Largest relative amplitude of each boundary harmonic.
    pub shape_irregularity: f64,
    /// Relative opacity modulation inside nuclei.
    pub chromatin_texture: f64,
    pub noise_std: f64,
    /// Unknown-labelled blobs per tissue patch.
    pub unknown_blobs: usize,
    pub organs: Vec<String>,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            cell_size: 128,
            cell_mpp: 0.2,
            tissue_size: 128,
            tissue_mpp: 0.8,
            min_cells: 14,
            max_cells: 22,
            min_separation_px: 14.0,
            rho: 0.9,
            color_separation: 1.0,
            tumor_radius_px: (8.0, 11.0),
            background_radius_px: (5.5, 8.0),
            nucleus_strength: (1.0, 1.0),
            distractors: 4,
            distractor_strength: (0.35, 0.6),
            distractor_radius_px: (3.0, 5.5),
            shape_irregularity: 0.0,
            chromatin_texture: 0.0,
            noise_std: 0.04,
            unknown_blobs: 1,
            organs: ORGANS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl SynthParams {
    pub fn scale(&self) -> f64 {
        self.tissue_mpp / self.cell_mpp
    }

    /// Side of the cell field of view in tissue pixels.
    pub fn window_in_tissue(&self) -> usize {
        (self.cell_size as f64 / self.scale()).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.cell_size < 16 || self.tissue_size < 4 {
            return bad(format!("patches too small: cell {} tissue {}", self.cell_size, self.tissue_size));
        }
        if !(self.cell_mpp > 0.0 && self.scale() > 1.0) {
            return bad(format!(
                "tissue mpp {} must be coarser than cell mpp {}",
                self.tissue_mpp, self.cell_mpp
            ));
        }
        let win = self.window_in_tissue();
        if win > self.tissue_size || (win as f64 * self.scale()).round() as usize != self.cell_size {
            return bad(format!(
                "a {0}x{0} cell patch at scale {1} does not fit a {2}x{2} tissue patch on whole pixels",
                self.cell_size,
                self.scale(),
                self.tissue_size
            ));
        }
        if !(0.0..=1.0).contains(&self.rho) || !(0.0..=1.0).contains(&self.color_separation) {
            return bad("rho and color_separation must lie in [0, 1]".into());
        }
        if self.min_cells > self.max_cells {
            return bad(format!("min_cells {} exceeds max_cells {}", self.min_cells, self.max_cells));
        }
        let radii_ok = |(a, b): (f64, f64)| a > 1.0 && b >= a;
        if !radii_ok(self.tumor_radius_px) || !radii_ok(self.background_radius_px) || !radii_ok(self.distractor_radius_px) {
            return bad("radius ranges must satisfy 1 < lo <= hi".into());
        }
        let strength_ok = |(a, b): (f64, f64)| 0.0 < a && a <= b && b <= 1.0;
        if !strength_ok(self.nucleus_strength) || !strength_ok(self.distractor_strength) {
            return bad("strength ranges must satisfy 0 < lo <= hi <= 1".into());
        }
        if self.organs.is_empty() {
            return bad("at least one organ tag is required".into());
        }
        if !(self.noise_std >= 0.0) {
            return bad("noise_std must be non-negative".into());
        }
        if !(0.0..0.5).contains(&self.shape_irregularity) || !(0.0..=1.0).contains(&self.chromatin_texture) {
            return bad("shape_irregularity must lie in [0, 0.5) and chromatin_texture in [0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub cell_img: Raster,
    pub tissue_img: Raster,
    pub annotations: PointAnnotations,
    /// Nucleus instance labels; annotation `i` owns label `i + 1`.
    pub instance_labels: LabelMap,
    /// Tissue labels with 255 over unannotated regions.
    pub tissue_gt: LabelMap,
    /// Tissue labels without the unknown overlay.
    pub tissue_truth: LabelMap,
    pub registration: PatchRegistration,
    pub organ_tag: String,
}

impl SynthScene {
    pub fn instances(&self) -> InstanceGroundTruth {
        InstanceGroundTruth::from_annotations(&self.instance_labels, &self.annotations)
            .expect("scene instances are consistent by construction")
    }
}

/// Smooth field with values spread over roughly [-1, 1].
fn smooth_field<R: Rng>(rng: &mut R, h: usize, w: usize, sigma: f64) -> Raster {
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let white = Raster::from_vec(h, w, 1, (0..h * w).map(|_| normal.sample(rng)).collect()).expect("finite");
    let smooth = gaussian_blur(&white, sigma).expect("positive sigma");
    let sd = (smooth.data().iter().map(|v| v * v).sum::<f64>() / (h * w) as f64).sqrt();
    smooth.map(|v| v / sd.max(1e-12))
}

fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v[((v.len() - 1) as f64 * q).round() as usize]
}

const TISSUE_BG_COLOR: [f64; 3] = [0.88, 0.76, 0.84];
const TISSUE_CANCER_COLOR: [f64; 3] = [0.72, 0.52, 0.72];
const CELL_BG_COLOR: [f64; 3] = [0.86, 0.80, 0.86];
const NUCLEUS_MID: [f64; 3] = [0.42, 0.28, 0.52];
const NUCLEUS_SPLIT: [f64; 3] = [0.10, 0.08, -0.06];

struct Nucleus {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    cos: f64,
    sin: f64,
    color: [f64; 3],
    /// Amplitude and phase of the 3- and 5-fold boundary harmonics.
    lobes: [(f64, f64); 2],
}

impl Nucleus {
    /// Squared normalised radius: below 1 inside.
    fn level(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.cx;
        let dy = y - self.cy;
        let u = (dx * self.cos + dy * self.sin) / self.a;
        let v = (-dx * self.sin + dy * self.cos) / self.b;
        let t = v.atan2(u);
        let edge = 1.0 + self.lobes[0].0 * (3.0 * t + self.lobes[0].1).cos() + self.lobes[1].0 * (5.0 * t + self.lobes[1].1).cos();
        (u * u + v * v) / (edge * edge)
    }

    fn bbox(&self, h: usize, w: usize) -> (usize, usize, usize, usize) {
        let r = self.a.max(self.b) * (1.0 + self.lobes[0].0 + self.lobes[1].0) + 2.0;
        let x0 = (self.cx - r).floor().max(0.0) as usize;
        let y0 = (self.cy - r).floor().max(0.0) as usize;
        let x1 = ((self.cx + r).ceil() as usize).min(w - 1);
        let y1 = ((self.cy + r).ceil() as usize).min(h - 1);
        (x0, y0, x1, y1)
    }
}

fn draw_range<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

fn random_nucleus<R: Rng>(rng: &mut R, cx: f64, cy: f64, radius: f64, color: [f64; 3], irregularity: f64) -> Nucleus {
    let elong: f64 = rng.gen_range(1.0..1.3);
    let theta = rng.gen_range(0.0..std::f64::consts::PI);
    let mut lobe = || (irregularity * rng.gen::<f64>(), rng.gen_range(0.0..std::f64::consts::TAU));
    let lobes = [lobe(), lobe()];
    Nucleus {
        lobes,
        cx,
        cy,
        a: radius * elong.sqrt(),
        b: radius / elong.sqrt(),
        cos: theta.cos(),
        sin: theta.sin(),
        color,
    }
}

/// Generates one cell/tissue patch pair.
pub fn synth_scene<R: Rng>(rng: &mut R, p: &SynthParams) -> Result<SynthScene> {
    p.validate()?;
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let organ_tag = p.organs[rng.gen_range(0..p.organs.len())].clone();
    let ts = p.tissue_size;
    let win = p.window_in_tissue();
    let scale = p.scale();

    // Tissue classes from a thresholded smooth field.
    let field = smooth_field(rng, ts, ts, ts as f64 / 8.0);
    let cancer_share = rng.gen_range(0.3..0.7);
    let cut = quantile(field.plane(0), 1.0 - cancer_share);
    let is_cancer: Vec<bool> = field.plane(0).iter().map(|&v| v >= cut).collect();
    let tissue_truth = LabelMap::from_vec(
        ts,
        ts,
        is_cancer.iter().map(|&c| if c { TISSUE_CANCER } else { TISSUE_BACKGROUND }).collect(),
    )?;
    let mut tissue_gt = tissue_truth.clone();
    for _ in 0..p.unknown_blobs {
        let (cx, cy) = (rng.gen_range(0.0..ts as f64), rng.gen_range(0.0..ts as f64));
        let r = rng.gen_range(0.05..0.12) * ts as f64;
        for y in 0..ts {
            for x in 0..ts {
                if (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r {
                    tissue_gt.set(y, x, TISSUE_UNKNOWN);
                }
            }
        }
    }

    let texture = smooth_field(rng, ts, ts, 2.0);
    let mut tissue_img = Raster::zeros(ts, ts, 3).with_mpp(p.tissue_mpp);
    for c in 0..3 {
        let plane = tissue_img.plane_mut(c);
        for i in 0..ts * ts {
            let base = if is_cancer[i] { TISSUE_CANCER_COLOR[c] } else { TISSUE_BG_COLOR[c] };
            let v = base + 0.05 * texture.plane(0)[i] + p.noise_std * normal.sample(rng);
            plane[i] = v.clamp(0.0, 1.0);
        }
    }

    let x0 = rng.gen_range(0..=ts - win);
    let y0 = rng.gen_range(0..=ts - win);
    let registration = PatchRegistration {
        tissue_mpp: p.tissue_mpp,
        cell_mpp: p.cell_mpp,
        cell_offset_in_tissue: (x0, y0),
        cell_extent_in_tissue: (win, win),
    };
    let cancer_at = |x: f64, y: f64| -> bool {
        let tx = (x0 + (x / scale) as usize).min(ts - 1);
        let ty = (y0 + (y / scale) as usize).min(ts - 1);
        is_cancer[ty * ts + tx]
    };

    // Nuclei.
    let n = p.cell_size;
    let target = rng.gen_range(p.min_cells..=p.max_cells);
    let p_tumor_cancer = 0.5 + p.rho / 2.0;
    let mut nuclei: Vec<(Nucleus, CellClass)> = Vec::new();
    let mut attempts = 0;
    while nuclei.len() < target && attempts < 200 * target.max(1) {
        attempts += 1;
        let cx = rng.gen_range(2..n - 2) as f64;
        let cy = rng.gen_range(2..n - 2) as f64;
        let tumor_prob = if cancer_at(cx, cy) { p_tumor_cancer } else { 1.0 - p_tumor_cancer };
        let class = if rng.gen_bool(tumor_prob) { CellClass::TumorCell } else { CellClass::BackgroundCell };
        let (lo, hi) = match class {
            CellClass::TumorCell => p.tumor_radius_px,
            CellClass::BackgroundCell => p.background_radius_px,
        };
        let radius = draw_range(rng, (lo, hi));
        let sign = if class == CellClass::TumorCell { 1.0 } else { -1.0 };
        let mut color = [0.0; 3];
        for c in 0..3 {
            color[c] = NUCLEUS_MID[c] - sign * 0.5 * p.color_separation * NUCLEUS_SPLIT[c] + 0.03 * normal.sample(rng);
        }
        let nuc = random_nucleus(rng, cx, cy, radius, color, p.shape_irregularity);
        let far = nuclei.iter().all(|(o, _)| {
            let d = ((o.cx - cx).powi(2) + (o.cy - cy).powi(2)).sqrt();
            d >= p.min_separation_px && d >= 0.8 * (o.a + nuc.a)
        });
        if far {
            nuclei.push((nuc, class));
        }
    }

    let mut labels = LabelMap::zeros(n, n);
    for (k, (nuc, _)) in nuclei.iter().enumerate() {
        let (bx0, by0, bx1, by1) = nuc.bbox(n, n);
        for y in by0..=by1 {
            for x in bx0..=bx1 {
                if nuc.level(x as f64, y as f64) <= 1.0 && labels.get(y, x) == 0 {
                    labels.set(y, x, k as u32 + 1);
                }
            }
        }
    }
    let mut kept = Vec::new();
    for (k, (nuc, class)) in nuclei.into_iter().enumerate() {
        let (cx, cy) = (nuc.cx as usize, nuc.cy as usize);
        if labels.get(cy, cx) == k as u32 + 1 {
            kept.push((nuc, class, k as u32 + 1));
        }
    }
    // Relabel so that annotation i owns label i + 1.
    let mut relabel = vec![0u32; labels.max_label() as usize + 1];
    for (i, (_, _, old)) in kept.iter().enumerate() {
        relabel[*old as usize] = i as u32 + 1;
    }
    for l in labels.labels_mut() {
        *l = relabel[*l as usize];
    }

    let background = smooth_field(rng, n, n, 8.0);
    let mut cell_img = Raster::zeros(n, n, 3).with_mpp(p.cell_mpp);
    for c in 0..3 {
        let plane = cell_img.plane_mut(c);
        for i in 0..n * n {
            plane[i] = CELL_BG_COLOR[c] + 0.03 * background.plane(0)[i];
        }
    }
    let chromatin = smooth_field(rng, n, n, 1.5);
    let paint = |img: &mut Raster, nuc: &Nucleus, strength: f64| {
        let (bx0, by0, bx1, by1) = nuc.bbox(n, n);
        for y in by0..=by1 {
            for x in bx0..=bx1 {
                // Soft one-pixel rim.
                let l = nuc.level(x as f64, y as f64).sqrt();
                let grain = (1.0 + p.chromatin_texture * chromatin.get(0, y, x)).clamp(0.0, 1.0);
                let alpha = strength * grain * ((1.0 - l) * nuc.a.min(nuc.b) + 0.5).clamp(0.0, 1.0);
                if alpha > 0.0 {
                    for c in 0..3 {
                        let v = img.get(c, y, x);
                        img.set(c, y, x, (1.0 - alpha) * v + alpha * nuc.color[c]);
                    }
                }
            }
        }
    };
    for _ in 0..p.distractors {
        let r = draw_range(rng, p.distractor_radius_px);
        let (cx, cy) = (rng.gen_range(0.0..n as f64), rng.gen_range(0.0..n as f64));
        let nuc = random_nucleus(rng, cx, cy, r, NUCLEUS_MID, p.shape_irregularity);
        let s = draw_range(rng, p.distractor_strength);
        paint(&mut cell_img, &nuc, s);
    }
    for (nuc, _, _) in &kept {
        let s = draw_range(rng, p.nucleus_strength);
        paint(&mut cell_img, nuc, s);
    }
    for v in cell_img.data_mut() {
        *v = (*v + p.noise_std * normal.sample(rng)).clamp(0.0, 1.0);
    }

    let points = kept
        .iter()
        .map(|(nuc, class, _)| CellPoint::new(nuc.cx as usize, nuc.cy as usize, *class))
        .collect();
    Ok(SynthScene {
        cell_img,
        tissue_img,
        annotations: PointAnnotations::new(points, p.cell_mpp),
        instance_labels: labels,
        tissue_gt,
        tissue_truth,
        registration,
        organ_tag,
    })
}

/// Whether each annotation lies on cancer tissue.
pub fn cancer_under_cells(scene: &SynthScene) -> Vec<bool> {
    let reg = &scene.registration;
    let scale = reg.scale();
    scene
        .annotations
        .points
        .iter()
        .map(|p| {
            let tx = reg.cell_offset_in_tissue.0 + (p.x as f64 / scale) as usize;
            let ty = reg.cell_offset_in_tissue.1 + (p.y as f64 / scale) as usize;
            scene.tissue_truth.get(ty, tx) == TISSUE_CANCER
        })
        .collect()
}
