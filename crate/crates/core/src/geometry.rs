//! Cell–tissue input composition, tissue-label leaking, dihedral test-time
//! augmentation and prediction averaging.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgproc::{crop, resize, ResizeMode};
use crate::raster::{LabelMap, Raster};

/// Tissue label ids.
pub const TISSUE_BACKGROUND: u32 = 1;
pub const TISSUE_CANCER: u32 = 2;
pub const TISSUE_UNKNOWN: u32 = 255;

/// Where the cell patch sits inside the lower-magnification tissue patch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchRegistration {
    pub tissue_mpp: f64,
    pub cell_mpp: f64,
    /// Top-left corner of the cell field of view, in tissue pixels.
    pub cell_offset_in_tissue: (usize, usize),
    /// Width and height of the cell field of view, in tissue pixels.
    pub cell_extent_in_tissue: (usize, usize),
}

impl PatchRegistration {
    pub fn scale(&self) -> f64 {
        self.tissue_mpp / self.cell_mpp
    }

    /// Checks the registration against a tissue patch of `tissue_h x tissue_w`.
    pub fn validate(&self, tissue_h: usize, tissue_w: usize) -> Result<()> {
        if !(self.cell_mpp > 0.0 && self.tissue_mpp > 0.0) || !(self.scale() > 1.0) {
            return Err(Error::Registration(format!(
                "tissue mpp {} must be coarser than cell mpp {}",
                self.tissue_mpp, self.cell_mpp
            )));
        }
        let (x0, y0) = self.cell_offset_in_tissue;
        let (w, h) = self.cell_extent_in_tissue;
        if w == 0 || h == 0 || x0 + w > tissue_w || y0 + h > tissue_h {
            return Err(Error::Registration(format!(
                "cell window {w}x{h} at ({x0}, {y0}) is outside the {tissue_w}x{tissue_h} tissue patch"
            )));
        }
        Ok(())
    }
}

/// Cell image channels followed by the tissue prediction cropped to the cell
/// field of view and bilinearly upsampled to the cell patch size.
pub fn compose_ctm_input(cell_img: &Raster, tissue_pred: &Raster, reg: &PatchRegistration) -> Result<Raster> {
    let (th, tw) = tissue_pred.dims();
    reg.validate(th, tw)?;
    let (ch, cw) = cell_img.dims();
    let (x0, y0) = reg.cell_offset_in_tissue;
    let (w, h) = reg.cell_extent_in_tissue;
    let expect_w = (w as f64 * reg.scale()).round() as usize;
    let expect_h = (h as f64 * reg.scale()).round() as usize;
    if expect_w != cw || expect_h != ch {
        return Err(Error::Registration(format!(
            "cell window {w}x{h} at scale {} covers {expect_w}x{expect_h} cell pixels, but the cell patch is {cw}x{ch}",
            reg.scale()
        )));
    }
    let window = crop(tissue_pred, x0, y0, w, h).map_err(|e| Error::Registration(e.to_string()))?;
    let up = resize(&window, ch, cw, ResizeMode::Bilinear)?;
    Raster::stack(&[cell_img, &up])
}

/// Ground-truth tissue distribution wherever the label is background or
/// cancer; the prediction is kept on every other (unknown) pixel.
pub fn leak_tissue_labels(tissue_pred: &Raster, tissue_gt: &LabelMap) -> Result<Raster> {
    if tissue_pred.dims() != tissue_gt.dims() || tissue_pred.channels() != 2 {
        return Err(Error::Shape(format!(
            "tissue prediction {}x{}x{} does not align with a {}x{} label map",
            tissue_pred.height(),
            tissue_pred.width(),
            tissue_pred.channels(),
            tissue_gt.height(),
            tissue_gt.width()
        )));
    }
    let mut out = tissue_pred.clone();
    let n = out.plane_len();
    let data = out.data_mut();
    for (i, &l) in tissue_gt.labels().iter().enumerate() {
        match l {
            TISSUE_BACKGROUND => {
                data[i] = 1.0;
                data[n + i] = 0.0;
            }
            TISSUE_CANCER => {
                data[i] = 0.0;
                data[n + i] = 1.0;
            }
            _ => {}
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rotation {
    R0,
    R90,
    R180,
    R270,
}

impl Rotation {
    pub const ALL: [Rotation; 4] = [Rotation::R0, Rotation::R90, Rotation::R180, Rotation::R270];

    pub fn quarter_turns(self) -> u8 {
        self as u8
    }

    pub fn from_quarter_turns(k: i32) -> Self {
        Self::ALL[k.rem_euclid(4) as usize]
    }
}

/// Horizontal flip (optional) followed by a counter-clockwise rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GeomTransform {
    pub rotation: Rotation,
    pub flip: bool,
}

impl GeomTransform {
    pub const IDENTITY: GeomTransform = GeomTransform {
        rotation: Rotation::R0,
        flip: false,
    };

    pub fn new(rotation: Rotation, flip: bool) -> Self {
        Self { rotation, flip }
    }

    /// The eight elements of the dihedral group of the square.
    pub fn all() -> [GeomTransform; 8] {
        let mut out = [Self::IDENTITY; 8];
        for (i, t) in out.iter_mut().enumerate() {
            *t = Self::new(Rotation::ALL[i % 4], i >= 4);
        }
        out
    }

    pub fn inverse(self) -> Self {
        if self.flip {
            self
        } else {
            Self::new(Rotation::from_quarter_turns(-(self.rotation.quarter_turns() as i32)), false)
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(self, other: GeomTransform) -> Self {
        let k1 = self.rotation.quarter_turns() as i32;
        let k2 = other.rotation.quarter_turns() as i32;
        if self.flip {
            Self::new(Rotation::from_quarter_turns(k1 - k2), !other.flip)
        } else {
            Self::new(Rotation::from_quarter_turns(k1 + k2), other.flip)
        }
    }

    /// Output `(height, width)` for an input of `(h, w)`.
    pub fn output_dims(self, h: usize, w: usize) -> (usize, usize) {
        if self.rotation.quarter_turns() % 2 == 1 {
            (w, h)
        } else {
            (h, w)
        }
    }

    /// Where pixel `(x, y)` of a `w x h` input lands.
    pub fn map_point(self, x: usize, y: usize, w: usize, h: usize) -> (usize, usize) {
        let (mut x, mut y, mut w, mut h) = (x, y, w, h);
        if self.flip {
            x = w - 1 - x;
        }
        for _ in 0..self.rotation.quarter_turns() {
            (x, y) = (y, w - 1 - x);
            (w, h) = (h, w);
        }
        (x, y)
    }
}

/// Permutes pixels according to `t`. Odd quarter turns require a square raster.
pub fn apply_transform(r: &Raster, t: GeomTransform) -> Result<Raster> {
    let (h, w) = r.dims();
    if t.rotation.quarter_turns() % 2 == 1 && h != w {
        return Err(Error::Shape(format!(
            "a quarter-turn rotation needs a square raster, got {h}x{w}"
        )));
    }
    let (oh, ow) = t.output_dims(h, w);
    let mut out = Raster::zeros(oh, ow, r.channels());
    out.mpp = r.mpp;
    for c in 0..r.channels() {
        let src = r.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..h {
            for x in 0..w {
                let (nx, ny) = t.map_point(x, y, w, h);
                dst[ny * ow + nx] = src[y * w + x];
            }
        }
    }
    Ok(out)
}

pub fn invert_transform(r: &Raster, t: GeomTransform) -> Result<Raster> {
    apply_transform(r, t.inverse())
}

/// Pixel-wise mean, computed as `first + mean(other - first)` so identical
/// inputs average to themselves bit-exactly.
pub fn average_predictions(preds: &[Raster]) -> Result<Raster> {
    let first = preds
        .first()
        .ok_or_else(|| Error::Parameter("cannot average an empty list of predictions".into()))?;
    if let Some(bad) = preds.iter().find(|p| !p.same_shape(first)) {
        return Err(Error::Shape(format!(
            "prediction {}x{}x{} differs from {}x{}x{}",
            bad.height(),
            bad.width(),
            bad.channels(),
            first.height(),
            first.width(),
            first.channels()
        )));
    }
    let k = preds.len() as f64;
    let mut out = first.clone();
    let base = first.data();
    for (i, o) in out.data_mut().iter_mut().enumerate() {
        let dev: f64 = preds[1..].iter().map(|p| p.data()[i] - base[i]).sum();
        *o = base[i] + dev / k;
    }
    Ok(out)
}

/// Mean over the dihedral group of `invert(model(apply(input, t)), t)`.
pub fn tta_predict<F>(model: F, input: &Raster) -> Result<Raster>
where
    F: Fn(&Raster) -> Result<Raster>,
{
    let branches = GeomTransform::all()
        .into_iter()
        .map(|t| invert_transform(&model(&apply_transform(input, t)?)?, t))
        .collect::<Result<Vec<_>>>()?;
    average_predictions(&branches)
}

/// Order of fold ensembling relative to test-time augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleOrder {
    /// TTA per model, then average the models.
    #[default]
    TtaInside,
    /// Average the models for every transform, then average the transforms.
    TtaOutside,
}

/// Averages several models, optionally with test-time augmentation.
pub fn ensemble_predict<F>(models: &[F], input: &Raster, tta: bool, order: EnsembleOrder) -> Result<Raster>
where
    F: Fn(&Raster) -> Result<Raster>,
{
    if models.is_empty() {
        return Err(Error::Parameter("ensemble needs at least one model".into()));
    }
    if !tta {
        let preds = models.iter().map(|m| m(input)).collect::<Result<Vec<_>>>()?;
        return average_predictions(&preds);
    }
    match order {
        EnsembleOrder::TtaInside => {
            let preds = models
                .iter()
                .map(|m| tta_predict(m, input))
                .collect::<Result<Vec<_>>>()?;
            average_predictions(&preds)
        }
        EnsembleOrder::TtaOutside => tta_predict(
            |x: &Raster| {
                let preds = models.iter().map(|m| m(x)).collect::<Result<Vec<_>>>()?;
                average_predictions(&preds)
            },
            input,
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize, c: usize) -> Raster {
        let data = (0..h * w * c).map(|i| i as f64 * 0.37).collect();
        Raster::from_vec(h, w, c, data).unwrap()
    }

    #[test]
    fn standard_patch_geometry_crop_and_upsample() {
        let reg = PatchRegistration {
            tissue_mpp: 0.8,
            cell_mpp: 0.2,
            cell_offset_in_tissue: (384, 384),
            cell_extent_in_tissue: (256, 256),
        };
        assert!((reg.scale() - 4.0).abs() < 1e-12);
        let cell = Raster::zeros(1024, 1024, 3);
        let tissue = Raster::filled(1024, 1024, 2, 0.5);
        let out = compose_ctm_input(&cell, &tissue, &reg).unwrap();
        assert_eq!((out.height(), out.width(), out.channels()), (1024, 1024, 5));
        assert!(out.plane(4).iter().all(|&v| v == 0.5));
    }

    #[test]
    fn registration_errors() {
        let mut reg = PatchRegistration {
            tissue_mpp: 0.8,
            cell_mpp: 0.2,
            cell_offset_in_tissue: (10, 0),
            cell_extent_in_tissue: (4, 4),
        };
        let cell = Raster::zeros(16, 16, 3);
        assert!(matches!(
            compose_ctm_input(&cell, &Raster::zeros(8, 12, 2), &reg),
            Err(Error::Registration(_))
        ));
        reg.cell_offset_in_tissue = (0, 0);
        assert!(compose_ctm_input(&cell, &Raster::zeros(8, 12, 2), &reg).is_ok());
        assert!(compose_ctm_input(&Raster::zeros(15, 16, 3), &Raster::zeros(8, 12, 2), &reg).is_err());
        reg.tissue_mpp = 0.2;
        assert!(compose_ctm_input(&cell, &Raster::zeros(8, 12, 2), &reg).is_err());
    }

    #[test]
    fn leaking_replaces_known_labels_only() {
        let pred = Raster::from_vec(1, 3, 2, vec![0.3, 0.6, 0.9, 0.7, 0.4, 0.1]).unwrap();
        let gt = LabelMap::from_vec(1, 3, vec![TISSUE_UNKNOWN, TISSUE_CANCER, TISSUE_BACKGROUND]).unwrap();
        let out = leak_tissue_labels(&pred, &gt).unwrap();
        assert_eq!(out.data(), &[0.3, 0.0, 1.0, 0.7, 1.0, 0.0]);
        let unknown = LabelMap::from_vec(1, 3, vec![TISSUE_UNKNOWN; 3]).unwrap();
        assert_eq!(leak_tissue_labels(&pred, &unknown).unwrap(), pred);
    }

    #[test]
    fn group_laws() {
        let all = GeomTransform::all();
        for a in all {
            assert_eq!(a.compose(a.inverse()), GeomTransform::IDENTITY);
            assert_eq!(a.inverse().compose(a), GeomTransform::IDENTITY);
            for b in all {
                assert!(all.contains(&a.compose(b)));
            }
        }
        let r90 = GeomTransform::new(Rotation::R90, false);
        assert_eq!(r90.compose(r90), GeomTransform::new(Rotation::R180, false));
    }

    #[test]
    fn compose_matches_sequential_application() {
        let r = ramp(5, 5, 2);
        for a in GeomTransform::all() {
            for b in GeomTransform::all() {
                let seq = apply_transform(&apply_transform(&r, b).unwrap(), a).unwrap();
                assert_eq!(seq, apply_transform(&r, a.compose(b)).unwrap());
            }
        }
    }

    #[test]
    fn round_trips_and_identity() {
        let r = ramp(6, 6, 3);
        assert_eq!(apply_transform(&r, GeomTransform::IDENTITY).unwrap(), r);
        for t in GeomTransform::all() {
            assert_eq!(invert_transform(&apply_transform(&r, t).unwrap(), t).unwrap(), r);
        }
        let rect = ramp(3, 5, 1);
        let r180 = GeomTransform::new(Rotation::R180, true);
        assert_eq!(invert_transform(&apply_transform(&rect, r180).unwrap(), r180).unwrap(), rect);
        assert!(apply_transform(&rect, GeomTransform::new(Rotation::R90, false)).is_err());
    }

    #[test]
    fn rotation_direction() {
        // Counter-clockwise: the top-right corner moves to the top-left.
        let r = Raster::from_vec(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let out = apply_transform(&r, GeomTransform::new(Rotation::R90, false)).unwrap();
        assert_eq!(out.plane(0), &[2.0, 4.0, 1.0, 3.0]);
        let flipped = apply_transform(&r, GeomTransform::new(Rotation::R0, true)).unwrap();
        assert_eq!(flipped.plane(0), &[2.0, 1.0, 4.0, 3.0]);
    }

    #[test]
    fn tta_of_identity_and_constant_models() {
        let r = ramp(4, 4, 2);
        let out = tta_predict(|x: &Raster| Ok(x.clone()), &r).unwrap();
        assert!(out.max_abs_diff(&r) < 1e-12);
        let c = Raster::filled(4, 4, 2, 0.3);
        let out = tta_predict(|_: &Raster| Ok(c.clone()), &r).unwrap();
        assert_eq!(out, c);
    }

    #[test]
    fn averaging() {
        let a = ramp(3, 3, 1);
        assert_eq!(average_predictions(std::slice::from_ref(&a)).unwrap(), a);
        assert_eq!(average_predictions(&[a.clone(), a.clone(), a.clone()]).unwrap(), a);
        assert!(average_predictions(&[]).is_err());
        assert!(average_predictions(&[a, ramp(3, 3, 2)]).is_err());
    }

    #[test]
    fn ensemble_orders_agree_for_linear_models() {
        let input = ramp(4, 4, 1);
        let models: Vec<Box<dyn Fn(&Raster) -> Result<Raster>>> = vec![
            Box::new(|x: &Raster| Ok(x.map(|v| 2.0 * v))),
            Box::new(|x: &Raster| Ok(x.map(|v| v + 1.0))),
        ];
        let inside = ensemble_predict(&models, &input, true, EnsembleOrder::TtaInside).unwrap();
        let outside = ensemble_predict(&models, &input, true, EnsembleOrder::TtaOutside).unwrap();
        assert!(inside.max_abs_diff(&outside) < 1e-12);
        let plain = ensemble_predict(&models, &input, false, EnsembleOrder::TtaInside).unwrap();
        assert!(plain.max_abs_diff(&input.map(|v| 1.5 * v + 0.5)) < 1e-12);
    }
}
