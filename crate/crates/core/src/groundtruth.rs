//! Ground-truth maps synthesised from cell point annotations.
//!
//! Every map has three channels: `[background, background-cell, tumor-cell]`.
//! Circle and hard-instance maps are one-hot; soft maps hold unit-peak
//! Gaussians per cell class with the background channel as the complement.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::annotation::{CellClass, CellPoint, PointAnnotations};
use crate::error::{Error, Result};
use crate::raster::{LabelMap, Raster};

/// Circle radius at 0.2 microns per pixel.
pub const DEFAULT_CIRCLE_RADIUS_PX: usize = 7;
/// Gaussian sigma at 0.2 microns per pixel.
pub const DEFAULT_SOFT_SIGMA_PX: f64 = 15.0;
/// Support radius kept around centroids that have no instance mask.
pub const DEFAULT_FALLBACK_RADIUS_PX: usize = 7;
/// Soft Gaussians are zero beyond this many sigmas from their centroid.
pub const SOFT_SUPPORT_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GtFormat {
    Circle,
    HardIs,
    SoftIs,
}

impl GtFormat {
    pub const ALL: [GtFormat; 3] = [GtFormat::Circle, GtFormat::HardIs, GtFormat::SoftIs];

    pub fn name(self) -> &'static str {
        match self {
            GtFormat::Circle => "circle",
            GtFormat::HardIs => "hard_is",
            GtFormat::SoftIs => "soft_is",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthMaps {
    pub maps: Raster,
    pub format: GtFormat,
}

/// Precomputed nucleus instances tied to the annotations they were grown from.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceGroundTruth {
    instances: LabelMap,
    instance_class: BTreeMap<u32, CellClass>,
    matched: Vec<Option<u32>>,
}

impl InstanceGroundTruth {
    /// `matched[i]` is the instance label grown from annotation `i`, if any.
    pub fn new(
        instances: LabelMap,
        instance_class: BTreeMap<u32, CellClass>,
        matched: Vec<Option<u32>>,
    ) -> Result<Self> {
        let present = instances.ids();
        for (i, m) in matched.iter().enumerate() {
            if let Some(l) = m {
                if present.binary_search(l).is_err() {
                    return Err(Error::Data(format!(
                        "annotation {i} is matched to label {l}, which is absent from the instance map"
                    )));
                }
            }
        }
        Ok(Self {
            instances,
            instance_class,
            matched,
        })
    }

    /// Matches every annotation to the instance under its centroid.
    ///
    /// The first annotation that lands on an instance claims it and gives it its
    /// class; later annotations on the same instance, and annotations on
    /// background, are left unmatched. Instances claimed by no annotation are
    /// erased since they carry no class.
    pub fn from_annotations(instances: &LabelMap, pts: &PointAnnotations) -> Result<Self> {
        let (h, w) = instances.dims();
        pts.validate(h, w)?;
        let mut instance_class = BTreeMap::new();
        let mut matched = Vec::with_capacity(pts.len());
        for p in &pts.points {
            let l = instances.get(p.y, p.x);
            if l > 0 && !instance_class.contains_key(&l) {
                instance_class.insert(l, p.class);
                matched.push(Some(l));
            } else {
                matched.push(None);
            }
        }
        let mut cleaned = instances.clone();
        for l in cleaned.labels_mut() {
            if !instance_class.contains_key(l) {
                *l = 0;
            }
        }
        Self::new(cleaned, instance_class, matched)
    }

    /// No instances at all: every annotation falls back to a circle.
    pub fn unmatched(h: usize, w: usize, n_annotations: usize) -> Self {
        Self {
            instances: LabelMap::zeros(h, w),
            instance_class: BTreeMap::new(),
            matched: vec![None; n_annotations],
        }
    }

    pub fn instances(&self) -> &LabelMap {
        &self.instances
    }

    pub fn instance_class(&self) -> &BTreeMap<u32, CellClass> {
        &self.instance_class
    }

    pub fn matched(&self) -> &[Option<u32>] {
        &self.matched
    }

    fn check_against(&self, pts: &PointAnnotations, h: usize, w: usize) -> Result<()> {
        if self.instances.dims() != (h, w) {
            return Err(Error::Shape(format!(
                "instance map is {}x{}, expected {h}x{w}",
                self.instances.height(),
                self.instances.width()
            )));
        }
        if self.matched.len() != pts.len() {
            return Err(Error::Data(format!(
                "{} match entries for {} annotations",
                self.matched.len(),
                pts.len()
            )));
        }
        Ok(())
    }
}

/// Per pixel: class of the nearest listed centroid within `radius`, ties to the
/// lower annotation index. `allowed` masks out pixels that may not be stamped.
fn stamp_circles<'a>(
    points: impl Iterator<Item = &'a CellPoint>,
    h: usize,
    w: usize,
    radius: usize,
    allowed: impl Fn(usize) -> bool,
) -> Vec<Option<CellClass>> {
    let r2 = (radius * radius) as u64;
    let mut best = vec![u64::MAX; h * w];
    let mut owner = vec![None; h * w];
    for p in points {
        let y0 = p.y.saturating_sub(radius);
        let y1 = (p.y + radius).min(h - 1);
        let x0 = p.x.saturating_sub(radius);
        let x1 = (p.x + radius).min(w - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let dx = x.abs_diff(p.x) as u64;
                let dy = y.abs_diff(p.y) as u64;
                let d2 = dx * dx + dy * dy;
                let i = y * w + x;
                if d2 <= r2 && d2 < best[i] && allowed(i) {
                    best[i] = d2;
                    owner[i] = Some(p.class);
                }
            }
        }
    }
    owner
}

fn one_hot(owner: &[Option<CellClass>], h: usize, w: usize, mpp: f64) -> Raster {
    let mut maps = Raster::zeros(h, w, 3).with_mpp(mpp);
    let n = h * w;
    let data = maps.data_mut();
    for (i, o) in owner.iter().enumerate() {
        let c = o.map_or(0, CellClass::channel);
        data[c * n + i] = 1.0;
    }
    maps
}

fn check_dims(h: usize, w: usize) -> Result<()> {
    if h == 0 || w == 0 {
        return Err(Error::Parameter(format!("patch size must be positive, got {h}x{w}")));
    }
    Ok(())
}

/// Paints a disc of `radius_px` around every centroid.
pub fn circle_gt(pts: &PointAnnotations, h: usize, w: usize, radius_px: usize) -> Result<GroundTruthMaps> {
    check_dims(h, w)?;
    if radius_px < 1 {
        return Err(Error::Parameter("circle radius must be at least 1 px".into()));
    }
    pts.validate(h, w)?;
    let owner = stamp_circles(pts.points.iter(), h, w, radius_px, |_| true);
    Ok(GroundTruthMaps {
        maps: one_hot(&owner, h, w, pts.mpp),
        format: GtFormat::Circle,
    })
}

/// Paints matched instances with their class; annotations without an
/// instance fall back to circles drawn only on non-instance pixels.
pub fn hard_is_gt(
    inst: &InstanceGroundTruth,
    pts: &PointAnnotations,
    h: usize,
    w: usize,
    radius_px: usize,
) -> Result<GroundTruthMaps> {
    check_dims(h, w)?;
    if radius_px < 1 {
        return Err(Error::Parameter("circle radius must be at least 1 px".into()));
    }
    pts.validate(h, w)?;
    inst.check_against(pts, h, w)?;
    let labels = inst.instances.labels();
    let mut owner = vec![None; h * w];
    for (i, &l) in labels.iter().enumerate() {
        if l > 0 {
            let class = inst.instance_class.get(&l).ok_or_else(|| {
                Error::Data(format!("instance label {l} has no class mapping"))
            })?;
            owner[i] = Some(*class);
        }
    }
    let unmatched = pts
        .points
        .iter()
        .zip(&inst.matched)
        .filter(|(_, m)| m.is_none())
        .map(|(p, _)| p);
    let fallback = stamp_circles(unmatched, h, w, radius_px, |i| labels[i] == 0);
    for (o, f) in owner.iter_mut().zip(fallback) {
        if o.is_none() {
            *o = f;
        }
    }
    Ok(GroundTruthMaps {
        maps: one_hot(&owner, h, w, pts.mpp),
        format: GtFormat::HardIs,
    })
}

/// Unit-peak Gaussians per cell class, combined by maximum within a class and
/// truncated at [`SOFT_SUPPORT_SIGMAS`] sigmas, so a centroid with no other-class
/// centroid inside that reach keeps a value of exactly one.
///
/// With instances, cell probability is kept only on instance pixels and within
/// [`DEFAULT_FALLBACK_RADIUS_PX`] of unmatched centroids. Where the two cell
/// channels sum above one they are rescaled proportionally; the background
/// channel is the complement.
pub fn soft_is_gt(
    pts: &PointAnnotations,
    inst: Option<&InstanceGroundTruth>,
    h: usize,
    w: usize,
    sigma_px: f64,
) -> Result<GroundTruthMaps> {
    soft_is_gt_with_fallback(pts, inst, h, w, sigma_px, DEFAULT_FALLBACK_RADIUS_PX)
}

pub fn soft_is_gt_with_fallback(
    pts: &PointAnnotations,
    inst: Option<&InstanceGroundTruth>,
    h: usize,
    w: usize,
    sigma_px: f64,
    fallback_radius_px: usize,
) -> Result<GroundTruthMaps> {
    check_dims(h, w)?;
    if !(sigma_px > 0.0 && sigma_px.is_finite()) {
        return Err(Error::Parameter(format!("sigma must be positive, got {sigma_px}")));
    }
    pts.validate(h, w)?;
    if let Some(inst) = inst {
        inst.check_against(pts, h, w)?;
    }
    let n = h * w;
    let mut maps = Raster::zeros(h, w, 3).with_mpp(pts.mpp);
    let reach = SOFT_SUPPORT_SIGMAS * sigma_px;
    let reach2 = reach * reach;
    let support = reach.floor() as usize;
    let inv = 1.0 / (2.0 * sigma_px * sigma_px);
    {
        let data = maps.data_mut();
        for p in &pts.points {
            let base = p.class.channel() * n;
            for y in p.y.saturating_sub(support)..=(p.y + support).min(h - 1) {
                for x in p.x.saturating_sub(support)..=(p.x + support).min(w - 1) {
                    let dx = x as f64 - p.x as f64;
                    let dy = y as f64 - p.y as f64;
                    let d2 = dx * dx + dy * dy;
                    if d2 > reach2 {
                        continue;
                    }
                    let g = (-d2 * inv).exp();
                    let v = &mut data[base + y * w + x];
                    if g > *v {
                        *v = g;
                    }
                }
            }
        }
    }

    if let Some(inst) = inst {
        let labels = inst.instances.labels();
        let unmatched: Vec<CellPoint> = pts
            .points
            .iter()
            .zip(&inst.matched)
            .filter(|(_, m)| m.is_none())
            .map(|(p, _)| *p)
            .collect();
        let support = stamp_circles(unmatched.iter(), h, w, fallback_radius_px, |_| true);
        let data = maps.data_mut();
        for i in 0..n {
            if labels[i] == 0 && support[i].is_none() {
                data[n + i] = 0.0;
                data[2 * n + i] = 0.0;
            }
        }
    }

    let data = maps.data_mut();
    for i in 0..n {
        let (bc, tc) = (data[n + i], data[2 * n + i]);
        let sum = bc + tc;
        if sum > 1.0 {
            data[n + i] = bc / sum;
            data[2 * n + i] = tc / sum;
        }
        data[i] = (1.0 - data[n + i] - data[2 * n + i]).clamp(0.0, 1.0);
    }
    Ok(GroundTruthMaps {
        maps,
        format: GtFormat::SoftIs,
    })
}

/// `1 - sum(cell channels)`, clamped to `[0, 1]`.
pub fn background_channel(cell_channels: &Raster) -> Raster {
    let (h, w) = cell_channels.dims();
    let mut out = Raster::zeros(h, w, 1);
    out.mpp = cell_channels.mpp;
    for c in 0..cell_channels.channels() {
        for (o, v) in out.data_mut().iter_mut().zip(cell_channels.plane(c)) {
            *o += v;
        }
    }
    out.data_mut()
        .iter_mut()
        .for_each(|v| *v = (1.0 - *v).clamp(0.0, 1.0));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(list: &[(usize, usize, CellClass)]) -> PointAnnotations {
        PointAnnotations::new(
            list.iter().map(|&(x, y, c)| CellPoint::new(x, y, c)).collect(),
            0.2,
        )
    }

    #[test]
    fn default_scale_constants() {
        // 1.4 um radius and 3 um sigma at 0.2 um per pixel
        assert_eq!(DEFAULT_CIRCLE_RADIUS_PX as f64, (1.4f64 / 0.2).round());
        assert_eq!(DEFAULT_SOFT_SIGMA_PX, (3.0f64 / 0.2).round());
    }

    #[test]
    fn empty_annotations_are_pure_background() {
        let p = pts(&[]);
        let inst = InstanceGroundTruth::unmatched(9, 11, 0);
        for g in [
            circle_gt(&p, 9, 11, 7).unwrap(),
            hard_is_gt(&inst, &p, 9, 11, 7).unwrap(),
            soft_is_gt(&p, None, 9, 11, 15.0).unwrap(),
        ] {
            assert!(g.maps.plane(0).iter().all(|&v| v == 1.0));
            assert!(g.maps.plane(1).iter().all(|&v| v == 0.0));
            assert!(g.maps.plane(2).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn circle_conflict_goes_to_nearest() {
        let p = pts(&[(10, 10, CellClass::TumorCell), (16, 10, CellClass::BackgroundCell)]);
        let g = circle_gt(&p, 24, 30, 7).unwrap();
        assert_eq!(g.maps.get(2, 10, 12), 1.0);
        assert_eq!(g.maps.get(1, 10, 14), 1.0);
        // equidistant pixel goes to the first annotation
        assert_eq!(g.maps.get(2, 10, 13), 1.0);
        assert_eq!(g.maps.get(0, 10, 24), 1.0);
        assert_eq!(g.maps.get(1, 10, 23), 1.0);
    }

    #[test]
    fn circle_rejects_zero_radius_and_outside_points() {
        assert!(circle_gt(&pts(&[]), 5, 5, 0).is_err());
        assert!(circle_gt(&pts(&[(5, 0, CellClass::TumorCell)]), 5, 5, 2).is_err());
    }

    #[test]
    fn hard_is_paints_instances_and_falls_back() {
        let mut labels = LabelMap::zeros(20, 20);
        for y in 2..6 {
            for x in 2..6 {
                labels.set(y, x, 4);
            }
        }
        let p = pts(&[(3, 3, CellClass::TumorCell), (14, 14, CellClass::BackgroundCell)]);
        let inst = InstanceGroundTruth::from_annotations(&labels, &p).unwrap();
        assert_eq!(inst.matched(), &[Some(4), None]);
        let g = hard_is_gt(&inst, &p, 20, 20, 3).unwrap();
        assert_eq!(g.maps.get(2, 5, 5), 1.0);
        assert_eq!(g.maps.get(0, 6, 6), 1.0);
        assert_eq!(g.maps.get(1, 14, 17), 1.0);
        assert_eq!(g.maps.get(0, 14, 18), 1.0);
    }

    #[test]
    fn hard_is_without_matches_equals_circle() {
        let p = pts(&[(4, 4, CellClass::TumorCell), (9, 6, CellClass::BackgroundCell)]);
        let inst = InstanceGroundTruth::unmatched(15, 15, 2);
        assert_eq!(
            hard_is_gt(&inst, &p, 15, 15, 7).unwrap().maps,
            circle_gt(&p, 15, 15, 7).unwrap().maps
        );
    }

    #[test]
    fn hard_is_missing_class_is_data_error() {
        let mut labels = LabelMap::zeros(6, 6);
        labels.set(1, 1, 3);
        let p = pts(&[]);
        let inst = InstanceGroundTruth::new(labels, BTreeMap::new(), vec![]).unwrap();
        assert!(matches!(hard_is_gt(&inst, &p, 6, 6, 2), Err(Error::Data(_))));
    }

    #[test]
    fn matched_label_must_exist() {
        let labels = LabelMap::zeros(4, 4);
        assert!(InstanceGroundTruth::new(labels, BTreeMap::new(), vec![Some(2)]).is_err());
    }

    #[test]
    fn soft_peak_is_one() {
        let p = pts(&[(20, 12, CellClass::TumorCell)]);
        let g = soft_is_gt(&p, None, 40, 40, 15.0).unwrap();
        assert_eq!(g.maps.get(2, 12, 20), 1.0);
        assert_eq!(g.maps.get(0, 12, 20), 0.0);
        let expected = (-(25.0f64) / 450.0).exp();
        assert!((g.maps.get(2, 15, 24) - expected).abs() < 1e-15);
    }

    #[test]
    fn soft_cross_class_rescale() {
        let p = pts(&[(10, 10, CellClass::TumorCell), (12, 10, CellClass::BackgroundCell)]);
        let g = soft_is_gt(&p, None, 24, 24, 5.0).unwrap();
        let (bg, bc, tc) = (g.maps.get(0, 10, 10), g.maps.get(1, 10, 10), g.maps.get(2, 10, 10));
        assert!((bg + bc + tc - 1.0).abs() < 1e-12);
        assert!(tc >= 0.5 && tc < 1.0);
    }

    #[test]
    fn soft_masked_outside_instances() {
        let mut labels = LabelMap::zeros(30, 30);
        labels.set(5, 5, 1);
        labels.set(5, 6, 1);
        let p = pts(&[(5, 5, CellClass::TumorCell), (20, 20, CellClass::BackgroundCell)]);
        let inst = InstanceGroundTruth::from_annotations(&labels, &p).unwrap();
        let g = soft_is_gt(&p, Some(&inst), 30, 30, 4.0).unwrap();
        assert_eq!(g.maps.get(2, 5, 5), 1.0);
        assert!(g.maps.get(2, 5, 6) > 0.9);
        assert_eq!(g.maps.get(2, 5, 7), 0.0);
        assert_eq!(g.maps.get(0, 5, 7), 1.0);
        // fallback support around the unmatched centroid
        assert_eq!(g.maps.get(1, 20, 20), 1.0);
        assert!(g.maps.get(1, 20, 27) > 0.0);
        assert!(g.maps.get(2, 5, 17) == 0.0);
        assert_eq!(g.maps.get(1, 20, 28), 0.0);
    }

    #[test]
    fn background_channel_arithmetic() {
        let cells = Raster::from_vec(1, 2, 2, vec![0.3, 0.0, 0.5, 0.0]).unwrap();
        let bg = background_channel(&cells);
        assert!((bg.get(0, 0, 0) - 0.2).abs() < 1e-12);
        assert_eq!(bg.get(0, 0, 1), 1.0);
    }
}
