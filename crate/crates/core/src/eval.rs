//! Point-detection matching, F1 scores, tissue F1 and per-organ reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::annotation::{CellClass, Detection, PointAnnotations};
use crate::error::{Error, Result};
use crate::geometry::{TISSUE_BACKGROUND, TISSUE_CANCER};
use crate::raster::LabelMap;

pub const DEFAULT_MATCH_RADIUS_PX: u32 = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub match_radius_px: u32,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            match_radius_px: DEFAULT_MATCH_RADIUS_PX,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.match_radius_px == 0 {
            return Err(Error::Parameter("match_radius_px must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ClassCounts {
    pub fn add(&mut self, other: ClassCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// A matched prediction/annotation pair; indices refer to the input lists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub pred: usize,
    pub gt: usize,
    pub class: CellClass,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchResult {
    /// Indexed by [`CellClass::index`].
    pub counts: [ClassCounts; 2],
    pub pairs: Vec<MatchPair>,
}

impl MatchResult {
    pub fn class_counts(&self, class: CellClass) -> ClassCounts {
        self.counts[class.index()]
    }

    /// Adds the counts of `other`; pairs are not carried over.
    pub fn pool(&mut self, other: &MatchResult) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            a.add(*b);
        }
    }
}

/// Greedy nearest-first matching within each class. Candidate pairs within
/// the radius are taken in order of (distance, prediction index, annotation
/// index) whenever both ends are still free.
pub fn match_detections(preds: &[Detection], gts: &PointAnnotations, cfg: &EvalConfig) -> MatchResult {
    let r2 = cfg.match_radius_px as u64 * cfg.match_radius_px as u64;
    let mut result = MatchResult::default();
    for class in CellClass::ALL {
        let pi: Vec<usize> = (0..preds.len()).filter(|&i| preds[i].class == class).collect();
        let gi: Vec<usize> = (0..gts.points.len())
            .filter(|&j| gts.points[j].class == class)
            .collect();
        let mut cand = Vec::new();
        for &i in &pi {
            for &j in &gi {
                let d2 = preds[i].pixel().dist2(gts.points[j].pixel());
                if d2 <= r2 {
                    cand.push((d2, i, j));
                }
            }
        }
        cand.sort_unstable();
        let mut pred_used = vec![false; preds.len()];
        let mut gt_used = vec![false; gts.points.len()];
        let mut tp = 0;
        for (d2, i, j) in cand {
            if !pred_used[i] && !gt_used[j] {
                pred_used[i] = true;
                gt_used[j] = true;
                tp += 1;
                result.pairs.push(MatchPair {
                    pred: i,
                    gt: j,
                    class,
                    distance: (d2 as f64).sqrt(),
                });
            }
        }
        result.counts[class.index()] = ClassCounts {
            tp,
            fp: pi.len() - tp,
            fn_: gi.len() - tp,
        };
    }
    result
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub counts: ClassCounts,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Scores {
    /// Indexed by [`CellClass::index`].
    pub per_class: [ClassScore; 2],
    pub mean_f1: f64,
    pub mean_precision: f64,
    pub mean_recall: f64,
}

pub fn f1_scores(m: &MatchResult) -> F1Scores {
    let per_class = m.counts.map(|c| ClassScore {
        f1: c.f1(),
        precision: c.precision(),
        recall: c.recall(),
        counts: c,
    });
    let mean = |f: fn(&ClassScore) -> f64| per_class.iter().map(f).sum::<f64>() / 2.0;
    F1Scores {
        per_class,
        mean_f1: mean(|s| s.f1),
        mean_precision: mean(|s| s.precision),
        mean_recall: mean(|s| s.recall),
    }
}

pub fn evaluate(preds: &[Detection], gts: &PointAnnotations, cfg: &EvalConfig) -> F1Scores {
    f1_scores(&match_detections(preds, gts, cfg))
}

/// Cancer-class F1 over pixels whose ground truth is background or cancer.
pub fn tissue_f1(pred: &LabelMap, gt: &LabelMap) -> Result<f64> {
    if pred.dims() != gt.dims() {
        return Err(Error::Shape(format!(
            "tissue prediction {:?} and ground truth {:?} differ in size",
            pred.dims(),
            gt.dims()
        )));
    }
    let mut counts = ClassCounts::default();
    let mut known = 0usize;
    for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
        if g != TISSUE_BACKGROUND && g != TISSUE_CANCER {
            continue;
        }
        known += 1;
        match (p == TISSUE_CANCER, g == TISSUE_CANCER) {
            (true, true) => counts.tp += 1,
            (true, false) => counts.fp += 1,
            (false, true) => counts.fn_ += 1,
            (false, false) => {}
        }
    }
    if known == 0 {
        return Err(Error::UndefinedScore(
            "every ground-truth tissue pixel is unknown".into(),
        ));
    }
    Ok(counts.f1())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub group: String,
    pub n: usize,
    /// Mean of per-sample mean F1.
    pub macro_f1: f64,
    /// Mean F1 of counts pooled over the group's samples.
    pub micro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    /// Sorted by sample count, largest first, then by name.
    pub rows: Vec<GroupRow>,
    pub overall: GroupRow,
}

pub const OVERALL_GROUP: &str = "all";

fn summarize(group: String, results: &[&MatchResult]) -> GroupRow {
    let mut pooled = MatchResult::default();
    let mut total = 0.0;
    for r in results {
        pooled.pool(r);
        total += f1_scores(r).mean_f1;
    }
    GroupRow {
        group,
        n: results.len(),
        macro_f1: if results.is_empty() { 0.0 } else { total / results.len() as f64 },
        micro_f1: f1_scores(&pooled).mean_f1,
    }
}

/// Per-organ and overall scores of per-sample match results.
pub fn group_report(results: &[MatchResult], tags: &[String]) -> Result<GroupReport> {
    if results.len() != tags.len() {
        return Err(Error::Parameter(format!(
            "{} results but {} organ tags",
            results.len(),
            tags.len()
        )));
    }
    let mut groups: BTreeMap<&str, Vec<&MatchResult>> = BTreeMap::new();
    for (r, t) in results.iter().zip(tags) {
        groups.entry(t.as_str()).or_default().push(r);
    }
    let mut rows: Vec<GroupRow> = groups
        .into_iter()
        .map(|(g, rs)| summarize(g.to_string(), &rs))
        .collect();
    rows.sort_by(|a, b| b.n.cmp(&a.n).then_with(|| a.group.cmp(&b.group)));
    let all: Vec<&MatchResult> = results.iter().collect();
    Ok(GroupReport {
        rows,
        overall: summarize(OVERALL_GROUP.to_string(), &all),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::CellPoint;

    fn det(x: usize, y: usize, class: CellClass) -> Detection {
        Detection { x, y, class, confidence: 1.0 }
    }

    #[test]
    fn identical_sets() {
        let gts = PointAnnotations::new(
            vec![
                CellPoint::new(10, 10, CellClass::TumorCell),
                CellPoint::new(50, 10, CellClass::BackgroundCell),
            ],
            0.2,
        );
        let preds: Vec<_> = gts.points.iter().map(|p| det(p.x, p.y, p.class)).collect();
        let s = evaluate(&preds, &gts, &EvalConfig::default());
        assert_eq!(s.mean_f1, 1.0);
    }

    #[test]
    fn equidistant_tie_goes_to_lower_gt() {
        let gts = PointAnnotations::new(
            vec![
                CellPoint::new(10, 0, CellClass::TumorCell),
                CellPoint::new(0, 0, CellClass::TumorCell),
            ],
            0.2,
        );
        let m = match_detections(&[det(5, 0, CellClass::TumorCell)], &gts, &EvalConfig::default());
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(m.pairs[0].gt, 0);
        assert_eq!(m.class_counts(CellClass::TumorCell), ClassCounts { tp: 1, fp: 0, fn_: 1 });
    }

    #[test]
    fn classes_never_cross_match() {
        let gts = PointAnnotations::new(vec![CellPoint::new(0, 0, CellClass::TumorCell)], 0.2);
        let m = match_detections(&[det(0, 0, CellClass::BackgroundCell)], &gts, &EvalConfig::default());
        assert!(m.pairs.is_empty());
        assert_eq!(m.class_counts(CellClass::BackgroundCell).fp, 1);
        assert_eq!(m.class_counts(CellClass::TumorCell).fn_, 1);
    }

    #[test]
    fn radius_is_inclusive() {
        let gts = PointAnnotations::new(vec![CellPoint::new(0, 0, CellClass::TumorCell)], 0.2);
        let cfg = EvalConfig { match_radius_px: 5 };
        assert_eq!(match_detections(&[det(3, 4, CellClass::TumorCell)], &gts, &cfg).pairs.len(), 1);
        assert_eq!(match_detections(&[det(4, 4, CellClass::TumorCell)], &gts, &cfg).pairs.len(), 0);
    }

    #[test]
    fn f1_spot_value() {
        let c = ClassCounts { tp: 8, fp: 2, fn_: 4 };
        assert!((c.f1() - 16.0 / 22.0).abs() < 1e-12);
        assert_eq!(ClassCounts { tp: 0, fp: 0, fn_: 3 }.f1(), 0.0);
        assert_eq!(ClassCounts::default().f1(), 0.0);
    }

    #[test]
    fn tissue_scores() {
        let gt = LabelMap::from_vec(1, 4, vec![1, 2, 2, 255]).unwrap();
        assert_eq!(tissue_f1(&gt, &gt).unwrap(), 1.0);
        let bg = LabelMap::from_vec(1, 4, vec![1, 1, 1, 2]).unwrap();
        assert_eq!(tissue_f1(&bg, &gt).unwrap(), 0.0);
        let unknown = LabelMap::from_vec(1, 4, vec![255; 4]).unwrap();
        assert!(matches!(tissue_f1(&gt, &unknown), Err(Error::UndefinedScore(_))));
    }

    #[test]
    fn single_organ_report() {
        let mut r = MatchResult::default();
        r.counts[0] = ClassCounts { tp: 3, fp: 1, fn_: 0 };
        let rep = group_report(&[r.clone(), r], &["lung".into(), "lung".into()]).unwrap();
        assert_eq!(rep.rows.len(), 1);
        assert_eq!(rep.rows[0].macro_f1, rep.overall.macro_f1);
        assert_eq!(rep.rows[0].micro_f1, rep.overall.micro_f1);
        assert_eq!(rep.rows[0].n, 2);
    }
}
