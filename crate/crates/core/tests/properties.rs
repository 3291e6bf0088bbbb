//! Randomised invariants.

use celldet_core::eval::{f1_scores, match_detections, ClassCounts, EvalConfig, MatchResult};
use celldet_core::geometry::{apply_transform, average_predictions, invert_transform, GeomTransform};
use celldet_core::groundtruth::{circle_gt, soft_is_gt};
use celldet_core::imgproc::{euclidean_distance_transform, gaussian_blur};
use celldet_core::losses::{generalized_dice_loss, DEFAULT_EPSILON};
use celldet_core::{BinaryMask, CellClass, CellPoint, Detection, PointAnnotations, Raster};
use proptest::prelude::*;

fn points(h: usize, w: usize) -> impl Strategy<Value = PointAnnotations> {
    prop::collection::vec((0..w, 0..h, any::<bool>()), 0..12).prop_map(|v| {
        let pts = v
            .into_iter()
            .map(|(x, y, t)| CellPoint::new(x, y, if t { CellClass::TumorCell } else { CellClass::BackgroundCell }))
            .collect();
        PointAnnotations::new(pts, 0.2)
    })
}

fn raster(h: usize, w: usize, c: usize) -> impl Strategy<Value = Raster> {
    prop::collection::vec(0.0f64..1.0, h * w * c).prop_map(move |v| Raster::from_vec(h, w, c, v).unwrap())
}

fn detections() -> impl Strategy<Value = Vec<Detection>> {
    prop::collection::vec((0usize..60, 0usize..60, any::<bool>()), 0..10).prop_map(|v| {
        v.into_iter()
            .map(|(x, y, t)| Detection {
                x,
                y,
                class: if t { CellClass::TumorCell } else { CellClass::BackgroundCell },
                confidence: 0.5,
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn circle_maps_are_one_hot(pts in points(20, 24), r in 1usize..8) {
        let gt = circle_gt(&pts, 20, 24, r).unwrap();
        for i in 0..gt.maps.plane_len() {
            let s: f64 = (0..3).map(|c| gt.maps.plane(c)[i]).sum();
            prop_assert_eq!(s, 1.0);
        }
    }

    #[test]
    fn soft_maps_lie_on_simplex(pts in points(20, 24), sigma in 0.5f64..8.0) {
        let gt = soft_is_gt(&pts, None, 20, 24, sigma).unwrap();
        for i in 0..gt.maps.plane_len() {
            let v: Vec<f64> = (0..3).map(|c| gt.maps.plane(c)[i]).collect();
            prop_assert!(v.iter().all(|&x| (0.0..=1.0).contains(&x)));
            prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn transforms_round_trip(r in raster(9, 9, 2), k in 0usize..8) {
        let t = GeomTransform::all()[k];
        prop_assert_eq!(invert_transform(&apply_transform(&r, t).unwrap(), t).unwrap(), r);
    }

    #[test]
    fn blur_commutes_with_dihedral_group(r in raster(11, 11, 1), k in 0usize..8, sigma in 0.3f64..3.0) {
        let t = GeomTransform::all()[k];
        let a = gaussian_blur(&apply_transform(&r, t).unwrap(), sigma).unwrap();
        let b = apply_transform(&gaussian_blur(&r, sigma).unwrap(), t).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn blur_preserves_constants(v in 0.0f64..1.0, sigma in 0.3f64..4.0) {
        let r = Raster::filled(7, 9, 2, v);
        prop_assert!(gaussian_blur(&r, sigma).unwrap().max_abs_diff(&r) < 1e-12);
    }

    #[test]
    fn edt_zero_exactly_on_background(bits in prop::collection::vec(any::<bool>(), 12 * 10)) {
        let m = BinaryMask::from_vec(12, 10, bits).unwrap();
        let d = euclidean_distance_transform(&m);
        for i in 0..120 {
            if m.bits()[i] {
                prop_assert!(d.data()[i] >= 1.0);
            } else {
                prop_assert_eq!(d.data()[i], 0.0);
            }
        }
    }

    #[test]
    fn average_within_envelope(a in raster(4, 4, 2), b in raster(4, 4, 2), c in raster(4, 4, 2)) {
        let avg = average_predictions(&[a.clone(), b.clone(), c.clone()]).unwrap();
        for i in 0..avg.data().len() {
            let lo = a.data()[i].min(b.data()[i]).min(c.data()[i]);
            let hi = a.data()[i].max(b.data()[i]).max(c.data()[i]);
            prop_assert!(avg.data()[i] >= lo - 1e-15 && avg.data()[i] <= hi + 1e-15);
        }
    }

    #[test]
    fn dice_in_unit_interval(y in raster(5, 5, 3), p in raster(5, 5, 3)) {
        let v = generalized_dice_loss(&y, &p, DEFAULT_EPSILON).unwrap().value;
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v));
    }

    #[test]
    fn f1_is_monotone(tp in 0usize..20, fp in 0usize..20, fn_ in 0usize..20) {
        let base = ClassCounts { tp, fp, fn_ };
        let more_tp = ClassCounts { tp: tp + 1, ..base };
        let more_fp = ClassCounts { fp: fp + 1, ..base };
        prop_assert!(more_tp.f1() >= base.f1());
        prop_assert!(more_fp.f1() <= base.f1());
        let m = MatchResult { counts: [base, more_fp], pairs: Vec::new() };
        let s = f1_scores(&m).mean_f1;
        prop_assert!((0.0..=1.0).contains(&s));
    }

    #[test]
    fn matching_is_translation_invariant(preds in detections(), gts in points(60, 60), dx in 0usize..50, dy in 0usize..50) {
        let cfg = EvalConfig::default();
        let m = match_detections(&preds, &gts, &cfg);
        let moved: Vec<Detection> = preds.iter().map(|d| Detection { x: d.x + dx, y: d.y + dy, ..*d }).collect();
        let mut g2 = gts.clone();
        for p in &mut g2.points {
            p.x += dx;
            p.y += dy;
        }
        prop_assert_eq!(match_detections(&moved, &g2, &cfg).counts, m.counts);
    }

    #[test]
    fn matching_relabeling_keeps_pairs(preds in detections(), gts in points(60, 60)) {
        // Reversing both lists and mapping indices back gives the same pairs
        // whenever no two candidate distances tie.
        let cfg = EvalConfig::default();
        let m = match_detections(&preds, &gts, &cfg);
        let mut d2: Vec<u64> = Vec::new();
        for p in &preds {
            for g in &gts.points {
                if p.class == g.class {
                    d2.push(p.pixel().dist2(g.pixel()));
                }
            }
        }
        let mut sorted = d2.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assume!(sorted.len() == d2.len());
        let rp: Vec<Detection> = preds.iter().rev().cloned().collect();
        let rg = PointAnnotations::new(gts.points.iter().rev().cloned().collect(), gts.mpp);
        let r = match_detections(&rp, &rg, &cfg);
        let mut a: Vec<(usize, usize)> = m.pairs.iter().map(|p| (p.pred, p.gt)).collect();
        let mut b: Vec<(usize, usize)> = r
            .pairs
            .iter()
            .map(|p| (preds.len() - 1 - p.pred, gts.len() - 1 - p.gt))
            .collect();
        a.sort_unstable();
        b.sort_unstable();
        prop_assert_eq!(a, b);
        prop_assert_eq!(r.counts, m.counts);
    }
}
