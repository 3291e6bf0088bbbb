//! Greedy matching against maximum matching; F1, tissue F1 and grouping oracles.

use std::collections::BTreeMap;

use celldet_core::eval::{
    f1_scores, group_report, match_detections, tissue_f1, ClassCounts, EvalConfig, MatchResult,
};
use celldet_core::{CellClass, LabelMap};
use celldet_oracles::matching;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn agreement(jittered: bool, field: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let cfg = EvalConfig::default();
    let mut agree = 0;
    for trial in 0..1000 {
        let (preds, gts) = if jittered {
            matching::jittered_instance(&mut rng, field, 10)
        } else {
            matching::random_instance(&mut rng, field, 10)
        };
        let m = match_detections(&preds, &gts, &cfg);
        let best = matching::max_matching(&preds, &gts, cfg.match_radius_px);
        let got = CellClass::ALL.map(|c| m.class_counts(c).tp);
        for k in 0..2 {
            assert!(got[k] <= best[k] && got[k] + 1 >= best[k], "trial {trial}");
        }
        if matching::unambiguous(&preds, &gts, cfg.match_radius_px) {
            assert_eq!(got, best, "trial {trial}");
        }
        if got == best {
            agree += 1;
        }
    }
    agree
}

#[test]
fn greedy_agrees_with_maximum_matching() {
    for field in [100, 200] {
        let agree = agreement(false, field);
        assert!(agree >= 990, "field {field}: agreement {agree}/1000");
    }
}

#[test]
fn greedy_is_within_one_pair_on_crowded_instances() {
    let agree = agreement(true, 200);
    assert!(agree >= 950, "agreement {agree}/1000");
}

#[test]
fn match_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(62);
    let cfg = EvalConfig::default();
    for _ in 0..200 {
        let (preds, gts) = matching::jittered_instance(&mut rng, 150, 10);
        let m = match_detections(&preds, &gts, &cfg);
        let mut seen_p = vec![false; preds.len()];
        let mut seen_g = vec![false; gts.len()];
        for p in &m.pairs {
            assert!(!seen_p[p.pred] && !seen_g[p.gt]);
            seen_p[p.pred] = true;
            seen_g[p.gt] = true;
            assert!(p.distance <= cfg.match_radius_px as f64);
            assert_eq!(preds[p.pred].class, gts.points[p.gt].class);
        }
        for c in CellClass::ALL {
            let n = m.pairs.iter().filter(|p| p.class == c).count();
            assert_eq!(m.class_counts(c).tp, n);
        }
        // Shifting both sets leaves the counts unchanged.
        let shifted_p: Vec<_> = preds.iter().map(|d| celldet_core::Detection { x: d.x + 37, y: d.y + 5, ..*d }).collect();
        let mut shifted_g = gts.clone();
        for q in &mut shifted_g.points {
            q.x += 37;
            q.y += 5;
        }
        assert_eq!(match_detections(&shifted_p, &shifted_g, &cfg).counts, m.counts);
    }
}

#[test]
fn f1_formula_spot_check() {
    let mut m = MatchResult::default();
    m.counts[0] = ClassCounts { tp: 8, fp: 2, fn_: 4 };
    m.counts[1] = ClassCounts { tp: 8, fp: 2, fn_: 4 };
    let s = f1_scores(&m);
    assert!((s.mean_f1 - 0.7273).abs() < 1e-4);
    assert!((s.per_class[0].precision - 0.8).abs() < 1e-12);
    assert!((s.per_class[0].recall - 8.0 / 12.0).abs() < 1e-12);
}

#[test]
fn tissue_f1_equals_confusion_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(63);
    for _ in 0..50 {
        let n = 100;
        let gt: Vec<u32> = (0..n).map(|_| [1, 2, 255][rng.gen_range(0..3)]).collect();
        let pred: Vec<u32> = (0..n).map(|_| [1, 2][rng.gen_range(0..2)]).collect();
        let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
        for i in 0..n {
            match (pred[i], gt[i]) {
                (_, 255) => {}
                (2, 2) => tp += 1.0,
                (2, 1) => fp += 1.0,
                (1, 2) => fn_ += 1.0,
                _ => {}
            }
        }
        let want = 2.0 * tp / (2.0 * tp + fp + fn_);
        let got = tissue_f1(&LabelMap::from_vec(10, 10, pred.clone()).unwrap(), &LabelMap::from_vec(10, 10, gt.clone()).unwrap()).unwrap();
        assert!((got - want).abs() < 1e-12);
        // Content of unknown pixels is irrelevant.
        let mut other = pred.clone();
        for i in 0..n {
            if gt[i] == 255 {
                other[i] = 3 - other[i];
            }
        }
        let again = tissue_f1(&LabelMap::from_vec(10, 10, other).unwrap(), &LabelMap::from_vec(10, 10, gt).unwrap()).unwrap();
        assert_eq!(got, again);
    }
}

#[test]
fn group_means_equal_group_by_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    let organs = ["kidney", "bladder", "stomach", "prostate"];
    let mut results = Vec::new();
    let mut tags = Vec::new();
    for _ in 0..40 {
        let mut m = MatchResult::default();
        for c in &mut m.counts {
            *c = ClassCounts { tp: rng.gen_range(0..10), fp: rng.gen_range(0..5), fn_: rng.gen_range(0..5) };
        }
        results.push(m);
        tags.push(organs[rng.gen_range(0..4)].to_string());
    }
    let rep = group_report(&results, &tags).unwrap();
    let mut by: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (r, t) in results.iter().zip(&tags) {
        by.entry(t).or_default().push(f1_scores(r).mean_f1);
    }
    for row in &rep.rows {
        let v = &by[row.group.as_str()];
        assert_eq!(row.n, v.len());
        assert!((row.macro_f1 - v.iter().sum::<f64>() / v.len() as f64).abs() < 1e-12);
    }
    assert!(rep.rows.windows(2).all(|p| p[0].n >= p[1].n));
    assert_eq!(rep.overall.n, 40);
}
