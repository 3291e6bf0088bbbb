use celldet_core::{CellClass, CellPoint, Detection, PointAnnotations};
use rand::Rng;

/// Maximum-cardinality matching size per class (indexed by
/// [`CellClass::index`]) by dynamic programming over subsets of annotations.
/// Intended for at most a dozen points per class.
pub fn max_matching(preds: &[Detection], gts: &PointAnnotations, radius: u32) -> [usize; 2] {
    let r2 = radius as i64 * radius as i64;
    CellClass::ALL.map(|class| {
        let p: Vec<&Detection> = preds.iter().filter(|d| d.class == class).collect();
        let g: Vec<&CellPoint> = gts.points.iter().filter(|q| q.class == class).collect();
        assert!(g.len() <= 16, "oracle is exponential in the annotation count");
        let close = |a: &Detection, b: &CellPoint| {
            (a.x as i64 - b.x as i64).pow(2) + (a.y as i64 - b.y as i64).pow(2) <= r2
        };
        // best[mask] = largest matching of the predictions seen so far using exactly the gts in mask.
        let mut best = vec![None; 1 << g.len()];
        best[0] = Some(0usize);
        for a in &p {
            let mut next = best.clone();
            for mask in 0..best.len() {
                let Some(v) = best[mask] else { continue };
                for (j, b) in g.iter().enumerate() {
                    if mask & (1 << j) == 0 && close(a, b) {
                        let m = mask | (1 << j);
                        if next[m].is_none_or(|cur| cur < v + 1) {
                            next[m] = Some(v + 1);
                        }
                    }
                }
            }
            best = next;
        }
        best.into_iter().flatten().max().unwrap_or(0)
    })
}

/// True when every prediction has at most one annotation of its class in
/// range and vice versa, so the optimal matching is forced.
pub fn unambiguous(preds: &[Detection], gts: &PointAnnotations, radius: u32) -> bool {
    let r2 = radius as i64 * radius as i64;
    let close = |a: &Detection, b: &CellPoint| {
        a.class == b.class && (a.x as i64 - b.x as i64).pow(2) + (a.y as i64 - b.y as i64).pow(2) <= r2
    };
    preds.iter().all(|a| gts.points.iter().filter(|b| close(a, b)).count() <= 1)
        && gts.points.iter().all(|b| preds.iter().filter(|a| close(a, b)).count() <= 1)
}

/// Up to `max_points` annotations and up to `max_points` predictions, each
/// placed uniformly in a `field x field` square with a random class.
pub fn random_instance<R: Rng>(rng: &mut R, field: usize, max_points: usize) -> (Vec<Detection>, PointAnnotations) {
    let class = |rng: &mut R| if rng.gen_bool(0.5) { CellClass::TumorCell } else { CellClass::BackgroundCell };
    let n = rng.gen_range(0..=max_points);
    let gts: Vec<CellPoint> = (0..n)
        .map(|_| CellPoint::new(rng.gen_range(0..field), rng.gen_range(0..field), class(rng)))
        .collect();
    let m = rng.gen_range(0..=max_points);
    let preds = (0..m)
        .map(|_| {
            let c = class(rng);
            Detection { x: rng.gen_range(0..field), y: rng.gen_range(0..field), class: c, confidence: 1.0 }
        })
        .collect();
    (preds, PointAnnotations::new(gts, 0.2))
}

/// Up to `max_points` annotations in a `field x field` square and noisy
/// copies of a random subset as predictions, plus some spurious predictions.
/// Far more crowded than [`random_instance`].
pub fn jittered_instance<R: Rng>(rng: &mut R, field: usize, max_points: usize) -> (Vec<Detection>, PointAnnotations) {
    let class = |rng: &mut R| if rng.gen_bool(0.5) { CellClass::TumorCell } else { CellClass::BackgroundCell };
    let n = rng.gen_range(0..=max_points);
    let gts: Vec<CellPoint> = (0..n)
        .map(|_| CellPoint::new(rng.gen_range(0..field), rng.gen_range(0..field), class(rng)))
        .collect();
    let mut preds = Vec::new();
    for g in &gts {
        if preds.len() < max_points && rng.gen_bool(0.8) {
            let jitter = |v: usize, rng: &mut R| (v as i64 + rng.gen_range(-12..=12)).clamp(0, field as i64 - 1) as usize;
            let (x, y) = (jitter(g.x, rng), jitter(g.y, rng));
            let c = if rng.gen_bool(0.9) { g.class } else { class(rng) };
            preds.push(Detection { x, y, class: c, confidence: 1.0 });
        }
    }
    while preds.len() < max_points && rng.gen_bool(0.3) {
        let c = class(rng);
        preds.push(Detection {
            x: rng.gen_range(0..field),
            y: rng.gen_range(0..field),
            class: c,
            confidence: 1.0,
        });
    }
    (preds, PointAnnotations::new(gts, 0.2))
}
