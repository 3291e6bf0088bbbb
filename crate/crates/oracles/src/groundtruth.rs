use celldet_core::groundtruth::SOFT_SUPPORT_SIGMAS;
use celldet_core::{CellClass, CellPoint, LabelMap, PointAnnotations, Raster};
use rand::Rng;

pub fn random_annotations<R: Rng>(rng: &mut R, h: usize, w: usize, max_points: usize) -> PointAnnotations {
    let n = rng.gen_range(0..=max_points);
    let points = (0..n)
        .map(|_| {
            let class = if rng.gen_bool(0.5) { CellClass::TumorCell } else { CellClass::BackgroundCell };
            CellPoint::new(rng.gen_range(0..w), rng.gen_range(0..h), class)
        })
        .collect();
    PointAnnotations::new(points, 0.2)
}

/// Random non-overlapping disc instances, labelled 1.. in creation order.
pub fn random_instances<R: Rng>(rng: &mut R, h: usize, w: usize, count: usize) -> LabelMap {
    let mut labels = LabelMap::zeros(h, w);
    for l in 1..=count as u32 {
        let (cx, cy) = (rng.gen_range(0..w) as i64, rng.gen_range(0..h) as i64);
        let r = rng.gen_range(2..6i64);
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                if (x - cx).pow(2) + (y - cy).pow(2) <= r * r && labels.get(y as usize, x as usize) == 0 {
                    labels.set(y as usize, x as usize, l);
                }
            }
        }
    }
    labels
}

/// Class of the nearest annotation within `radius` at every pixel, ties to
/// the lower annotation index; `None` for background.
pub fn circle_owner(pts: &PointAnnotations, h: usize, w: usize, radius: usize) -> Vec<Option<CellClass>> {
    let r2 = (radius * radius) as i64;
    let mut out = vec![None; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut best: Option<(i64, usize)> = None;
            for (i, p) in pts.points.iter().enumerate() {
                let d2 = (p.x as i64 - x as i64).pow(2) + (p.y as i64 - y as i64).pow(2);
                if d2 <= r2 && best.is_none_or(|(bd, _)| d2 < bd) {
                    best = Some((d2, i));
                }
            }
            out[y * w + x] = best.map(|(_, i)| pts.points[i].class);
        }
    }
    out
}

/// One-hot map whose channel 0 is background and channel `class.channel()`
/// the cell class.
pub fn one_hot_map(owner: &[Option<CellClass>], h: usize, w: usize) -> Raster {
    let mut r = Raster::zeros(h, w, 3);
    for (i, o) in owner.iter().enumerate() {
        r.set(o.map_or(0, |c| c.channel()), i / w, i % w, 1.0);
    }
    r
}

/// Soft instance map without instance masking, evaluated pixel by pixel.
pub fn soft_map(pts: &PointAnnotations, h: usize, w: usize, sigma: f64) -> Raster {
    let mut r = Raster::zeros(h, w, 3);
    let reach = SOFT_SUPPORT_SIGMAS * sigma;
    for y in 0..h {
        for x in 0..w {
            let mut v = [0.0f64; 2];
            for p in &pts.points {
                let d2 = (p.x as f64 - x as f64).powi(2) + (p.y as f64 - y as f64).powi(2);
                if d2.sqrt() <= reach {
                    let g = (-d2 / (2.0 * sigma * sigma)).exp();
                    v[p.class.index()] = v[p.class.index()].max(g);
                }
            }
            let s = v[0] + v[1];
            if s > 1.0 {
                v = [v[0] / s, v[1] / s];
            }
            r.set(1, y, x, v[0]);
            r.set(2, y, x, v[1]);
            r.set(0, y, x, (1.0 - v[0] - v[1]).clamp(0.0, 1.0));
        }
    }
    r
}

/// Annotations with no other-class annotation within the Gaussian reach.
pub fn isolated_centroids(pts: &PointAnnotations, sigma: f64) -> Vec<usize> {
    let reach = SOFT_SUPPORT_SIGMAS * sigma;
    (0..pts.len())
        .filter(|&i| {
            let p = pts.points[i];
            pts.points.iter().all(|q| {
                q.class == p.class
                    || ((q.x as f64 - p.x as f64).powi(2) + (q.y as f64 - p.y as f64).powi(2)).sqrt() > reach
            })
        })
        .collect()
}
