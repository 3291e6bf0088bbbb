//! Noiseless prediction maps with known cell positions.

use celldet_core::{CellClass, CellPoint, PointAnnotations, Raster};
use rand::Rng;

fn random_class<R: Rng>(rng: &mut R) -> CellClass {
    if rng.gen_bool(0.5) {
        CellClass::TumorCell
    } else {
        CellClass::BackgroundCell
    }
}

/// Well-separated Gaussian blobs in the class channels with the complement in
/// the background channel. Returns the map and the blob centres.
pub fn soft_prediction<R: Rng>(rng: &mut R, size: usize, cells: usize, min_sep: f64) -> (Raster, PointAnnotations) {
    let margin = 4;
    let mut points: Vec<CellPoint> = Vec::new();
    let mut attempts = 0;
    while points.len() < cells && attempts < 10_000 {
        attempts += 1;
        let x = rng.gen_range(margin..size - margin);
        let y = rng.gen_range(margin..size - margin);
        let far = points
            .iter()
            .all(|p| ((p.x as f64 - x as f64).powi(2) + (p.y as f64 - y as f64).powi(2)).sqrt() >= min_sep);
        if far {
            points.push(CellPoint::new(x, y, random_class(rng)));
        }
    }
    let blobs: Vec<(CellPoint, f64, f64)> = points
        .iter()
        .map(|&p| (p, rng.gen_range(2.5..4.0), rng.gen_range(0.6..0.95)))
        .collect();
    let mut pred = Raster::zeros(size, size, 3);
    for y in 0..size {
        for x in 0..size {
            let mut v = [0.0f64; 2];
            for (p, sigma, amp) in &blobs {
                let d2 = (p.x as f64 - x as f64).powi(2) + (p.y as f64 - y as f64).powi(2);
                let g = amp * (-d2 / (2.0 * sigma * sigma)).exp();
                v[p.class.index()] = v[p.class.index()].max(g);
            }
            pred.set(1, y, x, v[0]);
            pred.set(2, y, x, v[1]);
            pred.set(0, y, x, 1.0 - v[0] - v[1]);
        }
    }
    (pred, PointAnnotations::new(points, 0.2))
}

/// Two overlapping discs of radius `r` whose centres are `ratio * r` apart,
/// painted one-hot into a square map. Returns the map and both centres.
pub fn touching_pair<R: Rng>(rng: &mut R, size: usize, r: f64, ratio: f64) -> (Raster, [(f64, f64); 2]) {
    let d = ratio * r;
    let angle = rng.gen_range(0.0..std::f64::consts::PI);
    let c = size as f64 / 2.0 + rng.gen_range(-1.0..1.0);
    let (dx, dy) = (0.5 * d * angle.cos(), 0.5 * d * angle.sin());
    let centers = [(c - dx, c - dy), (c + dx, c + dy)];
    let class = random_class(rng);
    let mut pred = Raster::zeros(size, size, 3);
    for y in 0..size {
        for x in 0..size {
            let inside = centers
                .iter()
                .any(|&(cx, cy)| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r);
            let ch = if inside { class.channel() } else { 0 };
            pred.set(ch, y, x, 1.0);
        }
    }
    (pred, centers)
}
