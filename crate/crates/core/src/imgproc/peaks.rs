use crate::annotation::Pixel;
use crate::raster::Raster;

/// Maximum over the `(2 r + 1)^2` window around every pixel, clipped at the borders.
fn window_max(values: &[f64], h: usize, w: usize, r: usize) -> Vec<f64> {
    let mut rows = vec![0.0; values.len()];
    for y in 0..h {
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(w - 1);
            rows[y * w + x] = values[y * w + lo..=y * w + hi]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
        }
    }
    let mut out = vec![0.0; values.len()];
    for y in 0..h {
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(h - 1);
        for x in 0..w {
            out[y * w + x] = (lo..=hi)
                .map(|yy| rows[yy * w + x])
                .fold(f64::NEG_INFINITY, f64::max);
        }
    }
    out
}

/// Local maxima of channel 0.
///
/// A candidate is a pixel whose value is `>= threshold_abs` and equals the
/// maximum of its `(2 min_distance + 1)^2` neighbourhood. Candidates are then
/// accepted greedily, highest value first and row-major among equal values,
/// rejecting any candidate closer than `min_distance` (Euclidean) to an
/// accepted peak. A constant raster has no peaks.
pub fn peak_local_max(r: &Raster, min_distance: usize, threshold_abs: f64) -> Vec<Pixel> {
    let min_distance = min_distance.max(1);
    let (h, w) = r.dims();
    let values = r.plane(0);
    if values.iter().all(|&v| v == values[0]) {
        return Vec::new();
    }
    let maxed = window_max(values, h, w, min_distance);
    let mut candidates: Vec<usize> = (0..h * w)
        .filter(|&i| values[i] >= threshold_abs && values[i] == maxed[i])
        .collect();
    // Stable sort keeps row-major order among ties.
    candidates.sort_by(|&a, &b| values[b].total_cmp(&values[a]));

    let limit = (min_distance * min_distance) as u64;
    let mut peaks: Vec<Pixel> = Vec::new();
    for i in candidates {
        let p = Pixel::new(i % w, i / w);
        if peaks.iter().all(|q| q.dist2(p) >= limit) {
            peaks.push(p);
        }
    }
    peaks
}
