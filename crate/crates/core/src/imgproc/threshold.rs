use crate::error::{Error, Result};
use crate::raster::Raster;

const BINS: usize = 256;

/// Otsu threshold of channel 0 over a 256-bin histogram spanning `[min, max]`.
///
/// Pixels `>= threshold` form the upper class. When several consecutive cuts
/// reach the same between-class variance (an empty stretch of the histogram)
/// the middle of that run is returned.
pub fn otsu_threshold(r: &Raster) -> Result<f64> {
    let values = r.plane(0);
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(hi > lo) {
        return Err(Error::Degenerate(
            "Otsu threshold needs at least two distinct values".into(),
        ));
    }
    let bin_width = (hi - lo) / BINS as f64;
    let mut hist = [0u64; BINS];
    for &v in values {
        let b = (((v - lo) / bin_width) as usize).min(BINS - 1);
        hist[b] += 1;
    }

    let total_n: u64 = hist.iter().sum();
    let total_s: u64 = hist.iter().enumerate().map(|(i, &c)| i as u64 * c).sum();
    let mut n0 = 0u64;
    let mut s0 = 0u64;
    let mut best = f64::NEG_INFINITY;
    let mut run = (0usize, 0usize);
    let mut in_run = false;
    for (k, &count) in hist.iter().enumerate().take(BINS - 1) {
        n0 += count;
        s0 += k as u64 * count;
        let n1 = total_n - n0;
        if n0 == 0 || n1 == 0 {
            in_run = false;
            continue;
        }
        let var = between_class(n0, s0, n1, total_s - s0);
        if var > best {
            best = var;
            run = (k, k);
            in_run = true;
        } else if var == best && in_run && run.1 + 1 == k {
            run.1 = k;
        } else {
            in_run = false;
        }
    }
    let k = (run.0 + run.1) / 2;
    Ok(lo + (k + 1) as f64 * bin_width)
}

/// Between-class variance up to the constant factor `1 / N^2`, evaluated on bin
/// indices so that every intermediate below the final square is an exact integer.
#[inline]
pub(crate) fn between_class(n0: u64, s0: u64, n1: u64, s1: u64) -> f64 {
    let num = n1 as f64 * s0 as f64 - n0 as f64 * s1 as f64;
    num * num / (n0 as f64 * n1 as f64)
}
