use celldet_core::Raster;
use rand::Rng;

/// Central finite differences of `f` with respect to every entry of `x`.
pub fn finite_difference(x: &Raster, step: f64, f: impl Fn(&Raster) -> f64) -> Vec<f64> {
    let mut probe = x.clone();
    (0..x.data().len())
        .map(|i| {
            let v = x.data()[i];
            probe.data_mut()[i] = v + step;
            let up = f(&probe);
            probe.data_mut()[i] = v - step;
            let down = f(&probe);
            probe.data_mut()[i] = v;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|)` over the whole vector, 0 for two zero vectors.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Random per-pixel distribution over `c` classes; one-hot when `hard`.
pub fn random_simplex<R: Rng>(rng: &mut R, h: usize, w: usize, c: usize, hard: bool) -> Raster {
    let mut r = Raster::zeros(h, w, c);
    for y in 0..h {
        for x in 0..w {
            if hard {
                r.set(rng.gen_range(0..c), y, x, 1.0);
            } else {
                let v: Vec<f64> = (0..c).map(|_| rng.gen_range(0.01..1.0)).collect();
                let s: f64 = v.iter().sum();
                for (k, vk) in v.iter().enumerate() {
                    r.set(k, y, x, vk / s);
                }
            }
        }
    }
    r
}
