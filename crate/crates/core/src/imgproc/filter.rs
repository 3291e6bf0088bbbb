use crate::error::{Error, Result};
use crate::raster::Raster;

/// Normalised half kernel `k[0..=radius]` of a Gaussian truncated at `ceil(4 sigma)`,
/// such that `k[0] + 2 * sum(k[1..])` is one.
pub fn gaussian_half_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Parameter(format!(
            "blur sigma must be positive, got {sigma}"
        )));
    }
    let radius = (4.0 * sigma).ceil() as usize;
    let mut k: Vec<f64> = (0..=radius)
        .map(|a| (-((a * a) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total = k[0] + 2.0 * k[1..].iter().sum::<f64>();
    k.iter_mut().for_each(|v| *v /= total);
    Ok(k)
}

/// Mirror index into `0..n` with half-sample symmetric reflection (`d c b a | a b c d`).
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// One 1-D pass. `stride` selects rows (1) or columns (`width`); the
/// symmetric-pair accumulation keeps the result exactly mirror invariant.
fn convolve_pass(src: &[f64], h: usize, w: usize, kernel: &[f64], horizontal: bool) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    let (lines, len) = if horizontal { (h, w) } else { (w, h) };
    let at = |line: usize, i: usize| -> usize {
        if horizontal {
            line * w + i
        } else {
            i * w + line
        }
    };
    for line in 0..lines {
        for i in 0..len {
            let mut acc = kernel[0] * src[at(line, i)];
            for (a, &k) in kernel.iter().enumerate().skip(1) {
                let lo = reflect(i as isize - a as isize, len);
                let hi = reflect((i + a) as isize, len);
                acc += k * (src[at(line, lo)] + src[at(line, hi)]);
            }
            out[at(line, i)] = acc;
        }
    }
    out
}

/// Separable Gaussian blur with reflective borders, applied to every channel.
///
/// Both pass orders are evaluated and averaged, which makes the filter commute
/// bit-exactly with the eight rotations and flips of a square raster.
pub fn gaussian_blur(r: &Raster, sigma_px: f64) -> Result<Raster> {
    let kernel = gaussian_half_kernel(sigma_px)?;
    let (h, w) = r.dims();
    let mut out = r.clone();
    for c in 0..r.channels() {
        let src = r.plane(c);
        let hv = convolve_pass(&convolve_pass(src, h, w, &kernel, true), h, w, &kernel, false);
        let vh = convolve_pass(&convolve_pass(src, h, w, &kernel, false), h, w, &kernel, true);
        for ((o, a), b) in out.plane_mut(c).iter_mut().zip(&hv).zip(&vh) {
            *o = 0.5 * (a + b);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResizeMode {
    Nearest,
    Bilinear,
}

/// Corner-aligned source coordinate of output index `dst`.
#[inline]
pub(crate) fn source_coord(dst: usize, in_n: usize, out_n: usize) -> f64 {
    if out_n == 1 || in_n == 1 {
        0.0
    } else {
        dst as f64 * (in_n - 1) as f64 / (out_n - 1) as f64
    }
}

/// Resamples every channel to `out_h x out_w` with corner-aligned sampling.
pub fn resize(r: &Raster, out_h: usize, out_w: usize, mode: ResizeMode) -> Result<Raster> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::Parameter(format!(
            "resize target must be positive, got {out_h}x{out_w}"
        )));
    }
    let (h, w) = r.dims();
    let mut out = Raster::zeros(out_h, out_w, r.channels());
    out.mpp = r.mpp.map(|m| m * w as f64 / out_w as f64);
    for c in 0..r.channels() {
        let src = r.plane(c);
        let dst = out.plane_mut(c);
        for oy in 0..out_h {
            let sy = source_coord(oy, h, out_h);
            for ox in 0..out_w {
                let sx = source_coord(ox, w, out_w);
                dst[oy * out_w + ox] = match mode {
                    ResizeMode::Nearest => {
                        let ny = ((sy + 0.5).floor() as usize).min(h - 1);
                        let nx = ((sx + 0.5).floor() as usize).min(w - 1);
                        src[ny * w + nx]
                    }
                    ResizeMode::Bilinear => {
                        let y0 = (sy.floor() as usize).min(h - 1);
                        let x0 = (sx.floor() as usize).min(w - 1);
                        let y1 = (y0 + 1).min(h - 1);
                        let x1 = (x0 + 1).min(w - 1);
                        let fy = sy - y0 as f64;
                        let fx = sx - x0 as f64;
                        let top = (1.0 - fx) * src[y0 * w + x0] + fx * src[y0 * w + x1];
                        let bottom = (1.0 - fx) * src[y1 * w + x0] + fx * src[y1 * w + x1];
                        (1.0 - fy) * top + fy * bottom
                    }
                };
            }
        }
    }
    Ok(out)
}

/// Copies the `w x h` window whose top-left corner is `(x0, y0)`.
pub fn crop(r: &Raster, x0: usize, y0: usize, w: usize, h: usize) -> Result<Raster> {
    let (height, width) = r.dims();
    if w == 0 || h == 0 || x0 + w > width || y0 + h > height {
        return Err(Error::Bounds {
            x0,
            y0,
            w,
            h,
            width,
            height,
        });
    }
    let mut out = Raster::zeros(h, w, r.channels());
    out.mpp = r.mpp;
    for c in 0..r.channels() {
        let src = r.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..h {
            let row = (y0 + y) * width + x0;
            dst[y * w..(y + 1) * w].copy_from_slice(&src[row..row + w]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_blur_oracle(r: &Raster, sigma: f64) -> Raster {
        let radius = (4.0 * sigma).ceil() as isize;
        let g = |a: isize| (-((a * a) as f64) / (2.0 * sigma * sigma)).exp();
        let norm: f64 = (-radius..=radius).map(g).sum();
        let (h, w) = r.dims();
        Raster::from_fn(h, w, |x, y| {
            let mut acc = 0.0;
            for dy in -radius..=radius {
                for dx in -radius..=radius {
                    let sy = reflect(y as isize + dy, h);
                    let sx = reflect(x as isize + dx, w);
                    acc += g(dx) * g(dy) / (norm * norm) * r.get(0, sy, sx);
                }
            }
            acc
        })
    }

    #[test]
    fn reflect_indices() {
        let got: Vec<usize> = (-3..7).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, vec![2, 1, 0, 0, 1, 2, 3, 3, 2, 1]);
        assert_eq!(reflect(-9, 2), 0);
    }

    #[test]
    fn blur_of_constant_is_constant() {
        let r = Raster::filled(7, 5, 1, 0.5);
        for sigma in [0.3, 1.0, 2.5, 9.0] {
            let b = gaussian_blur(&r, sigma).unwrap();
            assert!(b.max_abs_diff(&r) < 1e-12, "sigma {sigma}");
        }
    }

    #[test]
    fn blur_impulse_is_symmetric_and_peaked() {
        let mut r = Raster::zeros(11, 11, 1);
        r.set(0, 5, 5, 1.0);
        let b = gaussian_blur(&r, 2.0).unwrap();
        let (_, hi) = b.min_max();
        assert_eq!(b.get(0, 5, 5), hi);
        for y in 0..11 {
            for x in 0..11 {
                // 90 degree rotation about the centre
                assert_eq!(b.get(0, y, x), b.get(0, x, 10 - y));
            }
        }
    }

    #[test]
    fn blur_matches_dense_convolution() {
        let mut r = Raster::zeros(9, 9, 1);
        r.set(0, 4, 4, 1.0);
        let b = gaussian_blur(&r, 1.0).unwrap();
        assert!(b.max_abs_diff(&dense_blur_oracle(&r, 1.0)) < 1e-6);

        let noisy = Raster::from_fn(13, 10, |x, y| ((x * 7 + y * 13) % 11) as f64 / 11.0);
        let b = gaussian_blur(&noisy, 1.7).unwrap();
        assert!(b.max_abs_diff(&dense_blur_oracle(&noisy, 1.7)) < 1e-9);
    }

    #[test]
    fn blur_rejects_bad_sigma() {
        let r = Raster::zeros(3, 3, 1);
        assert!(matches!(gaussian_blur(&r, 0.0), Err(Error::Parameter(_))));
        assert!(gaussian_blur(&r, -1.0).is_err());
        assert!(gaussian_blur(&r, f64::NAN).is_err());
    }

    #[test]
    fn nearest_upsample_makes_blocks() {
        let r = Raster::from_vec(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let up = resize(&r, 4, 4, ResizeMode::Nearest).unwrap();
        let expected = [
            1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 3.0, 3.0, 4.0, 4.0,
        ];
        assert_eq!(up.plane(0), &expected);
    }

    #[test]
    fn resize_constant_stays_constant() {
        let r = Raster::filled(5, 3, 2, 0.25);
        for mode in [ResizeMode::Nearest, ResizeMode::Bilinear] {
            for (oh, ow) in [(1, 1), (17, 4), (2, 9)] {
                let out = resize(&r, oh, ow, mode).unwrap();
                assert!(out.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
            }
        }
        assert!(resize(&r, 0, 3, ResizeMode::Nearest).is_err());
    }

    #[test]
    fn bilinear_ramp_matches_closed_form() {
        // f(x, y) = x + 10 y is reproduced exactly by bilinear interpolation.
        let r = Raster::from_fn(4, 4, |x, y| x as f64 + 10.0 * y as f64);
        let up = resize(&r, 16, 16, ResizeMode::Bilinear).unwrap();
        for oy in 0..16 {
            for ox in 0..16 {
                let sx = ox as f64 * 3.0 / 15.0;
                let sy = oy as f64 * 3.0 / 15.0;
                assert!((up.get(0, oy, ox) - (sx + 10.0 * sy)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn crop_identity_and_composition() {
        let r = Raster::from_fn(8, 10, |x, y| (x * 31 + y * 7) as f64);
        assert_eq!(crop(&r, 0, 0, 10, 8).unwrap(), r);
        let one = crop(&r, 3, 5, 1, 1).unwrap();
        assert_eq!(one.plane(0), &[r.get(0, 5, 3)]);
        let twice = crop(&crop(&r, 2, 1, 7, 6).unwrap(), 1, 2, 4, 3).unwrap();
        assert_eq!(twice, crop(&r, 3, 3, 4, 3).unwrap());
        assert!(matches!(crop(&r, 5, 0, 6, 1), Err(Error::Bounds { .. })));
        assert!(crop(&r, 0, 0, 0, 1).is_err());
    }
}
