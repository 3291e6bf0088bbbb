use crate::raster::{BinaryMask, Raster};

const FAR: f64 = 1e20;

/// Lower envelope of parabolas: squared distance transform of one line.
fn squared_edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let intersect = |q: usize, p: usize| -> f64 {
        let (qf, pf) = (q as f64, p as f64);
        ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * qf - 2.0 * pf)
    };
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let mut s = intersect(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = intersect(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Exact Euclidean distance from every foreground pixel to the nearest
/// background pixel; background pixels get 0.
///
/// A mask without any background pixel has no finite answer; every pixel then
/// receives the image diagonal length.
pub fn euclidean_distance_transform(m: &BinaryMask) -> Raster {
    let (h, w) = m.dims();
    if m.count() == h * w {
        let diag = ((h * h + w * w) as f64).sqrt();
        return Raster::filled(h, w, 1, diag);
    }
    let n = h.max(w);
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    let mut grid: Vec<f64> = m.bits().iter().map(|&b| if b { FAR } else { 0.0 }).collect();

    let mut line = vec![0.0; h];
    let mut res = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            line[y] = grid[y * w + x];
        }
        squared_edt_1d(&line, &mut res, &mut v, &mut z);
        for y in 0..h {
            grid[y * w + x] = res[y];
        }
    }
    let mut res = vec![0.0; w];
    for y in 0..h {
        let row = &mut grid[y * w..(y + 1) * w];
        squared_edt_1d(row, &mut res, &mut v, &mut z);
        row.copy_from_slice(&res);
    }
    let data = grid.into_iter().map(f64::sqrt).collect();
    Raster::from_vec(h, w, 1, data).expect("finite distances")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_foreground_uses_diagonal() {
        let d = euclidean_distance_transform(&BinaryMask::from_fn(5, 5, |_, _| true));
        assert!(d.data().iter().all(|&v| v == 50f64.sqrt()));
    }

    #[test]
    fn single_background_pixel_closed_form() {
        let m = BinaryMask::from_fn(4, 4, |x, y| !(x == 0 && y == 0));
        let d = euclidean_distance_transform(&m);
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(d.get(0, y, x), ((x * x + y * y) as f64).sqrt());
            }
        }
    }

    #[test]
    fn all_background_is_zero() {
        let d = euclidean_distance_transform(&BinaryMask::new(3, 7));
        assert!(d.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_row_and_column() {
        let m = BinaryMask::from_fn(1, 6, |x, _| x != 2);
        let d = euclidean_distance_transform(&m);
        assert_eq!(d.plane(0), &[2.0, 1.0, 0.0, 1.0, 2.0, 3.0]);
    }
}
