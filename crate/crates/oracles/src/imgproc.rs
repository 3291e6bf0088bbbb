use celldet_core::{BinaryMask, LabelMap, Pixel, Raster};
use rand::Rng;

use crate::{step, N4, N8};

pub fn random_mask<R: Rng>(rng: &mut R, h: usize, w: usize, density: f64) -> BinaryMask {
    BinaryMask::from_fn(h, w, |_, _| rng.gen_bool(density))
}

/// Union of random discs.
pub fn disc_mask<R: Rng>(rng: &mut R, h: usize, w: usize, discs: usize) -> BinaryMask {
    let centers: Vec<(f64, f64, f64)> = (0..discs)
        .map(|_| (rng.gen_range(0.0..w as f64), rng.gen_range(0.0..h as f64), rng.gen_range(1.5..6.0)))
        .collect();
    BinaryMask::from_fn(h, w, |x, y| {
        centers
            .iter()
            .any(|&(cx, cy, r)| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r)
    })
}

/// Distance to the nearest background pixel by scanning all of them.
pub fn edt(m: &BinaryMask) -> Vec<f64> {
    let (h, w) = m.dims();
    let bg: Vec<(usize, usize)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| !m.get(y, x))
        .collect();
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            if m.get(y, x) {
                let best = bg
                    .iter()
                    .map(|&(bx, by)| {
                        let dx = bx as i64 - x as i64;
                        let dy = by as i64 - y as i64;
                        (dx * dx + dy * dy) as u64
                    })
                    .min()
                    .expect("mask has background");
                out[y * w + x] = (best as f64).sqrt();
            }
        }
    }
    out
}

/// Exhaustive 256-bin Otsu search with textbook class weights and means.
/// Cuts within a relative 1e-12 of the optimum count as tied; the middle
/// of the tied run wins.
pub fn otsu(values: &[f64]) -> f64 {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let bw = (hi - lo) / 256.0;
    let mut hist = [0f64; 256];
    for &v in values {
        hist[(((v - lo) / bw) as usize).min(255)] += 1.0;
    }
    let n = values.len() as f64;
    let mut scores = Vec::new();
    for k in 0..255 {
        let c0: f64 = hist[..=k].iter().sum();
        let c1: f64 = hist[k + 1..].iter().sum();
        if c0 == 0.0 || c1 == 0.0 {
            scores.push(f64::NEG_INFINITY);
            continue;
        }
        let m0 = (0..=k).map(|i| i as f64 * hist[i]).sum::<f64>() / c0;
        let m1 = (k + 1..256).map(|i| i as f64 * hist[i]).sum::<f64>() / c1;
        scores.push((c0 / n) * (c1 / n) * (m0 - m1).powi(2));
    }
    let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = (0..255).filter(|&k| scores[k] >= best * (1.0 - 1e-12)).collect();
    assert!(tied.windows(2).all(|p| p[1] == p[0] + 1), "non-contiguous optimum {tied:?}");
    let k = (tied[0] + tied[tied.len() - 1]) / 2;
    lo + (k + 1) as f64 * bw
}

/// Window-maximum candidates by direct scan, then greedy suppression in
/// descending value order (row-major among ties).
pub fn peaks(r: &Raster, md: usize, thr: f64) -> Vec<Pixel> {
    let (h, w) = r.dims();
    let v = |x: usize, y: usize| r.get(0, y, x);
    if r.plane(0).iter().all(|&a| a == r.plane(0)[0]) {
        return Vec::new();
    }
    let mut cands = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let mut is_max = v(x, y) >= thr;
            for yy in y.saturating_sub(md)..=(y + md).min(h - 1) {
                for xx in x.saturating_sub(md)..=(x + md).min(w - 1) {
                    if v(xx, yy) > v(x, y) {
                        is_max = false;
                    }
                }
            }
            if is_max {
                cands.push((x, y));
            }
        }
    }
    cands.sort_by(|a, b| {
        v(b.0, b.1)
            .partial_cmp(&v(a.0, a.1))
            .unwrap()
            .then((a.1, a.0).cmp(&(b.1, b.0)))
    });
    let mut out: Vec<Pixel> = Vec::new();
    for (x, y) in cands {
        let ok = out.iter().all(|p| {
            let dx = p.x as f64 - x as f64;
            let dy = p.y as f64 - y as f64;
            (dx * dx + dy * dy).sqrt() >= md as f64
        });
        if ok {
            out.push(Pixel::new(x, y));
        }
    }
    out
}

/// 8-connected labels by depth-first flood fill in raster order.
pub fn components(m: &BinaryMask) -> Vec<u32> {
    let (h, w) = m.dims();
    let mut out = vec![0u32; h * w];
    let mut next = 0;
    for y in 0..h {
        for x in 0..w {
            if !m.get(y, x) || out[y * w + x] != 0 {
                continue;
            }
            next += 1;
            out[y * w + x] = next;
            let mut stack = vec![(x, y)];
            while let Some((cx, cy)) = stack.pop() {
                for d in N8 {
                    if let Some((nx, ny)) = step(cx, cy, d, w, h) {
                        if m.get(ny, nx) && out[ny * w + nx] == 0 {
                            out[ny * w + nx] = next;
                            stack.push((nx, ny));
                        }
                    }
                }
            }
        }
    }
    out
}

/// Small-object removal followed by hole filling, with a separate
/// border-reachability search from every background pixel.
pub fn remove_small_and_fill(m: &BinaryMask, min_area: usize) -> Vec<bool> {
    let (h, w) = m.dims();
    let labels = components(m);
    let kept: Vec<bool> = labels
        .iter()
        .map(|&l| l > 0 && labels.iter().filter(|&&k| k == l).count() >= min_area)
        .collect();
    let mut out = vec![true; h * w];
    for start in 0..h * w {
        if kept[start] {
            continue;
        }
        let mut seen = vec![false; h * w];
        let mut stack = vec![start];
        seen[start] = true;
        let mut border = false;
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                border = true;
                break;
            }
            for d in N4 {
                if let Some((nx, ny)) = step(x, y, d, w, h) {
                    let j = ny * w + nx;
                    if !kept[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        out[start] = !border;
    }
    out
}

/// Priority flood with a linear-scan queue: always expands the queued pixel
/// of lowest elevation, earliest insertion first.
pub fn watershed(elev: &Raster, markers: &LabelMap, mask: &BinaryMask) -> Vec<u32> {
    let (h, w) = elev.dims();
    let mut out = vec![0u32; h * w];
    let mut queue: Vec<(f64, usize, usize)> = Vec::new();
    let mut order = 0;
    for y in 0..h {
        for x in 0..w {
            let l = markers.get(y, x);
            if l > 0 {
                out[y * w + x] = l;
                queue.push((elev.get(0, y, x), order, y * w + x));
                order += 1;
            }
        }
    }
    while !queue.is_empty() {
        let pos = (0..queue.len())
            .min_by(|&a, &b| {
                queue[a]
                    .0
                    .partial_cmp(&queue[b].0)
                    .unwrap()
                    .then(queue[a].1.cmp(&queue[b].1))
            })
            .unwrap();
        let (_, _, i) = queue.swap_remove(pos);
        for d in N8 {
            if let Some((nx, ny)) = step(i % w, i / w, d, w, h) {
                let j = ny * w + nx;
                if mask.get(ny, nx) && out[j] == 0 {
                    out[j] = out[i];
                    queue.push((elev.get(0, ny, nx), order, j));
                    order += 1;
                }
            }
        }
    }
    out
}

/// Random watershed instance: disc-union mask, up to five markers inside it,
/// and either a −EDT or a noise elevation.
pub fn watershed_instance<R: Rng>(rng: &mut R, trial: usize) -> Option<(Raster, LabelMap, BinaryMask)> {
    let (h, w) = (rng.gen_range(10..26), rng.gen_range(10..26));
    let mask = disc_mask(rng, h, w, 5);
    let inside: Vec<usize> = (0..h * w).filter(|&i| mask.bits()[i]).collect();
    if inside.is_empty() {
        return None;
    }
    let mut markers = LabelMap::zeros(h, w);
    for l in 1..=rng.gen_range(1..6u32) {
        let i = inside[rng.gen_range(0..inside.len())];
        markers.set(i / w, i % w, l);
    }
    let elev = if trial % 2 == 0 {
        if mask.count() == h * w {
            Raster::zeros(h, w, 1)
        } else {
            Raster::from_vec(h, w, 1, edt(&mask).into_iter().map(|v| -v).collect()).unwrap()
        }
    } else {
        Raster::from_vec(h, w, 1, (0..h * w).map(|_| rng.gen::<f64>()).collect()).unwrap()
    };
    Some((elev, markers, mask))
}
