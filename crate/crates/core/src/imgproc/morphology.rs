use std::collections::VecDeque;

use super::{offset, NEIGHBORS_8};
use crate::annotation::Pixel;
use crate::raster::{BinaryMask, LabelMap};

fn find(parent: &mut [u32], mut i: u32) -> u32 {
    while parent[i as usize] != i {
        parent[i as usize] = parent[parent[i as usize] as usize];
        i = parent[i as usize];
    }
    i
}

/// 8-connected component labelling. Labels are `1..=K`, numbered in raster
/// order of each component's first pixel.
pub fn connected_components(m: &BinaryMask) -> LabelMap {
    let (h, w) = m.dims();
    let mut provisional = vec![0u32; h * w];
    let mut parent: Vec<u32> = vec![0];
    // Only the already-visited half of the neighbourhood is inspected.
    const PRIOR: [(isize, isize); 4] = [(-1, -1), (0, -1), (1, -1), (-1, 0)];
    for y in 0..h {
        for x in 0..w {
            if !m.get(y, x) {
                continue;
            }
            let mut current = 0u32;
            for (dx, dy) in PRIOR {
                let Some((nx, ny)) = offset(x, y, dx, dy, w, h) else {
                    continue;
                };
                let l = provisional[ny * w + nx];
                if l == 0 {
                    continue;
                }
                if current == 0 {
                    current = find(&mut parent, l);
                } else {
                    let a = find(&mut parent, current);
                    let b = find(&mut parent, l);
                    if a != b {
                        let (keep, drop) = if a < b { (a, b) } else { (b, a) };
                        parent[drop as usize] = keep;
                        current = keep;
                    }
                }
            }
            if current == 0 {
                current = parent.len() as u32;
                parent.push(current);
            }
            provisional[y * w + x] = current;
        }
    }

    let mut final_label = vec![0u32; parent.len()];
    let mut next = 0u32;
    let mut out = LabelMap::zeros(h, w);
    for (i, &l) in provisional.iter().enumerate() {
        if l == 0 {
            continue;
        }
        let root = find(&mut parent, l) as usize;
        if final_label[root] == 0 {
            next += 1;
            final_label[root] = next;
        }
        out.labels_mut()[i] = final_label[root];
    }
    out
}

/// Deletes 8-connected objects smaller than `min_area` pixels, then fills
/// every background region (4-connected) that does not touch the border.
pub fn remove_small_objects_and_fill_holes(m: &BinaryMask, min_area: usize) -> BinaryMask {
    let (h, w) = m.dims();
    let labels = connected_components(m);
    let mut area = vec![0usize; labels.max_label() as usize + 1];
    for &l in labels.labels() {
        area[l as usize] += 1;
    }
    let kept: Vec<bool> = labels
        .labels()
        .iter()
        .map(|&l| l > 0 && area[l as usize] >= min_area)
        .collect();

    // Background reachable from the border stays background; the rest are holes.
    let mut outside = vec![false; h * w];
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            let border = x == 0 || y == 0 || x + 1 == w || y + 1 == h;
            if border && !kept[y * w + x] {
                outside[y * w + x] = true;
                queue.push_back((x, y));
            }
        }
    }
    while let Some((x, y)) = queue.pop_front() {
        for (dx, dy) in [(0, -1), (-1, 0), (1, 0), (0, 1)] {
            if let Some((nx, ny)) = offset(x, y, dx, dy, w, h) {
                let i = ny * w + nx;
                if !kept[i] && !outside[i] {
                    outside[i] = true;
                    queue.push_back((nx, ny));
                }
            }
        }
    }
    BinaryMask::from_vec(h, w, outside.iter().map(|&o| !o).collect()).expect("same dims")
}

/// Rounded centroid of every positive label, in ascending label order.
pub fn center_of_mass(labels: &LabelMap) -> Vec<(u32, Pixel)> {
    let (h, w) = labels.dims();
    let n = labels.max_label() as usize + 1;
    let mut sx = vec![0u64; n];
    let mut sy = vec![0u64; n];
    let mut count = vec![0u64; n];
    for y in 0..h {
        for x in 0..w {
            let l = labels.get(y, x) as usize;
            if l > 0 {
                sx[l] += x as u64;
                sy[l] += y as u64;
                count[l] += 1;
            }
        }
    }
    (1..n)
        .filter(|&l| count[l] > 0)
        .map(|l| {
            let cx = (sx[l] as f64 / count[l] as f64).round() as usize;
            let cy = (sy[l] as f64 / count[l] as f64).round() as usize;
            (l as u32, Pixel::new(cx, cy))
        })
        .collect()
}

pub(crate) fn neighbors8(x: usize, y: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    NEIGHBORS_8
        .iter()
        .filter_map(move |&(dx, dy)| offset(x, y, dx, dy, w, h))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(m: &mut BinaryMask, x0: usize, y0: usize, s: usize) {
        for y in y0..y0 + s {
            for x in x0..x0 + s {
                m.set(y, x, true);
            }
        }
    }

    #[test]
    fn empty_mask_has_no_components() {
        let l = connected_components(&BinaryMask::new(5, 6));
        assert!(l.labels().iter().all(|&v| v == 0));
    }

    #[test]
    fn two_squares_two_labels() {
        let mut m = BinaryMask::new(10, 10);
        square(&mut m, 0, 0, 3);
        square(&mut m, 6, 5, 3);
        let l = connected_components(&m);
        assert_eq!(l.ids(), vec![1, 2]);
        assert_eq!(l.get(1, 1), 1);
        assert_eq!(l.get(6, 7), 2);
    }

    #[test]
    fn diagonal_touch_is_connected() {
        let mut m = BinaryMask::new(4, 4);
        m.set(0, 0, true);
        m.set(1, 1, true);
        m.set(2, 2, true);
        assert_eq!(connected_components(&m).ids(), vec![1]);
    }

    #[test]
    fn u_shape_merges_late() {
        // Two arms joined only at the bottom row need the union step.
        let m = BinaryMask::from_fn(5, 5, |x, y| x == 0 || x == 4 || y == 4);
        let l = connected_components(&m);
        assert_eq!(l.ids(), vec![1]);
    }

    #[test]
    fn small_objects_removed() {
        let mut m = BinaryMask::new(6, 6);
        m.set(2, 2, true);
        m.set(2, 3, true);
        let out = remove_small_objects_and_fill_holes(&m, 3);
        assert_eq!(out.count(), 0);
        assert_eq!(remove_small_objects_and_fill_holes(&m, 2).count(), 2);
    }

    #[test]
    fn ring_is_filled() {
        let m = BinaryMask::from_fn(12, 12, |x, y| {
            (1..=10).contains(&x) && (1..=10).contains(&y) && (x == 1 || x == 10 || y == 1 || y == 10)
        });
        let out = remove_small_objects_and_fill_holes(&m, 0);
        assert_eq!(out.count(), 100);
        assert!(out.get(5, 5));
        assert!(!out.get(0, 0));
    }

    #[test]
    fn centroid_of_square() {
        let mut m = BinaryMask::new(20, 20);
        square(&mut m, 10, 10, 3);
        let l = connected_components(&m);
        assert_eq!(center_of_mass(&l), vec![(1, Pixel::new(11, 11))]);
        assert!(center_of_mass(&LabelMap::zeros(3, 3)).is_empty());
    }
}
