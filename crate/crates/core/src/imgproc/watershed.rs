use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::morphology::neighbors8;
use crate::error::{Error, Result};
use crate::raster::{BinaryMask, LabelMap, Raster};

#[derive(Debug, Clone, Copy)]
struct Entry {
    elevation: f64,
    age: u64,
    index: usize,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // Reversed so that the max-heap pops the lowest elevation, then the oldest entry.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .elevation
            .total_cmp(&self.elevation)
            .then_with(|| other.age.cmp(&self.age))
    }
}

/// Marker-controlled watershed by priority flooding.
///
/// Markers seed the queue in raster order. Pixels are popped by ascending
/// elevation (first-in first-out among equal elevations) and hand their label
/// to every unlabelled 8-neighbour inside `mask`. Pixels outside the mask, or
/// not reachable from any marker, stay 0.
pub fn watershed(elevation: &Raster, markers: &LabelMap, mask: &BinaryMask) -> Result<LabelMap> {
    let (h, w) = elevation.dims();
    if markers.dims() != (h, w) || mask.dims() != (h, w) {
        return Err(Error::Shape(format!(
            "watershed inputs disagree: elevation {h}x{w}, markers {}x{}, mask {}x{}",
            markers.height(),
            markers.width(),
            mask.height(),
            mask.width()
        )));
    }
    let elev = elevation.plane(0);
    let mut out = LabelMap::zeros(h, w);
    let mut heap = BinaryHeap::new();
    let mut age = 0u64;
    for (i, &l) in markers.labels().iter().enumerate() {
        if l == 0 {
            continue;
        }
        if !mask.bits()[i] {
            return Err(Error::Parameter(format!(
                "marker {l} at ({}, {}) lies outside the mask",
                i % w,
                i / w
            )));
        }
        out.labels_mut()[i] = l;
        heap.push(Entry {
            elevation: elev[i],
            age,
            index: i,
        });
        age += 1;
    }
    while let Some(Entry { index, .. }) = heap.pop() {
        let label = out.labels()[index];
        for (nx, ny) in neighbors8(index % w, index / w, w, h) {
            let j = ny * w + nx;
            if mask.bits()[j] && out.labels()[j] == 0 {
                out.labels_mut()[j] = label;
                heap.push(Entry {
                    elevation: elev[j],
                    age,
                    index: j,
                });
                age += 1;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_marker_floods_mask() {
        let mask = BinaryMask::from_fn(6, 6, |x, y| x > 0 && y < 5);
        let mut markers = LabelMap::zeros(6, 6);
        markers.set(2, 3, 7);
        let out = watershed(&Raster::zeros(6, 6, 1), &markers, &mask).unwrap();
        for y in 0..6 {
            for x in 0..6 {
                assert_eq!(out.get(y, x), if mask.get(y, x) { 7 } else { 0 });
            }
        }
    }

    #[test]
    fn disconnected_components_keep_their_marker() {
        let mask = BinaryMask::from_fn(5, 9, |x, _| x < 3 || x > 5);
        let mut markers = LabelMap::zeros(5, 9);
        markers.set(0, 0, 1);
        markers.set(4, 8, 2);
        let elev = Raster::from_fn(5, 9, |x, y| ((x * 3 + y) % 4) as f64);
        let out = watershed(&elev, &markers, &mask).unwrap();
        for y in 0..5 {
            for x in 0..9 {
                let expected = if x < 3 { 1 } else if x > 5 { 2 } else { 0 };
                assert_eq!(out.get(y, x), expected);
            }
        }
    }

    #[test]
    fn no_markers_gives_zero_map() {
        let mask = BinaryMask::from_fn(4, 4, |_, _| true);
        let out = watershed(&Raster::zeros(4, 4, 1), &LabelMap::zeros(4, 4), &mask).unwrap();
        assert!(out.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn marker_outside_mask_rejected() {
        let mask = BinaryMask::new(3, 3);
        let mut markers = LabelMap::zeros(3, 3);
        markers.set(1, 1, 1);
        assert!(watershed(&Raster::zeros(3, 3, 1), &markers, &mask).is_err());
        assert!(watershed(&Raster::zeros(3, 4, 1), &markers, &mask).is_err());
    }
}
