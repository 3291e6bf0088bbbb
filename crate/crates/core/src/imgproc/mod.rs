//! Deterministic raster primitives used by ground-truth synthesis and
//! postprocessing.

mod distance;
mod filter;
mod morphology;
mod peaks;
mod threshold;
mod watershed;

pub use distance::euclidean_distance_transform;
pub use filter::{crop, gaussian_blur, gaussian_half_kernel, resize, ResizeMode};
pub use morphology::{center_of_mass, connected_components, remove_small_objects_and_fill_holes};
pub use peaks::peak_local_max;
pub use threshold::otsu_threshold;
pub use watershed::watershed;

/// Offsets of the 8-neighbourhood.
pub(crate) const NEIGHBORS_8: [(isize, isize); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

#[inline]
pub(crate) fn offset(x: usize, y: usize, dx: isize, dy: isize, w: usize, h: usize) -> Option<(usize, usize)> {
    let nx = x.checked_add_signed(dx)?;
    let ny = y.checked_add_signed(dy)?;
    (nx < w && ny < h).then_some((nx, ny))
}
