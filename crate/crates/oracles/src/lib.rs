//! Slow, obviously-correct reference implementations used by the test suites,
//! and generators of planted prediction maps with known answers.

pub mod geometry;
pub mod groundtruth;
pub mod imgproc;
pub mod losses;
pub mod matching;
pub mod planted;

pub(crate) const N8: [(isize, isize); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];
pub(crate) const N4: [(isize, isize); 4] = [(0, -1), (-1, 0), (1, 0), (0, 1)];

pub(crate) fn step(x: usize, y: usize, d: (isize, isize), w: usize, h: usize) -> Option<(usize, usize)> {
    let nx = x as isize + d.0;
    let ny = y as isize + d.1;
    (nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h).then_some((nx as usize, ny as usize))
}
