//! Point-level data: annotated cell centroids and predicted detections.
//!
//! Coordinates are integer pixels with `x` = column and `y` = row, origin at
//! the top-left corner.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cell classes, numbered as in the annotation files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CellClass {
    BackgroundCell = 1,
    TumorCell = 2,
}

impl CellClass {
    pub const ALL: [CellClass; 2] = [CellClass::BackgroundCell, CellClass::TumorCell];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: i64) -> Result<Self> {
        match id {
            1 => Ok(CellClass::BackgroundCell),
            2 => Ok(CellClass::TumorCell),
            other => Err(Error::Data(format!(
                "class id {other} is not a cell class (expected 1 or 2)"
            ))),
        }
    }

    /// Position in per-class arrays (`0` = background cell, `1` = tumor cell).
    pub fn index(self) -> usize {
        self as usize - 1
    }

    /// Channel holding this class in a `[background, background-cell, tumor-cell]` map.
    pub fn channel(self) -> usize {
        self as usize
    }
}

/// A pixel position without class information.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pixel {
    pub x: usize,
    pub y: usize,
}

impl Pixel {
    pub fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    pub fn dist2(self, other: Pixel) -> u64 {
        let dx = self.x.abs_diff(other.x) as u64;
        let dy = self.y.abs_diff(other.y) as u64;
        dx * dx + dy * dy
    }
}

/// One annotated cell centroid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellPoint {
    pub x: usize,
    pub y: usize,
    pub class: CellClass,
}

impl CellPoint {
    pub fn new(x: usize, y: usize, class: CellClass) -> Self {
        Self { x, y, class }
    }

    pub fn pixel(&self) -> Pixel {
        Pixel::new(self.x, self.y)
    }
}

/// Cell point annotations of one patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointAnnotations {
    pub points: Vec<CellPoint>,
    pub mpp: f64,
}

impl PointAnnotations {
    pub fn new(points: Vec<CellPoint>, mpp: f64) -> Self {
        Self { points, mpp }
    }

    pub fn empty(mpp: f64) -> Self {
        Self::new(Vec::new(), mpp)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks that every point lies inside an `h x w` patch.
    pub fn validate(&self, h: usize, w: usize) -> Result<()> {
        match self.points.iter().position(|p| p.x >= w || p.y >= h) {
            Some(i) => Err(Error::Data(format!(
                "annotation {i} at ({}, {}) lies outside the {w}x{h} patch",
                self.points[i].x, self.points[i].y
            ))),
            None => Ok(()),
        }
    }

    pub fn count(&self, class: CellClass) -> usize {
        self.points.iter().filter(|p| p.class == class).count()
    }
}

/// A predicted cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub x: usize,
    pub y: usize,
    pub class: CellClass,
    pub confidence: f64,
}

impl Detection {
    pub fn pixel(&self) -> Pixel {
        Pixel::new(self.x, self.y)
    }
}
