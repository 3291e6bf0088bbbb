//! Dense 2-D containers shared by every stage of the pipeline.
//!
//! All containers are row-major. Multi-channel rasters are stored planar:
//! channel `c`, row `y`, column `x` lives at `c * h * w + y * w + x`.

use crate::error::{Error, Result};

/// Multi-channel floating point image, probability map or feature stack.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
    /// Microns per pixel, when known.
    pub mpp: Option<f64>,
}

impl Raster {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        assert!(
            height >= 1 && width >= 1 && channels >= 1,
            "raster dimensions must be positive"
        );
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
            mpp: None,
        }
    }

    /// Builds a raster from planar data, validating its length and finiteness.
    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Shape(format!(
                "raster dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "expected {} values for {height}x{width}x{channels}, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("raster values must be finite".into()));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
            mpp: None,
        })
    }

    /// Builds a single-channel raster by evaluating `f(x, y)`.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut r = Self::zeros(height, width, 1);
        for y in 0..height {
            for x in 0..width {
                r.data[y * width + x] = f(x, y);
            }
        }
        r
    }

    /// Stacks single- or multi-channel rasters of equal size along the channel axis.
    pub fn stack(parts: &[&Raster]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Parameter("cannot stack zero rasters".into()))?;
        let (h, w) = first.dims();
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.data.len()).sum());
        for p in parts {
            if p.dims() != (h, w) {
                return Err(Error::Shape(format!(
                    "cannot stack {}x{} with {}x{}",
                    p.height, p.width, h, w
                )));
            }
            data.extend_from_slice(&p.data);
        }
        let channels = data.len() / (h * w);
        let mut out = Self::from_vec(h, w, channels, data)?;
        out.mpp = first.mpp;
        Ok(out)
    }

    pub fn with_mpp(mut self, mpp: f64) -> Self {
        self.mpp = Some(mpp);
        self
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(height, width)`
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn same_shape(&self, other: &Raster) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Copies channel `c` into a single-channel raster.
    pub fn channel(&self, c: usize) -> Raster {
        let mut out = Raster::from_vec(self.height, self.width, 1, self.plane(c).to_vec())
            .expect("plane of a valid raster");
        out.mpp = self.mpp;
        out
    }

    /// Copies the channel range `[start, end)`.
    pub fn channel_range(&self, start: usize, end: usize) -> Raster {
        assert!(start < end && end <= self.channels, "invalid channel range");
        let n = self.plane_len();
        let mut out = Raster::from_vec(
            self.height,
            self.width,
            end - start,
            self.data[start * n..end * n].to_vec(),
        )
        .expect("channel range of a valid raster");
        out.mpp = self.mpp;
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Raster {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v = f(*v));
        out
    }

    /// Elementwise `a * self + b * other`.
    pub fn axpby(&self, a: f64, other: &Raster, b: f64) -> Result<Raster> {
        if !self.same_shape(other) {
            return Err(Error::Shape("axpby operands differ in shape".into()));
        }
        let mut out = self.clone();
        for (o, v) in out.data.iter_mut().zip(&other.data) {
            *o = a * *o + b * v;
        }
        Ok(out)
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn max_abs_diff(&self, other: &Raster) -> f64 {
        assert!(self.same_shape(other), "max_abs_diff on different shapes");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Instance or segment labels; 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    labels: Vec<u32>,
}

impl LabelMap {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            labels: vec![0; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::Shape(format!(
                "expected {} labels for {height}x{width}, got {}",
                height * width,
                labels.len()
            )));
        }
        Ok(Self {
            height,
            width,
            labels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, label: u32) {
        self.labels[y * self.width + x] = label;
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [u32] {
        &mut self.labels
    }

    /// Sorted distinct positive labels.
    pub fn ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.labels.iter().copied().filter(|&l| l > 0).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn max_label(&self) -> u32 {
        self.labels.iter().copied().max().unwrap_or(0)
    }
}

/// Two-valued mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::Shape(format!(
                "expected {} bits for {height}x{width}, got {}",
                height * width,
                bits.len()
            )));
        }
        Ok(Self {
            height,
            width,
            bits,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::new(height, width);
        for y in 0..height {
            for x in 0..width {
                m.bits[y * width + x] = f(x, y);
            }
        }
        m
    }

    /// Pixels of channel 0 at or above `threshold`.
    pub fn threshold(r: &Raster, threshold: f64) -> Self {
        let (h, w) = r.dims();
        Self {
            height: h,
            width: w,
            bits: r.plane(0).iter().map(|&v| v >= threshold).collect(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planar_layout() {
        let r = Raster::from_vec(2, 3, 2, (0..12).map(f64::from).collect()).unwrap();
        assert_eq!(r.get(0, 1, 2), 5.0);
        assert_eq!(r.get(1, 0, 0), 6.0);
        assert_eq!(r.channel(1).plane(0), &[6.0, 7.0, 8.0, 9.0, 10.0, 11.0]);
    }

    #[test]
    fn rejects_bad_buffers() {
        assert!(Raster::from_vec(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(Raster::from_vec(1, 1, 1, vec![f64::NAN]).is_err());
        assert!(Raster::from_vec(0, 1, 1, vec![]).is_err());
        assert!(LabelMap::from_vec(2, 2, vec![0; 5]).is_err());
    }

    #[test]
    fn stack_concatenates_channels() {
        let a = Raster::filled(2, 2, 1, 1.0);
        let b = Raster::filled(2, 2, 2, 2.0);
        let s = Raster::stack(&[&a, &b]).unwrap();
        assert_eq!(s.channels(), 3);
        assert_eq!(s.get(2, 1, 1), 2.0);
        assert!(Raster::stack(&[&a, &Raster::zeros(3, 2, 1)]).is_err());
    }
}
