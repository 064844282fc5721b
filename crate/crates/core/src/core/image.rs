use crate::error::{Error, Result};

/// A 2D grid of attenuation coefficients stored row-major.
///
/// Pixel `(x, y)` lives at `data[y * width + x]`; `y` grows downwards.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            data: vec![value; width * height],
        })
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::config(format!(
                "image data has {} values, expected {}x{} = {}",
                data.len(),
                width,
                height,
                width * height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        check_dims(width, height)?;
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn ensure_same_shape(&self, other: &Image, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::config(format!(
                "{what}: shape {}x{} does not match {}x{}",
                other.width, other.height, self.width, self.height
            )))
        }
    }

    pub fn dot(&self, other: &Image) -> f64 {
        dot(&self.data, &other.data)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.len() as f64
    }

    /// Returns `a * self + b * other`.
    pub fn lincomb(&self, a: f64, other: &Image, b: f64) -> Image {
        debug_assert!(self.same_shape(other));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(u, v)| a * u + b * v)
            .collect();
        Image {
            width: self.width,
            height: self.height,
            data,
        }
    }

    pub fn sub(&self, other: &Image) -> Image {
        self.lincomb(1.0, other, -1.0)
    }

    pub fn add(&self, other: &Image) -> Image {
        self.lincomb(1.0, other, 1.0)
    }

    pub fn scaled(&self, s: f64) -> Image {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &Image) {
        debug_assert!(self.same_shape(other));
        for (u, v) in self.data.iter_mut().zip(&other.data) {
            *u += s * v;
        }
    }

    /// Copy of the rectangle covered by `roi`.
    pub fn roi_extract(&self, roi: &RoI) -> Result<Image> {
        roi.check_within(self.width, self.height)?;
        let w = roi.width();
        let h = roi.height();
        let mut data = Vec::with_capacity(w * h);
        for y in roi.y0..=roi.y1 {
            let row = y * self.width;
            data.extend_from_slice(&self.data[row + roi.x0..=row + roi.x1]);
        }
        Ok(Image {
            width: w,
            height: h,
            data,
        })
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::config(format!(
            "image dimensions must be positive, got {width}x{height}"
        )));
    }
    Ok(())
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// Rectangular region of interest with inclusive pixel bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoI {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl RoI {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Result<Self> {
        if x0 > x1 || y0 > y1 {
            return Err(Error::Bounds(format!(
                "roi ({x0},{y0})-({x1},{y1}) has inverted bounds"
            )));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            x0: 0,
            y0: 0,
            x1: width - 1,
            y1: height - 1,
        }
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0 + 1
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..=self.x1).contains(&x) && (self.y0..=self.y1).contains(&y)
    }

    pub fn check_within(&self, width: usize, height: usize) -> Result<()> {
        if self.x0 > self.x1 || self.y0 > self.y1 || self.x1 >= width || self.y1 >= height {
            return Err(Error::Bounds(format!(
                "roi ({},{})-({},{}) outside {}x{} image",
                self.x0, self.y0, self.x1, self.y1, width, height
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y| (y * w + x) as f64).unwrap()
    }

    #[test]
    fn rejects_bad_dims() {
        assert!(Image::zeros(0, 3).is_err());
        assert!(Image::from_vec(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn full_roi_is_identity() {
        let img = ramp(5, 4);
        assert_eq!(img.roi_extract(&RoI::full(5, 4)).unwrap(), img);
    }

    #[test]
    fn single_pixel_roi() {
        let img = ramp(5, 4).map(|v| v + 0.5);
        let sub = img.roi_extract(&RoI::new(0, 0, 0, 0).unwrap()).unwrap();
        assert_eq!((sub.width(), sub.height()), (1, 1));
        assert_eq!(sub.data(), &[img.get(0, 0)]);
    }

    #[test]
    fn interior_block_matches_indexing() {
        let img = ramp(6, 6);
        let sub = img.roi_extract(&RoI::new(2, 2, 4, 4).unwrap()).unwrap();
        assert_eq!((sub.width(), sub.height()), (3, 3));
        for y in 0..3 {
            for x in 0..3 {
                assert_eq!(sub.get(x, y), ((y + 2) * 6 + (x + 2)) as f64);
            }
        }
    }

    #[test]
    fn out_of_bounds_roi() {
        let img = ramp(6, 6);
        let err = img.roi_extract(&RoI::new(2, 2, 6, 4).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Bounds(_)));
        assert!(RoI::new(3, 0, 2, 1).is_err());
    }
}
