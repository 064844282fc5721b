use std::f64::consts::PI;

use crate::error::{Error, Result};

/// 2D parallel-beam acquisition geometry.
///
/// Detector bin `b` is centred at offset
/// `(b - (num_bins - 1) / 2) * bin_spacing` from the rotation axis, in pixel
/// units. The projection axis for angle `t` is `(cos t, sin t)` in a frame
/// whose origin is the image centre with `y` pointing up.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    angles: Vec<f64>,
    num_bins: usize,
    bin_spacing: f64,
}

impl Geometry {
    pub fn new(angles: Vec<f64>, num_bins: usize, bin_spacing: f64) -> Result<Self> {
        if angles.is_empty() {
            return Err(Error::config("geometry needs at least one view"));
        }
        if num_bins == 0 {
            return Err(Error::config("geometry needs at least one detector bin"));
        }
        if !(bin_spacing.is_finite() && bin_spacing > 0.0) {
            return Err(Error::config(format!(
                "bin spacing must be positive, got {bin_spacing}"
            )));
        }
        for (i, &a) in angles.iter().enumerate() {
            if !(a.is_finite() && (0.0..PI).contains(&a)) {
                return Err(Error::config(format!("angle {i} = {a} outside [0, pi)")));
            }
            if i > 0 && a <= angles[i - 1] {
                return Err(Error::config(format!(
                    "angles must be strictly increasing (angle {i} = {a})"
                )));
            }
        }
        Ok(Self {
            angles,
            num_bins,
            bin_spacing,
        })
    }

    /// `num_views` angles equispaced over `[0, pi)`.
    pub fn equispaced(num_views: usize, num_bins: usize, bin_spacing: f64) -> Result<Self> {
        let angles = (0..num_views)
            .map(|i| PI * i as f64 / num_views as f64)
            .collect();
        Self::new(angles, num_bins, bin_spacing)
    }

    /// Equispaced views with unit bins just wide enough to cover a
    /// `width x height` grid.
    pub fn for_image(width: usize, height: usize, num_views: usize) -> Result<Self> {
        Self::equispaced(num_views, min_bins(width, height, 1.0) + 2, 1.0)
    }

    #[inline]
    pub fn num_views(&self) -> usize {
        self.angles.len()
    }

    #[inline]
    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    #[inline]
    pub fn bin_spacing(&self) -> f64 {
        self.bin_spacing
    }

    #[inline]
    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    /// Offset of the centre of bin `b` from the rotation axis.
    #[inline]
    pub fn bin_center(&self, b: usize) -> f64 {
        (b as f64 - (self.num_bins as f64 - 1.0) * 0.5) * self.bin_spacing
    }

    /// Checks that every pixel footprint of a `width x height` grid falls on
    /// the detector at every angle.
    pub fn check_coverage(&self, width: usize, height: usize) -> Result<()> {
        let needed = min_bins(width, height, self.bin_spacing);
        if self.num_bins < needed {
            return Err(Error::config(format!(
                "{} bins of spacing {} do not cover a {}x{} image (need at least {})",
                self.num_bins, self.bin_spacing, width, height, needed
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.angles.len() * self.num_bins
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Smallest bin count whose detector spans the image diagonal.
pub fn min_bins(width: usize, height: usize, bin_spacing: f64) -> usize {
    let diag = ((width * width + height * height) as f64).sqrt();
    // tolerate round-off so that e.g. diag = 3.0000000000000004 still needs 3
    (diag / bin_spacing - 1e-9).ceil().max(1.0) as usize
}

/// Projection measurements indexed `(view, bin)`, row-major by view.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    geometry: Geometry,
    data: Vec<f64>,
}

impl Sinogram {
    pub fn zeros(geometry: Geometry) -> Self {
        let n = geometry.len();
        Self {
            geometry,
            data: vec![0.0; n],
        }
    }

    pub fn from_vec(geometry: Geometry, data: Vec<f64>) -> Result<Self> {
        if data.len() != geometry.len() {
            return Err(Error::config(format!(
                "sinogram data has {} values, expected {} views x {} bins",
                data.len(),
                geometry.num_views(),
                geometry.num_bins()
            )));
        }
        Ok(Self { geometry, data })
    }

    #[inline]
    pub fn geometry(&self) -> &Geometry {
        &self.geometry
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
    pub fn get(&self, view: usize, bin: usize) -> f64 {
        self.data[view * self.geometry.num_bins + bin]
    }

    pub fn view(&self, view: usize) -> &[f64] {
        let nb = self.geometry.num_bins;
        &self.data[view * nb..(view + 1) * nb]
    }

    pub fn dot(&self, other: &Sinogram) -> f64 {
        crate::core::image::dot(&self.data, &other.data)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}
