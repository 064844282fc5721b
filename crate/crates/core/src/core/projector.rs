//! Strip-integral parallel-beam projector and its exact adjoint.
//!
//! Each detector bin integrates the image over a strip of width
//! `bin_spacing` perpendicular to the projection axis; the weight of pixel
//! `j` in ray `i` is `area(pixel_j ∩ strip_i) / bin_spacing`, i.e. the mean
//! line integral across the strip. Pixels are unit squares, so the weights
//! of one pixel summed over the bins of a view times `bin_spacing` equal 1
//! whenever its footprint lies on the detector.
//!
//! Forward projection and backprojection evaluate the same closed-form
//! weights, so `back` is the exact transpose of `forward`.

use std::sync::Arc;

use rayon::prelude::*;

use super::geometry::{Geometry, Sinogram};
use super::image::Image;
use crate::error::{Error, Result};

/// A real linear map between flat vectors, with its adjoint.
pub trait LinearOperator: Sync {
    fn domain_len(&self) -> usize;
    fn range_len(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    fn adjoint(&self, y: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy)]
struct ViewTrig {
    cos: f64,
    sin: f64,
    /// larger of |cos|, |sin|
    major: f64,
    /// smaller of |cos|, |sin|
    minor: f64,
}

impl ViewTrig {
    fn new(angle: f64) -> Self {
        let (sin, cos) = angle.sin_cos();
        let (a, b) = (cos.abs(), sin.abs());
        let (major, minor) = if a >= b { (a, b) } else { (b, a) };
        Self {
            cos,
            sin,
            major,
            minor,
        }
    }

    #[inline]
    fn half_support(&self) -> f64 {
        0.5 * (self.major + self.minor)
    }

    /// Fraction of a unit pixel centred at 0 whose projection is `<= u`.
    #[inline]
    fn cdf(&self, u: f64) -> f64 {
        let a = self.major;
        let b = self.minor;
        if b < 1e-12 {
            return ((u + 0.5 * a) / a).clamp(0.0, 1.0);
        }
        let p = 0.5 * (a + b);
        let q = 0.5 * (a - b);
        if u <= -p {
            0.0
        } else if u <= -q {
            let t = u + p;
            t * t / (2.0 * a * b)
        } else if u <= q {
            b / (2.0 * a) + (u + q) / a
        } else if u < p {
            let t = p - u;
            1.0 - t * t / (2.0 * a * b)
        } else {
            1.0
        }
    }
}

/// Largest weight table kept in memory, in entries.
const TABLE_LIMIT: usize = 1 << 24;

/// Precomputed weights, `stride` slots per (view, pixel) starting at `start`.
#[derive(Debug)]
struct WeightTable {
    stride: usize,
    start: Vec<u32>,
    weights: Vec<f64>,
}

/// Projection operator bound to an image size and a geometry.
#[derive(Debug, Clone)]
pub struct Projector {
    width: usize,
    height: usize,
    geometry: Geometry,
    trig: Vec<ViewTrig>,
    table: Option<Arc<WeightTable>>,
}

impl Projector {
    pub fn new(width: usize, height: usize, geometry: &Geometry) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::config("projector needs a non-empty image grid"));
        }
        geometry.check_coverage(width, height)?;
        let mut p = Self {
            width,
            height,
            geometry: geometry.clone(),
            trig: geometry.angles().iter().map(|&a| ViewTrig::new(a)).collect(),
            table: None,
        };
        p.table = p.build_table().map(Arc::new);
        Ok(p)
    }

    fn build_table(&self) -> Option<WeightTable> {
        let ds = self.geometry.bin_spacing();
        let widest = self
            .trig
            .iter()
            .map(|t| 2.0 * t.half_support())
            .fold(0.0, f64::max);
        let stride = (widest / ds).ceil() as usize + 1;
        let npix = self.num_pixels();
        let cells = self.geometry.num_views() * npix;
        if cells.checked_mul(stride)? > TABLE_LIMIT || self.geometry.num_bins() >= u32::MAX as usize {
            return None;
        }
        let mut start = vec![u32::MAX; cells];
        let mut weights = vec![0.0; cells * stride];
        start
            .par_chunks_mut(npix)
            .zip(weights.par_chunks_mut(npix * stride))
            .enumerate()
            .for_each(|(view, (st, wt))| {
                for y in 0..self.height {
                    for x in 0..self.width {
                        let p = y * self.width + x;
                        self.compute_weights(view, x, y, |b, w| {
                            if st[p] == u32::MAX {
                                st[p] = b as u32;
                            }
                            wt[p * stride + b - st[p] as usize] = w;
                        });
                    }
                }
            });
        Some(WeightTable {
            stride,
            start,
            weights,
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
    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    #[inline]
    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    /// Calls `f(bin, weight)` for every bin hit by pixel `(x, y)` in `view`.
    #[inline]
    fn for_each_weight(&self, view: usize, x: usize, y: usize, mut f: impl FnMut(usize, f64)) {
        let Some(t) = &self.table else {
            return self.compute_weights(view, x, y, f);
        };
        let idx = view * self.num_pixels() + y * self.width + x;
        let b0 = t.start[idx];
        if b0 == u32::MAX {
            return;
        }
        let ws = &t.weights[idx * t.stride..(idx + 1) * t.stride];
        for (j, &w) in ws.iter().enumerate() {
            if w > 0.0 {
                f(b0 as usize + j, w);
            }
        }
    }

    #[inline]
    fn compute_weights(&self, view: usize, x: usize, y: usize, mut f: impl FnMut(usize, f64)) {
        let tr = &self.trig[view];
        let nb = self.geometry.num_bins();
        let ds = self.geometry.bin_spacing();
        let cx = x as f64 - 0.5 * (self.width as f64 - 1.0);
        let cy = 0.5 * (self.height as f64 - 1.0) - y as f64;
        let t = cx * tr.cos + cy * tr.sin;
        let half = tr.half_support();
        let offset = 0.5 * nb as f64;
        let lo = ((t - half) / ds + offset).floor().max(0.0) as usize;
        let hi = (((t + half) / ds + offset).floor() as isize).min(nb as isize - 1);
        if hi < lo as isize {
            return;
        }
        let inv = 1.0 / ds;
        let edge = |b: usize| (b as f64 - offset) * ds - t;
        let mut below = tr.cdf(edge(lo));
        for b in lo..=hi as usize {
            let above = tr.cdf(edge(b + 1));
            let w = (above - below) * inv;
            if w > 0.0 {
                f(b, w);
            }
            below = above;
        }
    }

    /// Single-view forward projection into `out` (length `num_bins`).
    pub fn forward_view(&self, img: &[f64], view: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for y in 0..self.height {
            let row = &img[y * self.width..(y + 1) * self.width];
            for (x, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    self.for_each_weight(view, x, y, |b, w| out[b] += w * v);
                }
            }
        }
    }

    /// Adds the single-view backprojection of `profile` into `img`.
    pub fn back_view_add(&self, profile: &[f64], view: usize, img: &mut [f64]) {
        for y in 0..self.height {
            for x in 0..self.width {
                let mut acc = 0.0;
                self.for_each_weight(view, x, y, |b, w| acc += w * profile[b]);
                img[y * self.width + x] += acc;
            }
        }
    }

    pub fn forward_raw(&self, img: &[f64]) -> Vec<f64> {
        let nb = self.geometry.num_bins();
        let mut out = vec![0.0; self.geometry.len()];
        out.par_chunks_mut(nb)
            .enumerate()
            .for_each(|(view, chunk)| self.forward_view(img, view, chunk));
        out
    }

    pub fn back_raw(&self, sino: &[f64]) -> Vec<f64> {
        let nb = self.geometry.num_bins();
        let nv = self.geometry.num_views();
        let mut out = vec![0.0; self.num_pixels()];
        if let Some(t) = &self.table {
            // same per-pixel summation order as below, but table-contiguous
            let npix = self.num_pixels();
            out.par_chunks_mut(self.width)
                .enumerate()
                .for_each(|(y, row)| {
                    for view in 0..nv {
                        let prof = &sino[view * nb..(view + 1) * nb];
                        let base = view * npix + y * self.width;
                        for (x, px) in row.iter_mut().enumerate() {
                            let b0 = t.start[base + x];
                            if b0 == u32::MAX {
                                continue;
                            }
                            let ws = &t.weights[(base + x) * t.stride..(base + x + 1) * t.stride];
                            let pr = &prof[b0 as usize..];
                            for (j, &w) in ws.iter().enumerate() {
                                if w > 0.0 {
                                    *px += w * pr[j];
                                }
                            }
                        }
                    }
                });
            return out;
        }
        out.par_chunks_mut(self.width)
            .enumerate()
            .for_each(|(y, row)| {
                for (x, px) in row.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for view in 0..nv {
                        let prof = &sino[view * nb..(view + 1) * nb];
                        self.for_each_weight(view, x, y, |b, w| acc += w * prof[b]);
                    }
                    *px = acc;
                }
            });
        out
    }

    pub fn forward(&self, img: &Image) -> Result<Sinogram> {
        if img.width() != self.width || img.height() != self.height {
            return Err(Error::config(format!(
                "image {}x{} does not match projector grid {}x{}",
                img.width(),
                img.height(),
                self.width,
                self.height
            )));
        }
        Sinogram::from_vec(self.geometry.clone(), self.forward_raw(img.data()))
    }

    pub fn back(&self, sino: &Sinogram) -> Result<Image> {
        if sino.geometry() != &self.geometry {
            return Err(Error::config("sinogram geometry does not match projector"));
        }
        Image::from_vec(self.width, self.height, self.back_raw(sino.data()))
    }

    /// Explicit sparse system matrix, one row per `(view, bin)` ray.
    pub fn system_matrix(&self) -> SystemMatrix {
        let nb = self.geometry.num_bins();
        let nv = self.geometry.num_views();
        let per_view: Vec<Vec<Vec<(u32, f64)>>> = (0..nv)
            .into_par_iter()
            .map(|view| {
                let mut rows = vec![Vec::new(); nb];
                for y in 0..self.height {
                    for x in 0..self.width {
                        let j = (y * self.width + x) as u32;
                        self.for_each_weight(view, x, y, |b, w| rows[b].push((j, w)));
                    }
                }
                rows
            })
            .collect();
        let mut row_ptr = Vec::with_capacity(nv * nb + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for rows in per_view {
            for row in rows {
                for (j, w) in row {
                    cols.push(j);
                    vals.push(w);
                }
                row_ptr.push(cols.len());
            }
        }
        SystemMatrix {
            num_rows: nv * nb,
            num_cols: self.num_pixels(),
            row_ptr,
            cols,
            vals,
        }
    }
}

impl LinearOperator for Projector {
    fn domain_len(&self) -> usize {
        self.num_pixels()
    }

    fn range_len(&self) -> usize {
        self.geometry.len()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.forward_raw(x)
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        self.back_raw(y)
    }
}

/// Compressed sparse row form of the projector.
#[derive(Debug, Clone)]
pub struct SystemMatrix {
    num_rows: usize,
    num_cols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl SystemMatrix {
    pub fn num_rows(&self) -> usize {
        self.num_rows
    }

    pub fn num_cols(&self) -> usize {
        self.num_cols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `(column indices, values)` of row `i`.
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }
}

/// `Φ x` for the image size of `img`.
pub fn forward_project(img: &Image, geom: &Geometry) -> Result<Sinogram> {
    Projector::new(img.width(), img.height(), geom)?.forward(img)
}

/// `Φᵀ y` onto a `width x height` grid.
pub fn back_project(sino: &Sinogram, width: usize, height: usize) -> Result<Image> {
    Projector::new(width, height, sino.geometry())?.back(sino)
}
