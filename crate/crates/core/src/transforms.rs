//! Orthonormal sparsifying bases: 2D DCT-II and full-depth 2D Haar.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::core::Image;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisKind {
    Dct2,
    Haar2,
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BasisKind::Dct2 => "dct",
            BasisKind::Haar2 => "haar",
        })
    }
}

impl FromStr for BasisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dct" | "dct2" => Ok(BasisKind::Dct2),
            "haar" | "haar2" => Ok(BasisKind::Haar2),
            other => Err(Error::config(format!("unknown basis '{other}'"))),
        }
    }
}

/// Coefficients θ of an image in a basis.
///
/// For Haar on a non-power-of-two grid the coefficients live on the padded
/// square, so `data.len()` may exceed `width * height`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffVector {
    pub basis: BasisKind,
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

/// A basis bound to an image size.
#[derive(Debug, Clone)]
pub struct Basis {
    kind: BasisKind,
    width: usize,
    height: usize,
    inner: Inner,
}

#[derive(Debug, Clone)]
enum Inner {
    Dct {
        /// row-major `n x n` orthonormal DCT-II matrices
        rows: Vec<f64>,
        cols: Vec<f64>,
    },
    Haar {
        side: usize,
        off_x: usize,
        off_y: usize,
    },
}

fn dct_matrix(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    let nf = n as f64;
    for k in 0..n {
        let s = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        for i in 0..n {
            m[k * n + i] = s * (PI * (i as f64 + 0.5) * k as f64 / nf).cos();
        }
    }
    m
}

impl Basis {
    pub fn new(kind: BasisKind, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::config("basis needs a non-empty grid"));
        }
        let inner = match kind {
            BasisKind::Dct2 => Inner::Dct {
                rows: dct_matrix(width),
                cols: dct_matrix(height),
            },
            BasisKind::Haar2 => {
                let side = width.max(height).next_power_of_two();
                Inner::Haar {
                    side,
                    off_x: (side - width) / 2,
                    off_y: (side - height) / 2,
                }
            }
        };
        Ok(Self {
            kind,
            width,
            height,
            inner,
        })
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn image_len(&self) -> usize {
        self.width * self.height
    }

    pub fn coeff_len(&self) -> usize {
        match self.inner {
            Inner::Dct { .. } => self.width * self.height,
            Inner::Haar { side, .. } => side * side,
        }
    }

    /// θ = Ψᵀ x
    pub fn analyze_raw(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.image_len());
        match &self.inner {
            Inner::Dct { rows, cols } => {
                dct_apply(x, self.width, self.height, rows, cols, false)
            }
            Inner::Haar { side, off_x, off_y } => {
                let n = *side;
                let mut buf = vec![0.0; n * n];
                for y in 0..self.height {
                    let dst = (y + off_y) * n + off_x;
                    buf[dst..dst + self.width]
                        .copy_from_slice(&x[y * self.width..(y + 1) * self.width]);
                }
                haar_forward(&mut buf, n);
                buf
            }
        }
    }

    /// x = Ψ θ
    pub fn synthesize_raw(&self, theta: &[f64]) -> Vec<f64> {
        debug_assert_eq!(theta.len(), self.coeff_len());
        match &self.inner {
            Inner::Dct { rows, cols } => {
                dct_apply(theta, self.width, self.height, rows, cols, true)
            }
            Inner::Haar { side, off_x, off_y } => {
                let n = *side;
                let mut buf = theta.to_vec();
                haar_inverse(&mut buf, n);
                let mut out = Vec::with_capacity(self.image_len());
                for y in 0..self.height {
                    let src = (y + off_y) * n + off_x;
                    out.extend_from_slice(&buf[src..src + self.width]);
                }
                out
            }
        }
    }

    pub fn analyze(&self, img: &Image) -> Result<CoeffVector> {
        if img.width() != self.width || img.height() != self.height {
            return Err(Error::config(format!(
                "image {}x{} does not match basis grid {}x{}",
                img.width(),
                img.height(),
                self.width,
                self.height
            )));
        }
        Ok(CoeffVector {
            basis: self.kind,
            width: self.width,
            height: self.height,
            data: self.analyze_raw(img.data()),
        })
    }

    pub fn synthesize(&self, coeffs: &CoeffVector) -> Result<Image> {
        if coeffs.basis != self.kind
            || coeffs.width != self.width
            || coeffs.height != self.height
            || coeffs.data.len() != self.coeff_len()
        {
            return Err(Error::config(format!(
                "{} coefficients for {}x{} ({} values) do not match {} basis on {}x{}",
                coeffs.basis,
                coeffs.width,
                coeffs.height,
                coeffs.data.len(),
                self.kind,
                self.width,
                self.height
            )));
        }
        Image::from_vec(self.width, self.height, self.synthesize_raw(&coeffs.data))
    }
}

/// Separable 2D DCT: `C_h X C_wᵀ` (or its transpose when `inverse`).
fn dct_apply(x: &[f64], w: usize, h: usize, rows: &[f64], cols: &[f64], inverse: bool) -> Vec<f64> {
    // entry (k, i) of the 1D transform in the requested direction
    let coef = |m: &[f64], n: usize, k: usize, i: usize| {
        if inverse {
            m[i * n + k]
        } else {
            m[k * n + i]
        }
    };
    // along x: tmp[y][k] = Σ_i M(k, i) x[y][i]
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let src = &x[y * w..(y + 1) * w];
        let dst = &mut tmp[y * w..(y + 1) * w];
        if inverse {
            for (i, &v) in src.iter().enumerate() {
                let m = &rows[i * w..(i + 1) * w];
                for (d, c) in dst.iter_mut().zip(m) {
                    *d += v * c;
                }
            }
        } else {
            for (k, d) in dst.iter_mut().enumerate() {
                let m = &rows[k * w..(k + 1) * w];
                *d = m.iter().zip(src).map(|(a, b)| a * b).sum();
            }
        }
    }
    // along y: out[k][·] = Σ_y M(k, y) tmp[y][·]
    let mut out = vec![0.0; w * h];
    for k in 0..h {
        let dst = &mut out[k * w..(k + 1) * w];
        for y in 0..h {
            let c = coef(cols, h, k, y);
            for (d, t) in dst.iter_mut().zip(&tmp[y * w..(y + 1) * w]) {
                *d += c * t;
            }
        }
    }
    out
}

fn haar_step(v: &mut [f64], scratch: &mut [f64]) {
    let half = v.len() / 2;
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..half {
        let a = v[2 * i];
        let b = v[2 * i + 1];
        scratch[i] = (a + b) * r;
        scratch[half + i] = (a - b) * r;
    }
    v.copy_from_slice(&scratch[..v.len()]);
}

fn haar_unstep(v: &mut [f64], scratch: &mut [f64]) {
    let half = v.len() / 2;
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..half {
        let s = v[i];
        let d = v[half + i];
        scratch[2 * i] = (s + d) * r;
        scratch[2 * i + 1] = (s - d) * r;
    }
    v.copy_from_slice(&scratch[..v.len()]);
}

fn haar_forward(buf: &mut [f64], n: usize) {
    let mut scratch = vec![0.0; n];
    let mut col = vec![0.0; n];
    let mut len = n;
    while len >= 2 {
        for y in 0..len {
            haar_step(&mut buf[y * n..y * n + len], &mut scratch);
        }
        for x in 0..len {
            for y in 0..len {
                col[y] = buf[y * n + x];
            }
            haar_step(&mut col[..len], &mut scratch);
            for y in 0..len {
                buf[y * n + x] = col[y];
            }
        }
        len /= 2;
    }
}

fn haar_inverse(buf: &mut [f64], n: usize) {
    let mut scratch = vec![0.0; n];
    let mut col = vec![0.0; n];
    let mut len = 2;
    while len <= n {
        for x in 0..len {
            for y in 0..len {
                col[y] = buf[y * n + x];
            }
            haar_unstep(&mut col[..len], &mut scratch);
            for y in 0..len {
                buf[y * n + x] = col[y];
            }
        }
        for y in 0..len {
            haar_unstep(&mut buf[y * n..y * n + len], &mut scratch);
        }
        len *= 2;
    }
}

/// θ = Ψᵀ x for a one-off call.
pub fn analyze(img: &Image, basis: BasisKind) -> Result<CoeffVector> {
    Basis::new(basis, img.width(), img.height())?.analyze(img)
}

/// x = Ψ θ for a one-off call.
pub fn synthesize(coeffs: &CoeffVector, width: usize, height: usize) -> Result<Image> {
    Basis::new(coeffs.basis, width, height)?.synthesize(coeffs)
}
