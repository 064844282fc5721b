//! Image-quality metrics and synthetic longitudinal phantoms.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::core::{Image, RoI};
use crate::error::{Error, Result};

pub const DEFAULT_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

/// Upper clamp for phantom intensities; needles may exceed tissue values.
pub const MAX_INTENSITY: f64 = 1.2;
pub const NEEDLE_VALUE: f64 = 1.2;
pub const NEEDLE_WIDTH: f64 = 2.0;

fn gaussian_window(size: usize) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let g: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Mean SSIM over all fully contained Gaussian windows.
pub fn ssim(a: &Image, b: &Image, window: usize, dynamic_range: f64) -> Result<f64> {
    a.ensure_same_shape(b, "ssim operands")?;
    if window % 2 == 0 || window == 0 {
        return Err(Error::config(format!("ssim window must be odd, got {window}")));
    }
    if window > a.width().min(a.height()) {
        return Err(Error::config(format!(
            "ssim window {window} larger than {}x{} image",
            a.width(),
            a.height()
        )));
    }
    if !(dynamic_range > 0.0 && dynamic_range.is_finite()) {
        return Err(Error::config(format!(
            "ssim dynamic range must be positive, got {dynamic_range}"
        )));
    }
    let c1 = (0.01 * dynamic_range).powi(2);
    let c2 = (0.03 * dynamic_range).powi(2);
    let g = gaussian_window(window);
    let (nx, ny) = (a.width() - window + 1, a.height() - window + 1);
    let mut total = 0.0;
    for oy in 0..ny {
        for ox in 0..nx {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (j, gy) in g.iter().enumerate() {
                for (i, gx) in g.iter().enumerate() {
                    let wt = gy * gx;
                    let va = a.get(ox + i, oy + j);
                    let vb = b.get(ox + i, oy + j);
                    ma += wt * va;
                    mb += wt * vb;
                    saa += wt * va * va;
                    sbb += wt * vb * vb;
                    sab += wt * va * vb;
                }
            }
            let va = saa - ma * ma;
            let vb = sbb - mb * mb;
            let cov = sab - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
    }
    Ok(total / (nx * ny) as f64)
}

pub fn ssim_roi(a: &Image, b: &Image, roi: &RoI, window: usize, dynamic_range: f64) -> Result<f64> {
    if roi.width() < window || roi.height() < window {
        return Err(Error::config(format!(
            "roi {}x{} smaller than ssim window {window}",
            roi.width(),
            roi.height()
        )));
    }
    ssim(&a.roi_extract(roi)?, &b.roi_extract(roi)?, window, dynamic_range)
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_shape(b, "mse operands")?;
    let s: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(s / a.len() as f64)
}

pub fn rmse(a: &Image, b: &Image) -> Result<f64> {
    Ok(mse(a, b)?.sqrt())
}

/// `10 log10(peak² / mse)`; `+∞` for identical images.
pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / m).log10())
}

/// Dynamic range taken from the reference image.
pub fn dynamic_range(truth: &Image) -> f64 {
    let r = truth.max() - truth.min();
    if r > 0.0 {
        r
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub ssim_global: f64,
    /// `None` when no region of interest was given
    pub ssim_roi: Option<f64>,
    pub rmse: f64,
    pub psnr: f64,
}

impl Metrics {
    /// Scores `recon` against `truth` with the default window and the truth's
    /// dynamic range.
    pub fn compute(truth: &Image, recon: &Image, roi: Option<&RoI>) -> Result<Self> {
        let r = dynamic_range(truth);
        Ok(Self {
            ssim_global: ssim(truth, recon, DEFAULT_WINDOW, r)?,
            ssim_roi: roi
                .map(|roi| ssim_roi(truth, recon, roi, DEFAULT_WINDOW, r))
                .transpose()?,
            rmse: rmse(truth, recon)?,
            psnr: psnr(truth, recon, r)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhantomFamily {
    SheppLogan,
    DiskPack,
}

impl fmt::Display for PhantomFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PhantomFamily::SheppLogan => "shepp-logan",
            PhantomFamily::DiskPack => "disk-pack",
        })
    }
}

impl FromStr for PhantomFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shepp-logan" => Ok(PhantomFamily::SheppLogan),
            "disk-pack" => Ok(PhantomFamily::DiskPack),
            _ => Err(Error::config(format!("unknown phantom family `{s}`"))),
        }
    }
}

/// Region affected by an edit, in pixel coordinates (x right, y down).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Disk { cx: f64, cy: f64, r: f64 },
    /// line segment of the given width
    Segment { x0: f64, y0: f64, x1: f64, y1: f64, width: f64 },
}

impl Shape {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Disk { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) <= r * r,
            Shape::Segment { x0, y0, x1, y1, width } => {
                let (dx, dy) = (x1 - x0, y1 - y0);
                let len2 = dx * dx + dy * dy;
                let t = if len2 > 0.0 {
                    (((x - x0) * dx + (y - y0) * dy) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let (px, py) = (x0 + t * dx - x, y0 + t * dy - y);
                px * px + py * py <= (width / 2.0).powi(2)
            }
        }
    }

    /// Bounding box as `(xmin, ymin, xmax, ymax)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        match *self {
            Shape::Disk { cx, cy, r } => (cx - r, cy - r, cx + r, cy + r),
            Shape::Segment { x0, y0, x1, y1, width } => {
                let h = width / 2.0;
                (x0.min(x1) - h, y0.min(y1) - h, x0.max(x1) + h, y0.max(y1) + h)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    /// set covered pixels to a value
    Paint(f64),
    /// put back the base phantom's values
    Restore,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edit {
    pub shape: Shape,
    pub action: Action,
}

impl Edit {
    pub fn add_disk(cx: f64, cy: f64, r: f64, value: f64) -> Self {
        Self {
            shape: Shape::Disk { cx, cy, r },
            action: Action::Paint(value),
        }
    }

    pub fn remove_disk(cx: f64, cy: f64, r: f64) -> Self {
        Self {
            shape: Shape::Disk { cx, cy, r },
            action: Action::Restore,
        }
    }

    pub fn needle(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            shape: Shape::Segment {
                x0,
                y0,
                x1,
                y1,
                width: NEEDLE_WIDTH,
            },
            action: Action::Paint(NEEDLE_VALUE),
        }
    }

    pub fn cut(x0: f64, y0: f64, x1: f64, y1: f64, width: f64) -> Self {
        Self {
            shape: Shape::Segment { x0, y0, x1, y1, width },
            action: Action::Paint(0.0),
        }
    }

    pub fn restore(shape: Shape) -> Self {
        Self {
            shape,
            action: Action::Restore,
        }
    }

    fn check(&self, size: usize) -> Result<()> {
        let (a, b, c, d) = self.shape.bounds();
        let hi = size as f64 - 0.5;
        let finite = [a, b, c, d].iter().all(|v| v.is_finite());
        let positive = match self.shape {
            Shape::Disk { r, .. } => r > 0.0,
            Shape::Segment { width, .. } => width > 0.0,
        };
        if !finite || !positive || a < -0.5 || b < -0.5 || c > hi || d > hi {
            return Err(Error::Bounds(format!(
                "edit {self:?} does not fit in a {size}x{size} image"
            )));
        }
        if let Action::Paint(v) = self.action {
            if !v.is_finite() {
                return Err(Error::config(format!("edit value {v} is not finite")));
            }
        }
        Ok(())
    }

    fn apply(&self, img: &mut Image, base: &Image) {
        let (a, b, c, d) = self.shape.bounds();
        let n = img.width() as isize;
        let lo = |v: f64| (v.floor() as isize).clamp(0, n - 1) as usize;
        let hi = |v: f64| (v.ceil() as isize).clamp(0, n - 1) as usize;
        for y in lo(b)..=hi(d) {
            for x in lo(a)..=hi(c) {
                if self.shape.contains(x as f64, y as f64) {
                    let v = match self.action {
                        Action::Paint(v) => v,
                        Action::Restore => base.get(x, y),
                    };
                    img.set(x, y, v.clamp(0.0, MAX_INTENSITY));
                }
            }
        }
    }

    /// Pixels the edit touches, padded by `pad` and clipped to the image.
    pub fn roi(&self, size: usize, pad: usize) -> RoI {
        let (a, b, c, d) = self.shape.bounds();
        let clip = |v: f64| v.round().clamp(0.0, size as f64 - 1.0) as usize;
        RoI {
            x0: clip(a).saturating_sub(pad),
            y0: clip(b).saturating_sub(pad),
            x1: (clip(c) + pad).min(size - 1),
            y1: (clip(d) + pad).min(size - 1),
        }
    }
}

/// Base phantom plus one list of edits per subsequent scan.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomScenario {
    pub base: PhantomFamily,
    pub size: usize,
    /// `evolution[t]` turns scan `t` into scan `t + 1`
    pub evolution: Vec<Vec<Edit>>,
    pub seed: u64,
}

impl PhantomScenario {
    pub fn num_scans(&self) -> usize {
        self.evolution.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.size < 2 {
            return Err(Error::config(format!("phantom size {} too small", self.size)));
        }
        self.evolution
            .iter()
            .flatten()
            .try_for_each(|e| e.check(self.size))
    }

    /// Bounding box of everything edited in step `t` (producing scan `t+1`),
    /// grown to at least `min_side` pixels per side.
    pub fn change_roi(&self, t: usize, pad: usize, min_side: usize) -> Result<RoI> {
        let step = self
            .evolution
            .get(t)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::config(format!("scenario has no edits at step {t}")))?;
        let mut roi = step[0].roi(self.size, pad);
        for e in &step[1..] {
            let r = e.roi(self.size, pad);
            roi = RoI {
                x0: roi.x0.min(r.x0),
                y0: roi.y0.min(r.y0),
                x1: roi.x1.max(r.x1),
                y1: roi.y1.max(r.y1),
            };
        }
        Ok(grow_roi(roi, min_side, self.size))
    }

    /// Needle entering from the left edge and advancing toward the centre,
    /// one increment per scan.
    pub fn needle_insertion(base: PhantomFamily, size: usize, scans: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e65_6564_6c65);
        let s = size as f64;
        let y = s * rng.gen_range(0.40..0.60);
        let (x_start, x_end) = (0.04 * s, 0.55 * s);
        let steps = scans.saturating_sub(1).max(1) as f64;
        let evolution = (1..scans)
            .map(|t| {
                let tip = x_start + (x_end - x_start) * t as f64 / steps;
                vec![Edit::needle(x_start, y, tip, y)]
            })
            .collect();
        Self {
            base,
            size,
            evolution,
            seed,
        }
    }

    /// A new empty hole per scan at a random spot inside the object.
    pub fn drilled(base: PhantomFamily, size: usize, scans: usize, radius: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6472_696c_6c);
        let s = size as f64;
        let mut placed: Vec<(f64, f64)> = Vec::new();
        let evolution = (1..scans)
            .map(|_| {
                let mut gap = 2.5 * radius + 2.0;
                let mut tries = 0;
                let (cx, cy) = loop {
                    let ang = rng.gen_range(0.0..2.0 * PI);
                    let rad = s * rng.gen_range(0.05..0.28);
                    let c = (s / 2.0 + rad * ang.cos(), s / 2.0 + rad * ang.sin());
                    if placed.iter().all(|p| (p.0 - c.0).hypot(p.1 - c.1) > gap) {
                        break c;
                    }
                    // small grids cannot keep every hole apart
                    tries += 1;
                    if tries % 200 == 0 {
                        gap *= 0.8;
                    }
                };
                placed.push((cx, cy));
                vec![Edit::add_disk(cx, cy, radius, 0.0)]
            })
            .collect();
        Self {
            base,
            size,
            evolution,
            seed,
        }
    }

    /// A few fixed disks whose intensities are redrawn at every scan. No scan
    /// introduces new structure, so with enough scans each one lies in the
    /// affine span of the others.
    pub fn intensity_drift(base: PhantomFamily, size: usize, scans: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6472_6966_74);
        let s = size as f64;
        let spots = [(0.40, 0.38, 0.07), (0.62, 0.55, 0.05), (0.45, 0.66, 0.06)];
        let evolution = (1..scans)
            .map(|_| {
                spots
                    .iter()
                    .map(|&(x, y, r)| Edit::add_disk(x * s, y * s, r * s, rng.gen_range(0.15..0.6)))
                    .collect()
            })
            .collect();
        Self {
            base,
            size,
            evolution,
            seed,
        }
    }

    /// Scan 0 is the intact base, scans `1..scans-1` each carry exactly one
    /// distinct cut, and the last scan is intact again, so it differs from
    /// every cut scan.
    pub fn distinct_cuts(base: PhantomFamily, size: usize, scans: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6375_7473);
        let s = size as f64;
        let mut cut = || {
            let ang = rng.gen_range(0.0..PI);
            let (cx, cy) = (s * rng.gen_range(0.4..0.6), s * rng.gen_range(0.4..0.6));
            let half = s * 0.12;
            Shape::Segment {
                x0: cx - half * ang.cos(),
                y0: cy - half * ang.sin(),
                x1: cx + half * ang.cos(),
                y1: cy + half * ang.sin(),
                width: 2.0,
            }
        };
        let mut prev: Option<Shape> = None;
        let mut evolution = Vec::new();
        for t in 1..scans {
            let mut step: Vec<Edit> = prev.map(Edit::restore).into_iter().collect();
            prev = None;
            if t + 1 < scans {
                let next = cut();
                step.push(Edit {
                    shape: next,
                    action: Action::Paint(0.0),
                });
                prev = Some(next);
            }
            evolution.push(step);
        }
        Self {
            base,
            size,
            evolution,
            seed,
        }
    }
}

fn grow_roi(roi: RoI, min_side: usize, size: usize) -> RoI {
    let grow = |a: usize, b: usize| -> (usize, usize) {
        let len = b - a + 1;
        if len >= min_side || min_side > size {
            return (a, b);
        }
        let extra = min_side - len;
        let lo = a.saturating_sub(extra / 2 + extra % 2);
        let lo = lo.min(size - min_side);
        (lo, lo + min_side - 1)
    };
    let (x0, x1) = grow(roi.x0, roi.x1);
    let (y0, y1) = grow(roi.y0, roi.y1);
    RoI { x0, y0, x1, y1 }
}

struct Ellipse {
    value: f64,
    a: f64,
    b: f64,
    x0: f64,
    y0: f64,
    phi_deg: f64,
}

const SHEPP_LOGAN: [Ellipse; 10] = [
    Ellipse { value: 1.0, a: 0.69, b: 0.92, x0: 0.0, y0: 0.0, phi_deg: 0.0 },
    Ellipse { value: -0.8, a: 0.6624, b: 0.874, x0: 0.0, y0: -0.0184, phi_deg: 0.0 },
    Ellipse { value: -0.2, a: 0.11, b: 0.31, x0: 0.22, y0: 0.0, phi_deg: -18.0 },
    Ellipse { value: -0.2, a: 0.16, b: 0.41, x0: -0.22, y0: 0.0, phi_deg: 18.0 },
    Ellipse { value: 0.1, a: 0.21, b: 0.25, x0: 0.0, y0: 0.35, phi_deg: 0.0 },
    Ellipse { value: 0.1, a: 0.046, b: 0.046, x0: 0.0, y0: 0.1, phi_deg: 0.0 },
    Ellipse { value: 0.1, a: 0.046, b: 0.046, x0: 0.0, y0: -0.1, phi_deg: 0.0 },
    Ellipse { value: 0.1, a: 0.046, b: 0.023, x0: -0.08, y0: -0.605, phi_deg: 0.0 },
    Ellipse { value: 0.1, a: 0.023, b: 0.023, x0: 0.0, y0: -0.606, phi_deg: 0.0 },
    Ellipse { value: 0.1, a: 0.023, b: 0.046, x0: 0.06, y0: -0.605, phi_deg: 0.0 },
];

fn render_ellipses(size: usize, ellipses: &[Ellipse]) -> Image {
    let half = size as f64 / 2.0;
    let prepared: Vec<(f64, f64, &Ellipse)> = ellipses
        .iter()
        .map(|e| {
            let p = e.phi_deg.to_radians();
            (p.cos(), p.sin(), e)
        })
        .collect();
    Image::from_fn(size, size, |x, y| {
        // normalised coordinates, y up
        let u = (x as f64 + 0.5 - half) / half;
        let v = (half - y as f64 - 0.5) / half;
        let mut val = 0.0;
        for (c, s, e) in &prepared {
            let (du, dv) = (u - e.x0, v - e.y0);
            let xr = du * c + dv * s;
            let yr = -du * s + dv * c;
            if (xr / e.a).powi(2) + (yr / e.b).powi(2) <= 1.0 {
                val += e.value;
            }
        }
        val.clamp(0.0, MAX_INTENSITY)
    })
    .expect("size validated by caller")
}

/// Modified Shepp-Logan head phantom with intensities in `[0, 1]`.
pub fn shepp_logan(size: usize) -> Result<Image> {
    if size == 0 {
        return Err(Error::config("phantom size must be positive"));
    }
    Ok(render_ellipses(size, &SHEPP_LOGAN))
}

/// Elliptical body of value 0.5 holding non-overlapping random disks.
pub fn disk_pack(size: usize, seed: u64) -> Result<Image> {
    if size == 0 {
        return Err(Error::config("phantom size must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ellipses = vec![Ellipse {
        value: 0.5,
        a: 0.85,
        b: 0.75,
        x0: 0.0,
        y0: 0.0,
        phi_deg: 0.0,
    }];
    let mut disks: Vec<(f64, f64, f64)> = Vec::new();
    let mut attempts = 0;
    while disks.len() < 8 && attempts < 10_000 {
        attempts += 1;
        let r: f64 = rng.gen_range(0.06..0.16);
        let (x, y): (f64, f64) = (rng.gen_range(-0.65..0.65), rng.gen_range(-0.55..0.55));
        if (x / (0.85 - r)).powi(2) + (y / (0.75 - r)).powi(2) > 1.0 {
            continue;
        }
        if disks.iter().any(|d| (d.0 - x).hypot(d.1 - y) < d.2 + r + 0.03) {
            continue;
        }
        disks.push((x, y, r));
        ellipses.push(Ellipse {
            value: rng.gen_range(-0.3..0.45),
            a: r,
            b: r,
            x0: x,
            y0: y,
            phi_deg: 0.0,
        });
    }
    Ok(render_ellipses(size, &ellipses))
}

pub fn base_phantom(family: PhantomFamily, size: usize, seed: u64) -> Result<Image> {
    match family {
        PhantomFamily::SheppLogan => shepp_logan(size),
        PhantomFamily::DiskPack => disk_pack(size, seed),
    }
}

/// Scan sequence of a scenario: the base phantom followed by each evolved scan.
pub fn generate_longitudinal(scenario: &PhantomScenario) -> Result<Vec<Image>> {
    scenario.validate()?;
    let base = base_phantom(scenario.base, scenario.size, scenario.seed)?;
    let mut scans = vec![base.clone()];
    let mut cur = base.clone();
    for step in &scenario.evolution {
        for e in step {
            e.apply(&mut cur, &base);
        }
        scans.push(cur.clone());
    }
    Ok(scans)
}
