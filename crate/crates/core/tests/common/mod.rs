#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tomoprior::{Geometry, Image};

pub fn random_image(w: usize, h: usize, seed: u64, lo: f64, hi: f64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::from_fn(w, h, |_, _| rng.gen_range(lo..hi)).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (u, v)| m.max((u - v).abs()))
}

/// Area of the intersection of the axis-aligned square `[x0,x1]x[y0,y1]` with
/// the slab `lo <= x cos t + y sin t <= hi`, by clipping the square polygon
/// against both half-planes and applying the shoelace formula.
pub fn square_slab_area(x0: f64, x1: f64, y0: f64, y1: f64, angle: f64, lo: f64, hi: f64) -> f64 {
    let (s, c) = angle.sin_cos();
    let poly = vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1)];
    let poly = clip(&poly, |p| p.0 * c + p.1 * s - lo);
    let poly = clip(&poly, |p| hi - (p.0 * c + p.1 * s));
    shoelace(&poly)
}

/// Sutherland–Hodgman clip keeping points with `side(p) >= 0`.
fn clip(poly: &[(f64, f64)], side: impl Fn((f64, f64)) -> f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    if poly.is_empty() {
        return out;
    }
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let sa = side(a);
        let sb = side(b);
        if sa >= 0.0 {
            out.push(a);
        }
        if (sa >= 0.0) != (sb >= 0.0) {
            let t = sa / (sa - sb);
            out.push((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)));
        }
    }
    out
}

fn shoelace(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut a = 0.0;
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        a += p.0 * q.1 - q.0 * p.1;
    }
    0.5 * a.abs()
}

/// Dense system matrix from exhaustive strip/pixel intersection, rows
/// `(view, bin)` and columns `y * width + x`.
pub fn brute_force_matrix(width: usize, height: usize, geom: &Geometry) -> Vec<Vec<f64>> {
    let nb = geom.num_bins();
    let ds = geom.bin_spacing();
    let mut rows = Vec::with_capacity(geom.len());
    for &angle in geom.angles() {
        for b in 0..nb {
            let centre = (b as f64 - (nb as f64 - 1.0) / 2.0) * ds;
            let lo = centre - ds / 2.0;
            let hi = centre + ds / 2.0;
            let mut row = vec![0.0; width * height];
            for y in 0..height {
                for x in 0..width {
                    // pixel centre with the origin at the grid centre, y up
                    let cx = x as f64 - (width as f64 - 1.0) / 2.0;
                    let cy = (height as f64 - 1.0) / 2.0 - y as f64;
                    let area =
                        square_slab_area(cx - 0.5, cx + 0.5, cy - 0.5, cy + 0.5, angle, lo, hi);
                    row[y * width + x] = area / ds;
                }
            }
            rows.push(row);
        }
    }
    rows
}

pub fn dense_apply(rows: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    rows.iter()
        .map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}
