//! Row-action (ART), view-block (SART) and simultaneous (SIRT) iterations.
//!
//! All three start from the zero image and normalise by row and column sums
//! of the exact projector.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{relative_change, SolverParams};
use crate::core::{Geometry, Image, Projector, Sinogram};
use crate::error::{Error, Result};

fn check_inputs(sino: &Sinogram, geom: &Geometry, params: &SolverParams) -> Result<()> {
    params.validate()?;
    if sino.geometry() != geom {
        return Err(Error::config("sinogram geometry does not match the solver geometry"));
    }
    Ok(())
}

struct Divergence {
    limit: f64,
}

impl Divergence {
    fn new(sino: &Sinogram) -> Self {
        Self {
            limit: 1e6 * sino.norm(),
        }
    }

    fn check(&self, method: &str, iter: usize, x: &[f64]) -> Result<()> {
        let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !n.is_finite() || n > self.limit {
            return Err(Error::solver(format!(
                "{method} diverged at iteration {iter}: image norm {n:e} exceeds {:e}",
                self.limit
            )));
        }
        Ok(())
    }
}

#[inline]
fn reciprocal(v: f64) -> f64 {
    if v > 1e-12 {
        1.0 / v
    } else {
        0.0
    }
}

/// Kaczmarz sweeps over all rays in one seeded pseudo-random order, fixed
/// across sweeps.
pub fn art(
    sino: &Sinogram,
    geom: &Geometry,
    width: usize,
    height: usize,
    params: &SolverParams,
) -> Result<Image> {
    check_inputs(sino, geom, params)?;
    let proj = Projector::new(width, height, geom)?;
    let a = proj.system_matrix();
    let y = sino.data();
    let row_norm2: Vec<f64> = (0..a.num_rows())
        .map(|i| a.row(i).1.iter().map(|w| w * w).sum())
        .collect();
    let mut order: Vec<usize> = (0..a.num_rows()).filter(|&i| row_norm2[i] > 0.0).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(params.seed));
    let guard = Divergence::new(sino);

    let mut x = vec![0.0; width * height];
    let mut prev = x.clone();
    for iter in 0..params.max_iters {
        for &i in &order {
            let (cols, vals) = a.row(i);
            let dotp: f64 = cols.iter().zip(vals).map(|(&j, &w)| w * x[j as usize]).sum();
            let step = params.relax * (y[i] - dotp) / row_norm2[i];
            for (&j, &w) in cols.iter().zip(vals) {
                x[j as usize] += step * w;
            }
        }
        guard.check("art", iter, &x)?;
        if relative_change(&x, &prev) < params.tol {
            break;
        }
        prev.copy_from_slice(&x);
    }
    Image::from_vec(width, height, x)
}

/// One view at a time, in acquisition order.
pub fn sart(
    sino: &Sinogram,
    geom: &Geometry,
    width: usize,
    height: usize,
    params: &SolverParams,
) -> Result<Image> {
    check_inputs(sino, geom, params)?;
    let proj = Projector::new(width, height, geom)?;
    let nb = geom.num_bins();
    let npix = width * height;
    let ones = vec![1.0; npix];
    let inv_row: Vec<Vec<f64>> = (0..geom.num_views())
        .into_par_iter()
        .map(|v| {
            let mut r = vec![0.0; nb];
            proj.forward_view(&ones, v, &mut r);
            r.into_iter().map(reciprocal).collect()
        })
        .collect();
    let inv_col: Vec<Vec<f64>> = (0..geom.num_views())
        .into_par_iter()
        .map(|v| {
            let mut c = vec![0.0; npix];
            proj.back_view_add(&vec![1.0; nb], v, &mut c);
            c.into_iter().map(reciprocal).collect()
        })
        .collect();
    let guard = Divergence::new(sino);

    let mut x = vec![0.0; npix];
    let mut prev = x.clone();
    let mut resid = vec![0.0; nb];
    let mut corr = vec![0.0; npix];
    for iter in 0..params.max_iters {
        for v in 0..geom.num_views() {
            proj.forward_view(&x, v, &mut resid);
            for ((r, &m), &s) in resid.iter_mut().zip(sino.view(v)).zip(&inv_row[v]) {
                *r = (m - *r) * s;
            }
            corr.iter_mut().for_each(|c| *c = 0.0);
            proj.back_view_add(&resid, v, &mut corr);
            for ((xi, &c), &s) in x.iter_mut().zip(&corr).zip(&inv_col[v]) {
                *xi += params.relax * c * s;
            }
        }
        guard.check("sart", iter, &x)?;
        if relative_change(&x, &prev) < params.tol {
            break;
        }
        prev.copy_from_slice(&x);
    }
    Image::from_vec(width, height, x)
}

/// Fully simultaneous Landweber-type iteration `x += relax * C Φᵀ R (y - Φx)`.
pub fn sirt(
    sino: &Sinogram,
    geom: &Geometry,
    width: usize,
    height: usize,
    params: &SolverParams,
) -> Result<Image> {
    check_inputs(sino, geom, params)?;
    let proj = Projector::new(width, height, geom)?;
    let npix = width * height;
    let inv_row: Vec<f64> = proj
        .forward_raw(&vec![1.0; npix])
        .into_iter()
        .map(reciprocal)
        .collect();
    let inv_col: Vec<f64> = proj
        .back_raw(&vec![1.0; geom.len()])
        .into_iter()
        .map(reciprocal)
        .collect();
    let guard = Divergence::new(sino);

    let mut x = vec![0.0; npix];
    for iter in 0..params.max_iters {
        let mut r = proj.forward_raw(&x);
        for ((ri, &m), &s) in r.iter_mut().zip(sino.data()).zip(&inv_row) {
            *ri = (m - *ri) * s;
        }
        let c = proj.back_raw(&r);
        let prev = x.clone();
        for ((xi, ci), &s) in x.iter_mut().zip(c).zip(&inv_col) {
            *xi += params.relax * ci * s;
        }
        guard.check("sirt", iter, &x)?;
        if relative_change(&x, &prev) < params.tol {
            break;
        }
    }
    Image::from_vec(width, height, x)
}
