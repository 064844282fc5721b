//! Global eigenspace prior: PCA of aligned template scans, and the
//! prior-regularised reconstructions that alternate between a sparse
//! coefficient update θ and a closed-form eigen-coefficient update α.
//!
//! `λ₂` is dimensionless: the prior term is scaled by L̂ = λ_max(ΨᵀΦᵀΦΨ),
//! so that `λ₂ = 1` weighs the prior like the best-measured image direction
//! regardless of view count and image size.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::core::{Image, Projector, Sinogram};
use crate::error::{Error, Result};
use crate::recon::{
    cs_reconstruct, fbp, power_iteration, BasisProjector, CompositeProblem, Filter, PriorTerm,
    SolverParams,
};
use crate::transforms::{Basis, BasisKind};
use crate::weights::WeightsMap;

/// Mean plus orthonormal principal directions of a template set.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenspacePrior {
    pub mean: Image,
    pub eigvecs: Vec<Image>,
    /// covariance eigenvalues, non-increasing
    pub eigvals: Vec<f64>,
}

/// Eigen-coefficients α of an image relative to a prior.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenCoeffs {
    pub alpha: Vec<f64>,
}

impl EigenspacePrior {
    /// A prior with no modes of variation around `mean`.
    pub fn mean_only(mean: Image) -> Self {
        Self {
            mean,
            eigvecs: Vec::new(),
            eigvals: Vec::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.mean.width()
    }

    pub fn height(&self) -> usize {
        self.mean.height()
    }

    pub fn rank(&self) -> usize {
        self.eigvecs.len()
    }

    /// μ + Σ V_k α_k
    pub fn synthesize(&self, alpha: &[f64]) -> Image {
        let mut p = self.mean.clone();
        for (v, &a) in self.eigvecs.iter().zip(alpha) {
            p.axpy(a, v);
        }
        p
    }

    /// Checks the invariants of a deserialised or hand-built prior.
    pub fn validate(&self) -> Result<()> {
        if self.eigvecs.len() != self.eigvals.len() {
            return Err(Error::config("eigenvector and eigenvalue counts differ"));
        }
        for (i, v) in self.eigvecs.iter().enumerate() {
            self.mean.ensure_same_shape(v, "eigenvector")?;
            for (j, u) in self.eigvecs.iter().enumerate().take(i + 1) {
                let d = v.dot(u) - if i == j { 1.0 } else { 0.0 };
                if d.abs() > 1e-8 {
                    return Err(Error::config(format!(
                        "eigenvectors {j} and {i} are not orthonormal (error {d:e})"
                    )));
                }
            }
        }
        if self.eigvals.windows(2).any(|w| w[1] > w[0]) || self.eigvals.iter().any(|&l| l < 0.0) {
            return Err(Error::config("eigenvalues must be non-negative and non-increasing"));
        }
        Ok(())
    }
}

/// Principal directions of the centred templates, computed through the
/// `L x L` Gram matrix.
///
/// Directions whose eigenvalue falls below `1e-12 * λ_max` are dropped, so
/// at most `L - 1` remain.
pub fn build_eigenspace(templates: &[Image]) -> Result<EigenspacePrior> {
    if templates.len() < 2 {
        return Err(Error::config(format!(
            "an eigenspace needs at least 2 templates, got {}",
            templates.len()
        )));
    }
    let first = &templates[0];
    for (i, t) in templates.iter().enumerate().skip(1) {
        first.ensure_same_shape(t, &format!("template {i}"))?;
    }
    let l = templates.len();
    let npix = first.len();
    let mut mean = vec![0.0; npix];
    for t in templates {
        for (m, v) in mean.iter_mut().zip(t.data()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= l as f64);
    let mean = Image::from_vec(first.width(), first.height(), mean)?;
    let centred: Vec<Image> = templates.iter().map(|t| t.sub(&mean)).collect();

    let gram = DMatrix::from_fn(l, l, |i, j| centred[i].dot(&centred[j]));
    let energy: f64 = templates.iter().map(|t| t.dot(t)).sum::<f64>() / l as f64;
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lmax = eig.eigenvalues[order[0]].max(0.0);
    // also ignore round-off sized variation of (nearly) identical templates
    let floor = (1e-12 * lmax).max(1e-24 * energy);

    let mut eigvecs: Vec<Image> = Vec::new();
    let mut eigvals = Vec::new();
    for &k in order.iter().take(l - 1) {
        let lam = eig.eigenvalues[k];
        if !(lam > floor) {
            break;
        }
        let u = eig.eigenvectors.column(k);
        let mut v = Image::zeros(first.width(), first.height())?;
        for (i, c) in centred.iter().enumerate() {
            v.axpy(u[i], c);
        }
        // two passes of modified Gram-Schmidt against the accepted directions
        for _ in 0..2 {
            for prev in &eigvecs {
                let d = v.dot(prev);
                v.axpy(-d, prev);
            }
        }
        let n = v.norm();
        if n <= 1e-300 {
            continue;
        }
        v = v.scaled(1.0 / n);
        let peak = v
            .data()
            .iter()
            .copied()
            .fold(0.0f64, |m, a| if a.abs() > m.abs() { a } else { m });
        if peak < 0.0 {
            v = v.scaled(-1.0);
        }
        eigvecs.push(v);
        eigvals.push(lam / (l - 1) as f64);
    }
    Ok(EigenspacePrior {
        mean,
        eigvecs,
        eigvals,
    })
}

/// α = Vᵀ(img − μ) and the nearest point μ + Vα of the affine subspace.
pub fn project_onto(prior: &EigenspacePrior, img: &Image) -> Result<(EigenCoeffs, Image)> {
    prior.mean.ensure_same_shape(img, "projection input")?;
    let centred = img.sub(&prior.mean);
    let alpha: Vec<f64> = prior.eigvecs.iter().map(|v| v.dot(&centred)).collect();
    let proj = prior.synthesize(&alpha);
    Ok((EigenCoeffs { alpha }, proj))
}

const TIKHONOV_FLOOR: f64 = 1e-10;

/// Weighted least-squares α = (VᵀW²V)⁻¹ VᵀW²(x − μ).
///
/// `weights_sq` holds the squared per-pixel weights.
pub fn weighted_alpha(prior: &EigenspacePrior, x: &Image, weights_sq: &[f64]) -> Result<EigenCoeffs> {
    prior.mean.ensure_same_shape(x, "weighted projection input")?;
    if weights_sq.len() != x.len() {
        return Err(Error::config("weights do not match the image size"));
    }
    let r = prior.rank();
    if r == 0 {
        return Ok(EigenCoeffs { alpha: Vec::new() });
    }
    let centred = x.sub(&prior.mean);
    let wv: Vec<Vec<f64>> = prior
        .eigvecs
        .iter()
        .map(|v| v.data().iter().zip(weights_sq).map(|(a, w)| a * w).collect())
        .collect();
    let mut gram = DMatrix::from_fn(r, r, |i, j| crate::core::image::dot(&wv[i], prior.eigvecs[j].data()));
    let rhs = DVector::from_fn(r, |i, _| crate::core::image::dot(&wv[i], centred.data()));
    let scale = (0..r).map(|i| gram[(i, i)]).fold(0.0f64, f64::max);
    if !(scale > 0.0) {
        return Err(Error::solver("weighted eigen-coefficient system is singular"));
    }
    let chol = match gram.clone().cholesky() {
        Some(c) => c,
        None => {
            // weights vanish on some mode; regularise just enough to factor
            for i in 0..r {
                gram[(i, i)] += TIKHONOV_FLOOR * scale;
            }
            gram.cholesky().ok_or_else(|| {
                Error::solver("weighted eigen-coefficient system is singular beyond the Tikhonov floor")
            })?
        }
    };
    let alpha = chol.solve(&rhs);
    Ok(EigenCoeffs {
        alpha: alpha.iter().copied().collect(),
    })
}

/// Gradient of `λ₂‖W(x − μ − Vα)‖²` with respect to α.
pub fn alpha_gradient(
    prior: &EigenspacePrior,
    x: &Image,
    alpha: &[f64],
    lambda2: f64,
    weights_sq: Option<&[f64]>,
) -> Vec<f64> {
    let resid = x.sub(&prior.synthesize(alpha));
    prior
        .eigvecs
        .iter()
        .map(|v| {
            let s: f64 = match weights_sq {
                Some(w2) => v
                    .data()
                    .iter()
                    .zip(resid.data())
                    .zip(w2)
                    .map(|((a, r), w)| a * r * w)
                    .sum(),
                None => v.dot(&resid),
            };
            -2.0 * lambda2 * s
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub outer_iters: usize,
    /// inner θ-solver; its `lambda1` is ignored in favour of the field above
    pub inner: SolverParams,
}

impl Default for PriorParams {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 0.5,
            outer_iters: 5,
            inner: SolverParams {
                max_iters: 100,
                ..SolverParams::cs_default()
            },
        }
    }
}

impl PriorParams {
    pub fn validate(&self) -> Result<()> {
        if self.outer_iters < 1 {
            return Err(Error::config("outer_iters must be at least 1"));
        }
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) {
            return Err(Error::config(format!("lambda1 must be non-negative, got {}", self.lambda1)));
        }
        if !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return Err(Error::config(format!("lambda2 must be non-negative, got {}", self.lambda2)));
        }
        self.inner_params().validate()
    }

    fn inner_params(&self) -> SolverParams {
        SolverParams {
            lambda1: self.lambda1,
            ..self.inner.clone()
        }
    }
}

/// Result of an alternating prior reconstruction.
#[derive(Debug, Clone)]
pub struct PriorOutcome {
    pub image: Image,
    pub alpha: Vec<f64>,
    /// cost after initialisation and after every outer iteration
    pub objective: Vec<f64>,
}

/// Minimises `‖Φx − y‖² + λ₁‖θ‖₁ + λ₂L̂‖x − (μ + Vα)‖²` with `x = Ψθ`.
pub fn reconstruct_unweighted(
    sino: &Sinogram,
    prior: &EigenspacePrior,
    basis: BasisKind,
    params: &PriorParams,
) -> Result<Image> {
    Ok(alternate(sino, prior, basis, None, params)?.image)
}

/// As [`reconstruct_unweighted`] with the prior residual scaled per pixel by `W`.
pub fn reconstruct_weighted(
    sino: &Sinogram,
    prior: &EigenspacePrior,
    basis: BasisKind,
    weights: &WeightsMap,
    params: &PriorParams,
) -> Result<Image> {
    Ok(alternate(sino, prior, basis, Some(weights), params)?.image)
}

/// Alternating minimisation with its objective trace.
pub fn alternate(
    sino: &Sinogram,
    prior: &EigenspacePrior,
    basis_kind: BasisKind,
    weights: Option<&WeightsMap>,
    params: &PriorParams,
) -> Result<PriorOutcome> {
    params.validate()?;
    prior.validate()?;
    let (w, h) = (prior.width(), prior.height());
    let weights_sq: Option<Vec<f64>> = match weights {
        Some(wm) => {
            if wm.width() != w || wm.height() != h {
                return Err(Error::config(format!(
                    "weights map {}x{} does not match prior grid {w}x{h}",
                    wm.width(),
                    wm.height()
                )));
            }
            wm.validate()?;
            Some(wm.data().iter().map(|v| v * v).collect())
        }
        None => None,
    };
    let inner = params.inner_params();

    if params.lambda2 == 0.0 {
        // the prior term vanishes and the cost is exactly the CS cost
        let image = cs_reconstruct(sino, w, h, basis_kind, &inner)?;
        let alpha = project_onto(prior, &image)?.0.alpha;
        return Ok(PriorOutcome {
            image,
            alpha,
            objective: Vec::new(),
        });
    }

    let proj = Projector::new(w, h, sino.geometry())?;
    let basis = Basis::new(basis_kind, w, h)?;
    let lip = power_iteration(
        &BasisProjector {
            projector: &proj,
            basis: &basis,
        },
        inner.seed,
    )?;
    let lambda2 = params.lambda2 * lip;

    let pilot = fbp(sino, w, h, Filter::RamLak)?;
    let mut theta = basis.analyze_raw(pilot.data());
    let mut alpha = project_onto(prior, &pilot)?.0.alpha;

    let cost = |theta: &[f64], alpha: &[f64]| -> f64 {
        let target = prior.synthesize(alpha);
        CompositeProblem {
            projector: &proj,
            basis: &basis,
            measurements: sino.data(),
            lambda1: params.lambda1,
            prior: Some(PriorTerm {
                lambda2,
                target: target.data(),
                weights_sq: weights_sq.as_deref(),
            }),
        }
        .objective(theta)
    };

    let mut objective = vec![cost(&theta, &alpha)];
    for outer in 0..params.outer_iters {
        let target = prior.synthesize(&alpha);
        let problem = CompositeProblem {
            projector: &proj,
            basis: &basis,
            measurements: sino.data(),
            lambda1: params.lambda1,
            prior: Some(PriorTerm {
                lambda2,
                target: target.data(),
                weights_sq: weights_sq.as_deref(),
            }),
        };
        theta = problem
            .solve(theta, &inner, lip)
            .map_err(|e| e.context(format!("outer iteration {outer}")))?
            .theta;
        let x = Image::from_vec(w, h, basis.synthesize_raw(&theta))?;
        alpha = match &weights_sq {
            Some(w2) => weighted_alpha(prior, &x, w2)?.alpha,
            None => project_onto(prior, &x)?.0.alpha,
        };
        objective.push(cost(&theta, &alpha));
    }
    Ok(PriorOutcome {
        image: Image::from_vec(w, h, basis.synthesize_raw(&theta))?,
        alpha,
        objective,
    })
}
