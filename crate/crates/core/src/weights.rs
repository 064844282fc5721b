//! Spatial weights map for the weighted prior.
//!
//! The test scan and every template are pilot-reconstructed from the test's
//! geometry with several methods. Per method, the test pilot is projected
//! onto the eigenspace of the equally degraded template pilots, so that
//! geometry artefacts shared with the templates cancel. What survives in
//! every method is treated as genuine change `d`, and the weight is
//! `1 / (1 + k d)`.

use rayon::prelude::*;

use crate::core::{forward_project, Geometry, Image, Sinogram};
use crate::error::{Error, Result};
use crate::prior::{build_eigenspace, project_onto, EigenspacePrior};
use crate::recon::{MethodId, SolverParams};

/// Per-pixel prior weight in `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightsMap {
    image: Image,
}

impl WeightsMap {
    pub fn uniform(width: usize, height: usize) -> Result<Self> {
        Ok(Self {
            image: Image::filled(width, height, 1.0)?,
        })
    }

    pub fn from_image(image: Image) -> Result<Self> {
        let w = Self { image };
        w.validate()?;
        Ok(w)
    }

    /// `W = 1 / (1 + k d)` pixelwise.
    pub fn from_difference(diff: &Image, k: f64) -> Result<Self> {
        if !(k >= 0.0 && k.is_finite()) {
            return Err(Error::config(format!("k must be non-negative, got {k}")));
        }
        if diff.data().iter().any(|&d| !(d >= 0.0) || !d.is_finite()) {
            return Err(Error::config("difference map must be finite and non-negative"));
        }
        Self::from_image(diff.map(|d| 1.0 / (1.0 + k * d)))
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(v) = self.image.data().iter().find(|&&v| !(v > 0.0 && v <= 1.0)) {
            return Err(Error::config(format!("weight {v} outside (0, 1]")));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    pub fn data(&self) -> &[f64] {
        self.image.data()
    }

    pub fn as_image(&self) -> &Image {
        &self.image
    }

    pub fn into_image(self) -> Image {
        self.image
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightsParams {
    /// sensitivity of the weights to the detected difference
    pub k: f64,
    /// pilot reconstruction methods
    pub methods: Vec<MethodId>,
    /// solver settings for the iterative pilots
    pub pilot: SolverParams,
    /// 3x3 median filter on the combined difference map
    pub median: bool,
}

impl Default for WeightsParams {
    fn default() -> Self {
        Self {
            k: 50.0,
            methods: vec![MethodId::Fbp, MethodId::CsDct],
            pilot: SolverParams::cs_default(),
            median: false,
        }
    }
}

impl WeightsParams {
    /// All five method families.
    pub fn all_methods() -> Vec<MethodId> {
        vec![
            MethodId::Fbp,
            MethodId::CsDct,
            MethodId::CsHaar,
            MethodId::Sart,
            MethodId::Sirt,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::config("weights need at least one pilot method"));
        }
        if !(self.k >= 0.0 && self.k.is_finite()) {
            return Err(Error::config(format!("k must be non-negative, got {}", self.k)));
        }
        self.pilot.validate()
    }

    fn params_for(&self, m: MethodId) -> SolverParams {
        match m {
            MethodId::Art | MethodId::Sart | MethodId::Sirt => SolverParams {
                max_iters: self.pilot.max_iters.min(MethodId::Sirt.default_params().max_iters),
                ..self.pilot.clone()
            },
            _ => self.pilot.clone(),
        }
    }
}

/// Which template eigenspace the test pilots are compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenspaceSource {
    /// templates re-reconstructed from the test geometry
    LowQuality,
    /// the original templates
    HighQuality,
}

/// Measurements of a template under the test's exact geometry.
pub fn simulate_template_measurements(template: &Image, geom: &Geometry) -> Result<Sinogram> {
    forward_project(template, geom)
}

/// `|X − P|` where `P` is the projection of `test_pilot` onto `prior_low`.
pub fn difference_map(test_pilot: &Image, prior_low: &EigenspacePrior) -> Result<Image> {
    let (_, p) = project_onto(prior_low, test_pilot)?;
    Ok(test_pilot.sub(&p).map(f64::abs))
}

/// Per-method and combined difference maps.
#[derive(Debug, Clone)]
pub struct DifferenceMaps {
    /// normalised `|Xʲ − Pʲ|` per method, in `params.methods` order
    pub per_method: Vec<(MethodId, Image)>,
    /// pixelwise minimum over methods
    pub combined: Image,
}

impl DifferenceMaps {
    pub fn weights(&self, k: f64) -> Result<WeightsMap> {
        WeightsMap::from_difference(&self.combined, k)
    }
}

/// 99th-percentile intensity used to bring pilots of different methods to a
/// common scale.
pub fn percentile_scale(img: &Image) -> f64 {
    let mut v: Vec<f64> = img.data().to_vec();
    v.sort_by(f64::total_cmp);
    let idx = ((v.len() - 1) as f64 * 0.99).floor() as usize;
    let s = v[idx];
    if s > 0.0 {
        s
    } else {
        let m = v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        if m > 0.0 {
            m
        } else {
            1.0
        }
    }
}

/// Runs the pilot reconstructions and returns the difference maps.
pub fn compute_difference_maps(
    test_sino: &Sinogram,
    templates: &[Image],
    params: &WeightsParams,
    source: EigenspaceSource,
) -> Result<DifferenceMaps> {
    if templates.len() < 2 {
        return Err(Error::config(format!(
            "weights need at least 2 templates, got {}",
            templates.len()
        )));
    }
    difference_maps(test_sino, templates, params, source)
}

/// As [`compute_difference_maps`], but a single template yields a mean-only
/// eigenspace.
pub(crate) fn difference_maps(
    test_sino: &Sinogram,
    templates: &[Image],
    params: &WeightsParams,
    source: EigenspaceSource,
) -> Result<DifferenceMaps> {
    params.validate()?;
    if templates.is_empty() {
        return Err(Error::config("weights need at least one template"));
    }
    let (w, h) = (templates[0].width(), templates[0].height());
    for (i, t) in templates.iter().enumerate() {
        templates[0].ensure_same_shape(t, &format!("template {i}"))?;
    }
    let geom = test_sino.geometry();

    let template_sinos: Vec<Sinogram> = templates
        .par_iter()
        .map(|t| simulate_template_measurements(t, geom))
        .collect::<Result<_>>()?;
    let eigenspace = |imgs: &[Image]| {
        if imgs.len() == 1 {
            Ok(EigenspacePrior::mean_only(imgs[0].clone()))
        } else {
            build_eigenspace(imgs)
        }
    };
    let high = match source {
        EigenspaceSource::HighQuality => Some(eigenspace(templates)?),
        EigenspaceSource::LowQuality => None,
    };

    // every (method, input) pair; input 0 is the test
    let jobs: Vec<(usize, usize)> = (0..params.methods.len())
        .flat_map(|m| (0..=templates.len()).map(move |i| (m, i)))
        .filter(|&(_, i)| source == EigenspaceSource::LowQuality || i == 0)
        .collect();
    let pilots: Vec<Image> = jobs
        .par_iter()
        .map(|&(m, i)| {
            let method = params.methods[m];
            let sino = if i == 0 { test_sino } else { &template_sinos[i - 1] };
            method
                .reconstruct(sino, w, h, &params.params_for(method))
                .map_err(|e| {
                    let what = if i == 0 {
                        "test".to_string()
                    } else {
                        format!("template {}", i - 1)
                    };
                    e.context(format!("{method} pilot of {what}"))
                })
        })
        .collect::<Result<_>>()?;

    let per_input = if source == EigenspaceSource::LowQuality {
        templates.len() + 1
    } else {
        1
    };
    let per_method: Vec<(MethodId, Image)> = params
        .methods
        .par_iter()
        .enumerate()
        .map(|(m, &method)| {
            let block = &pilots[m * per_input..(m + 1) * per_input];
            let test_pilot = &block[0];
            let prior = match &high {
                Some(p) => p.clone(),
                None => eigenspace(&block[1..])?,
            };
            let scale = percentile_scale(test_pilot);
            let d = difference_map(test_pilot, &prior)?.scaled(1.0 / scale);
            Ok((method, d))
        })
        .collect::<Result<_>>()?;

    let mut combined = per_method[0].1.clone();
    for (_, d) in &per_method[1..] {
        for (c, v) in combined.data_mut().iter_mut().zip(d.data()) {
            *c = c.min(*v);
        }
    }
    if params.median {
        combined = median3(&combined);
    }
    Ok(DifferenceMaps {
        per_method,
        combined,
    })
}

/// Weights map from the test measurements and the template images.
pub fn compute_weights(
    test_sino: &Sinogram,
    templates: &[Image],
    params: &WeightsParams,
) -> Result<WeightsMap> {
    compute_difference_maps(test_sino, templates, params, EigenspaceSource::LowQuality)?
        .weights(params.k)
}

/// 3x3 median with edge replication.
pub fn median3(img: &Image) -> Image {
    let (w, h) = (img.width() as isize, img.height() as isize);
    Image::from_fn(img.width(), img.height(), |x, y| {
        let mut v = [0.0; 9];
        let mut n = 0;
        for dy in -1..=1 {
            for dx in -1..=1 {
                let xx = (x as isize + dx).clamp(0, w - 1) as usize;
                let yy = (y as isize + dy).clamp(0, h - 1) as usize;
                v[n] = img.get(xx, yy);
                n += 1;
            }
        }
        v.sort_by(f64::total_cmp);
        v[4]
    })
    .expect("same dimensions as a valid image")
}
