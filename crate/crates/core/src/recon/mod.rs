//! Baseline reconstructors: FBP, ART, SART, SIRT and L1-regularised CS.
//!
//! These double as the pilot engines of the weights map.

mod algebraic;
pub(crate) mod cs;
mod fbp;

use std::fmt;
use std::str::FromStr;

pub use algebraic::{art, sart, sirt};
pub use cs::{
    cs_reconstruct, lipschitz_estimate, power_iteration, BasisProjector, CompositeProblem,
    PriorTerm, ProxOutcome,
};
pub use fbp::{fbp, Filter};

use crate::core::{Geometry, Image, Sinogram};
use crate::error::{Error, Result};
use crate::transforms::BasisKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRule {
    /// constant step `1 / L` from the power-iteration estimate
    Fixed,
    /// start at `1 / L`, halve until the quadratic upper bound holds
    Backtracking,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverParams {
    pub max_iters: usize,
    /// relative image-change stopping tolerance
    pub tol: f64,
    /// relaxation for ART/SART/SIRT
    pub relax: f64,
    pub lambda1: f64,
    pub step_rule: StepRule,
    /// monotone FISTA momentum for the proximal-gradient solvers
    pub accelerate: bool,
    /// seeds ART row ordering and power iteration
    pub seed: u64,
}

impl SolverParams {
    /// 300 proximal-gradient iterations, λ₁ = 1.
    pub fn cs_default() -> Self {
        Self {
            max_iters: 300,
            tol: 1e-5,
            relax: 1.0,
            lambda1: 1.0,
            step_rule: StepRule::Backtracking,
            accelerate: true,
            seed: 0,
        }
    }

    /// 100 sweeps.
    pub fn algebraic_default() -> Self {
        Self {
            max_iters: 100,
            ..Self::cs_default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::config("max_iters must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::config(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.relax > 0.0 && self.relax < 2.0) {
            return Err(Error::config(format!(
                "relaxation must lie in (0, 2), got {}",
                self.relax
            )));
        }
        if !(self.lambda1 >= 0.0) || !self.lambda1.is_finite() {
            return Err(Error::config(format!(
                "lambda1 must be non-negative, got {}",
                self.lambda1
            )));
        }
        Ok(())
    }
}

impl Default for SolverParams {
    fn default() -> Self {
        Self::cs_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MethodId {
    Fbp,
    CsDct,
    CsHaar,
    Art,
    Sart,
    Sirt,
}

impl MethodId {
    pub const ALL: [MethodId; 6] = [
        MethodId::Fbp,
        MethodId::CsDct,
        MethodId::CsHaar,
        MethodId::Art,
        MethodId::Sart,
        MethodId::Sirt,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MethodId::Fbp => "fbp",
            MethodId::CsDct => "cs-dct",
            MethodId::CsHaar => "cs-haar",
            MethodId::Art => "art",
            MethodId::Sart => "sart",
            MethodId::Sirt => "sirt",
        }
    }

    /// Default solver settings for this method.
    pub fn default_params(&self) -> SolverParams {
        match self {
            MethodId::Fbp | MethodId::CsDct | MethodId::CsHaar => SolverParams::cs_default(),
            MethodId::Art | MethodId::Sart | MethodId::Sirt => SolverParams::algebraic_default(),
        }
    }

    /// Runs the method on `sino` for a `width x height` grid.
    pub fn reconstruct(
        &self,
        sino: &Sinogram,
        width: usize,
        height: usize,
        params: &SolverParams,
    ) -> Result<Image> {
        let geom: &Geometry = sino.geometry();
        match self {
            MethodId::Fbp => fbp(sino, width, height, Filter::RamLak),
            MethodId::CsDct => cs_reconstruct(sino, width, height, BasisKind::Dct2, params),
            MethodId::CsHaar => cs_reconstruct(sino, width, height, BasisKind::Haar2, params),
            MethodId::Art => art(sino, geom, width, height, params),
            MethodId::Sart => sart(sino, geom, width, height, params),
            MethodId::Sirt => sirt(sino, geom, width, height, params),
        }
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase().replace('_', "-");
        MethodId::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config(format!("unknown reconstruction method '{s}'")))
    }
}

/// ‖a - b‖ / max(‖b‖, eps)
pub(crate) fn relative_change(new: &[f64], old: &[f64]) -> f64 {
    let mut d = 0.0;
    let mut n = 0.0;
    for (a, b) in new.iter().zip(old) {
        d += (a - b) * (a - b);
        n += b * b;
    }
    d.sqrt() / n.sqrt().max(1e-300)
}
