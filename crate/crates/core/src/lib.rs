//! Sparse-view tomographic reconstruction with eigenspace priors built from
//! earlier scans of the same object, and a spatially weighted prior that
//! backs off wherever the new scan shows structure absent from all
//! templates.
//!
//! Module map:
//!
//! * [`core`]: images, geometry, sinograms and the projector `Φ`.
//! * [`transforms`]: orthonormal sparsifying bases `Ψ` (DCT, Haar).
//! * [`recon`]: FBP, ART, SART, SIRT and L1 compressed sensing.
//! * [`prior`]: eigenspace construction and prior-regularised solvers.
//! * [`weights`]: multi-method change detection producing the weights map.
//! * [`evaluation`]: SSIM/RMSE/PSNR and synthetic longitudinal phantoms.
//! * [`pipeline`]: file formats, configuration and experiment runners.

pub mod core;
pub mod error;
pub mod evaluation;
pub mod pipeline;
pub mod prior;
pub mod recon;
pub mod transforms;
pub mod weights;

pub use crate::core::{Geometry, Image, RoI, Sinogram};
pub use error::{Error, Result};
