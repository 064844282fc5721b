//! Shared domain types and the projection operator.

pub mod geometry;
pub mod image;
pub mod projector;

pub use geometry::{Geometry, Sinogram};
pub use image::{Image, RoI};
pub use projector::{back_project, forward_project, LinearOperator, Projector, SystemMatrix};
