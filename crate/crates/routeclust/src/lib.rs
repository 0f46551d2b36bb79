//! Clustering of receiver routes from player tracking data.
//!
//! Routes are variable-length 2-D trajectories. Each cluster is modeled as a
//! Bézier curve mean with independent per-axis Gaussian noise, and a
//! K-component mixture of those models is fitted with the EM algorithm. The
//! crate also ships the preprocessing pipeline that turns raw tracking
//! tables into normalized curves, a synthetic corpus generator for
//! validation, and label/report utilities for condensing clusters into named
//! route groups.

pub mod bernstein;
pub mod curve;
pub mod synth;

pub use curve::{CurveMeta, NormalizedCurve};
