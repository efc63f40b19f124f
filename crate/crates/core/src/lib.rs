//! Information processing capacity of stationary input/readout systems.
//!
//! The crate estimates how well the linear span of a system's readouts
//! reconstructs each function of an orthonormal Legendre product basis over
//! `[-1, 1]^q`, corrects the finite-sample bias of those estimates, and
//! provides the supporting pieces: quasi-random sampling, synthetic systems
//! with known capacities, a split-step fiber simulator that produces readouts,
//! factor-analysis dimensionality, linear-readout benchmarks and SVG plots.
//!
//! Data-parallel loops go through rayon when the `parallel` feature is on
//! (the default) and run sequentially otherwise; results are identical.

pub mod basis;
pub mod capacity;
pub mod dataset;
pub mod error;
pub mod estimators;
pub mod factor;
pub mod par;
pub mod photonic;
pub mod plot;
pub mod sampling;
pub mod stats;
pub mod synthetic;
pub mod tasks;

pub use basis::{enumerate_basis, BasisSet, MultiIndex};
pub use capacity::{CapacityStatus, CapacityValue, GramStats};
pub use dataset::Dataset;
pub use error::{Error, ErrorKind, Result};
pub use estimators::{estimate, Algorithm, CapacityReport, EstimatorConfig};
pub use sampling::{pseudo_random_points, sobol_points, SampleMatrix, SampleSource};
