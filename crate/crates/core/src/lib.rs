//! Kernel methods for treating sample densities as attributes.
//!
//! The crate covers the whole chain from raw per-subject samples to a
//! fitted regression model:
//!
//! - [`kernel`]: density kernels and positive definite kernels, Gram matrices.
//! - [`parzen`]: Parzen window density estimates and bandwidth rules.
//! - [`mmd`]: kernel mean embeddings of samples and MMD distances between them.
//! - [`rke`]: regularized kernel estimation from noisy dissimilarities and
//!   low-rank pseudo-attributes.
//! - [`ssanova`]: smoothing spline ANOVA models over tensor-product kernels,
//!   including terms built from density pseudo-attributes.
//! - [`dcor`]: distance covariance, distance correlation and permutation tests.
//! - [`pipeline`]: config-driven end-to-end runs with a hashed manifest.
//!
//! Data-parallel loops (Gram assembly, pairwise distances, permutation
//! replicates, grid searches) use rayon when the `parallel` feature is on
//! (the default). Every parallel loop writes independent entries, so the
//! results are bit-identical to the sequential build.

pub mod dcor;
pub mod error;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod mmd;
pub mod par;
pub mod parzen;
pub mod pipeline;
pub mod quad;
pub mod rke;
pub mod ssanova;

pub use error::{Error, Result};
pub use kernel::{GramMatrix, KernelFamily, KernelSpec};
pub use mmd::{DistanceMatrix, EmbeddedDensity};
pub use parzen::{DensityEstimate, Sample};
