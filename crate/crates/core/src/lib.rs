//! Probability sampling designs and design-based estimation.
//!
//! The crate covers basic designs (Bernoulli, Poisson, simple random,
//! stratified, systematic on a lattice), conditional Poisson sampling,
//! balanced sampling with the cube method, spatially balanced designs (local
//! pivotal, GRTS, local cube), expansion estimators with their variances, and
//! diagnostics such as entropy and Voronoi spatial balance. Small designs can
//! be enumerated exactly to check everything else against.
//!
//! Replications use one seeded generator per replicate, so results are the
//! same with or without the `parallel` feature and for any thread count.

pub mod basic;
pub mod cps;
pub mod cube;
pub mod design;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod frame;
pub mod oracle;
pub mod replicate;
pub mod sample;
pub mod spatial;

pub use design::{Design, DesignConfig, DesignKind, PiSource};
pub use error::{Error, Result};
pub use frame::{AuxSelector, FrameBuilder, FrameSchema, PopulationFrame};
pub use replicate::{DesignRng, Execution, Sampler};
pub use sample::{InclusionProbabilities, Sample};
