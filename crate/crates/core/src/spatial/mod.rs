//! Spatially balanced designs: samples that are well spread over a space.

mod distance;
mod grts;
mod local_cube;
mod neighbors;
mod pivotal;

pub use distance::{mahalanobis_context, DistanceContext, Metric};
pub use grts::{grts_order, grts_sample, systematic_along, MAX_DEPTH as GRTS_MAX_DEPTH};
pub use local_cube::local_cube_sample;
pub use neighbors::LINEAR_SCAN_MAX_UNITS;
pub use pivotal::{local_pivotal_sample, pivotal_update, sequential_pivotal_sample};
