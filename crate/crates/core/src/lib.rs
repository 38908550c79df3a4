//! Numerical laboratory for the second-Ricci flow `∂ₜg = −S` of Hermitian
//! metrics on flat complex tori and bounded domains.

pub mod analysis;
pub mod chern;
pub mod error;
pub mod flow;
pub mod grid;
pub mod linalg;
pub mod metric;
pub mod models;
pub mod snapshot;
pub mod verify;

pub use error::{HrfError, Result};
pub use grid::{Boundary, Dir, GridSpec, Slot, TensorField, C64};
pub use metric::{sup_norm, MetricField, PointMetric};
pub use models::MetricModel;
