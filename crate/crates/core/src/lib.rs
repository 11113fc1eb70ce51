//! Numerical laboratory for semiclassical Weyl remainders: recurrence sets,
//! dynamical invariants, exact eigenvalue counts and remainder planning on
//! flat tori, a cat-map suspension, the round 3-sphere and surfaces of
//! revolution.

// Domain checks are written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops over small matrices follow the formulas more closely.
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod invariants;
pub mod lattice;
pub mod models;
pub mod ode;
pub mod quad;
pub mod recurrence;
pub mod scalar;
pub mod spectra;
pub mod surfrev;
pub mod weyl;

pub use error::{LabError, Result};
pub use scalar::Real;

/// Double-precision remainder row.
pub type WeylRow = weyl::WeylSeriesRow<f64>;
/// Double-precision parameter plan.
pub type Plan = weyl::PlanResult<f64>;
/// Double-precision bound report.
pub type BoundReport = weyl::BoundReport<f64>;

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
