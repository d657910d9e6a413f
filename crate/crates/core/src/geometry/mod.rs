//! Landscape certification: region classification, the regularity,
//! negative-curvature and large-gradient certificates, critical-point
//! construction, strict-saddle audits and region sampling.

mod certificates;
mod critical;
mod hessian;
mod regions;
mod sampling;

pub use certificates::*;
pub use critical::*;
pub use hessian::*;
pub use regions::*;
pub use sampling::*;
