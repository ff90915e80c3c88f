//! Numerical toolkit for linear and semilinear scalar waves on
//! Schwarzschild and slowly rotating Kerr backgrounds.

pub mod analysis;
pub mod checks;
pub mod config;
pub mod error;
pub mod evolution;
pub mod geometry;
pub mod io;
pub mod kernel_oracle;
pub mod multipliers;
pub mod norms;
pub mod operators;
pub mod pipeline;
pub mod quadrature;
pub mod ramps;
pub mod stencil;

pub use error::{Error, Result};
pub use geometry::{
    bl_metric, build_radial_maps, horizon_radii, kerr_star_metric, ttilde_star_metric, Chart,
    HorizonData, KerrParams, MetricPoint, RadialMaps,
};
pub use operators::{Nonlinearity, OperatorForm, WaveOpCoeffs};
