//! Numeric primitives shared by the estimators.

pub mod bootstrap;
pub mod normal;
pub mod wls;

pub use bootstrap::{
    bootstrap_interval, bootstrap_interval_with_support, percentile_interval, BootstrapConfig,
    IntervalEstimate, Seed, StreamRng,
};
pub use normal::{std_normal_cdf, std_normal_density, std_normal_quantile};
pub use wls::{weighted_linear_fit, LinearFit, WeightedPoint};
