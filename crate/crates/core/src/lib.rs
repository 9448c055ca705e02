//! Worst-case probabilities of wind-power ramping events.
//!
//! Given historical forecast-error pairs for two consecutive periods, the
//! crate bounds the probability of a ramp of at least a given size over every
//! distribution within a Wasserstein ball around the empirical one. The bound
//! comes from the dual of the worst-case problem, solved either by a
//! breakpoint scan ([`estimator::solve_worst_case`]) or as an explicit linear
//! program ([`lp`]).
//!
//! ```
//! use ramprisk::{estimate, Direction, MetricOrder, RampQuery, SampleSet, WassersteinConfig};
//!
//! let samples = SampleSet::from_tuples([(2.0, -1.0), (0.0, 0.0), (-3.0, 1.0)])?;
//! let query = RampQuery::new(Direction::Down, 1.0)?;
//! let config = WassersteinConfig::with_radius(MetricOrder::ONE, 0.1)?;
//! let result = estimate(&samples, &query, &config)?;
//! assert!((result.ramp_probability - 13.0 / 30.0).abs() < 1e-12);
//! # Ok::<(), ramprisk::Error>(())
//! ```

pub mod cli;
pub mod data;
pub mod domain;
pub mod error;
pub mod estimator;
pub mod lp;
pub mod report;
pub mod synth;

pub use domain::{
    threshold_to_error_space, Direction, ErrorPair, EstimateResult, MetricOrder, RadiusSource,
    RampQuery, SampleSet, SolverPath, WassersteinConfig,
};
pub use error::{Error, Result};
pub use estimator::{
    dual_norm_scale, dual_objective, erp, estimate, estimate_with, radius_from_confidence,
    ramp_margins, solve_worst_case, sweep, MarginVector, SweepCurve, WorstCase,
};
