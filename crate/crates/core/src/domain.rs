//! Core value types shared by the estimator, the LP oracle and the data pipeline.
//!
//! Sign convention: a forecast error is `observed - forecast`. With that choice
//! a power-space ramp `w1 - w2 >= R` is equivalent to the error-space event
//! `dw1 - dw2 >= r` with `r = R - w1e + w2e` (see [`threshold_to_error_space`]).
//!
//! Every constructor rejects non-finite reals, and nothing here is mutable
//! after construction.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{ensure_finite, Error, Result};
use crate::estimator::radius_from_confidence;

/// One historical joint forecast-error observation for two consecutive periods, in MW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorPair {
    dw1: f64,
    dw2: f64,
}

impl ErrorPair {
    pub fn new(dw1: f64, dw2: f64) -> Result<Self> {
        Ok(Self {
            dw1: ensure_finite("dw1", dw1)?,
            dw2: ensure_finite("dw2", dw2)?,
        })
    }

    pub fn dw1(&self) -> f64 {
        self.dw1
    }

    pub fn dw2(&self) -> f64 {
        self.dw2
    }

    /// Historical ramp oriented by `direction`: `dw1 - dw2` for down, `dw2 - dw1` for up.
    pub fn directed_ramp(&self, direction: Direction) -> f64 {
        match direction {
            Direction::Down => self.dw1 - self.dw2,
            Direction::Up => self.dw2 - self.dw1,
        }
    }

    pub fn negated(&self) -> Self {
        Self {
            dw1: -self.dw1,
            dw2: -self.dw2,
        }
    }
}

/// Ordered historical error pairs; the support of the empirical distribution,
/// each pair carrying mass `1/I`.
///
/// Order is kept exactly as ingested so that prefixes ("the first N pairs")
/// are meaningful. An empty set is representable (pair extraction can legitimately
/// find nothing) but every estimation routine rejects it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleSet {
    pairs: Vec<ErrorPair>,
    provenance: Option<String>,
}

impl SampleSet {
    pub fn new(pairs: Vec<ErrorPair>) -> Self {
        Self {
            pairs,
            provenance: None,
        }
    }

    /// Builds a sample set from raw `(dw1, dw2)` tuples.
    pub fn from_tuples<I>(tuples: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let pairs = tuples
            .into_iter()
            .map(|(a, b)| ErrorPair::new(a, b))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(pairs))
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = Some(provenance.into());
        self
    }

    pub fn pairs(&self) -> &[ErrorPair] {
        &self.pairs
    }

    pub fn provenance(&self) -> Option<&str> {
        self.provenance.as_deref()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// The first `count` pairs, in order. `count` is clamped to the set size.
    pub fn prefix(&self, count: usize) -> SampleSet {
        let count = count.min(self.pairs.len());
        SampleSet {
            pairs: self.pairs[..count].to_vec(),
            provenance: self
                .provenance
                .as_ref()
                .map(|p| format!("{p} [first {count}]")),
        }
    }

    pub(crate) fn ensure_non_empty(&self) -> Result<()> {
        if self.pairs.is_empty() {
            Err(Error::EmptyInput("sample set has no error pairs"))
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Down,
    Up,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Down => "down",
            Direction::Up => "up",
        }
    }

    pub fn opposite(&self) -> Self {
        match self {
            Direction::Down => Direction::Up,
            Direction::Up => Direction::Down,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "down" => Ok(Direction::Down),
            "up" => Ok(Direction::Up),
            other => Err(Error::invalid(format!("unknown direction `{other}`"))),
        }
    }
}

/// Converts a power-space ramp threshold into the error-space threshold the
/// estimator works with.
///
/// Down: `r_D = R - w1e + w2e`. Up: `r_U = R - w2e + w1e`.
pub fn threshold_to_error_space(
    threshold: f64,
    w1e: f64,
    w2e: f64,
    direction: Direction,
) -> Result<f64> {
    ensure_finite("ramp threshold", threshold)?;
    ensure_finite("period-1 point forecast", w1e)?;
    ensure_finite("period-2 point forecast", w2e)?;
    Ok(match direction {
        Direction::Down => threshold - w1e + w2e,
        Direction::Up => threshold - w2e + w1e,
    })
}

/// Power-space description a [`RampQuery`] threshold was derived from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerSpaceOrigin {
    pub threshold: f64,
    pub w1e: f64,
    pub w2e: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RampQuery {
    direction: Direction,
    threshold: f64,
    origin: Option<PowerSpaceOrigin>,
}

impl RampQuery {
    /// A query whose threshold is already expressed in forecast-error space.
    pub fn new(direction: Direction, threshold: f64) -> Result<Self> {
        Ok(Self {
            direction,
            threshold: ensure_finite("error-space threshold", threshold)?,
            origin: None,
        })
    }

    /// A query from a power-space threshold and the two point forecasts.
    pub fn from_power_space(
        direction: Direction,
        threshold: f64,
        w1e: f64,
        w2e: f64,
    ) -> Result<Self> {
        let error_threshold = threshold_to_error_space(threshold, w1e, w2e, direction)?;
        Ok(Self {
            direction,
            threshold: error_threshold,
            origin: Some(PowerSpaceOrigin {
                threshold,
                w1e,
                w2e,
            }),
        })
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn origin(&self) -> Option<PowerSpaceOrigin> {
        self.origin
    }
}

/// Order `p >= 1` of the Wasserstein metric; `f64::INFINITY` is allowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricOrder(f64);

impl MetricOrder {
    pub const ONE: MetricOrder = MetricOrder(1.0);
    pub const TWO: MetricOrder = MetricOrder(2.0);
    pub const INFINITY: MetricOrder = MetricOrder(f64::INFINITY);

    pub fn new(p: f64) -> Result<Self> {
        if p.is_nan() || p < 1.0 {
            return Err(Error::invalid(format!(
                "metric order p must be >= 1, got {p}"
            )));
        }
        Ok(Self(p))
    }

    pub fn value(&self) -> f64 {
        self.0
    }

    /// Hölder conjugate `q` with `1/p + 1/q = 1` (p = 1 gives q = inf, p = inf gives q = 1).
    pub fn dual_exponent(&self) -> f64 {
        let p = self.0;
        if p == 1.0 {
            f64::INFINITY
        } else if p.is_infinite() {
            1.0
        } else {
            p / (p - 1.0)
        }
    }
}

impl fmt::Display for MetricOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl FromStr for MetricOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
            return Ok(MetricOrder::INFINITY);
        }
        let p: f64 = s
            .parse()
            .map_err(|_| Error::invalid(format!("cannot parse metric order `{s}`")))?;
        MetricOrder::new(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RadiusSource {
    Explicit,
    FromConfidence { alpha: f64, sample_count: usize },
}

/// Ambiguity-set parameters: metric order and ball radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WassersteinConfig {
    order: MetricOrder,
    radius: f64,
    source: RadiusSource,
}

impl WassersteinConfig {
    pub fn with_radius(order: MetricOrder, radius: f64) -> Result<Self> {
        if radius.is_nan() || radius < 0.0 || radius.is_infinite() {
            return Err(Error::invalid(format!(
                "radius must be finite and nonnegative, got {radius}"
            )));
        }
        Ok(Self {
            order,
            radius,
            source: RadiusSource::Explicit,
        })
    }

    /// Radius chosen from a confidence level and sample count via [`radius_from_confidence`].
    pub fn from_confidence(order: MetricOrder, alpha: f64, sample_count: usize) -> Result<Self> {
        let radius = radius_from_confidence(alpha, sample_count)?;
        Ok(Self {
            order,
            radius,
            source: RadiusSource::FromConfidence {
                alpha,
                sample_count,
            },
        })
    }

    pub fn order(&self) -> MetricOrder {
        self.order
    }

    pub fn dual_exponent(&self) -> f64 {
        self.order.dual_exponent()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn source(&self) -> RadiusSource {
        self.source
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverPath {
    ClosedForm,
    LpOracle,
}

/// Outcome of one worst-case estimate.
///
/// `inner_value` is the worst-case (infimum) probability of the no-ramp
/// region; `ramp_probability` is its complement, the supremum of the ramp
/// probability over the ambiguity set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateResult {
    pub ramp_probability: f64,
    pub inner_value: f64,
    pub gamma_star: f64,
    /// Sample index whose breakpoint the optimal dual multiplier sits on, if any.
    pub active_breakpoint: Option<usize>,
    pub solver: SolverPath,
    pub radius_used: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_conversion_examples() {
        assert_eq!(
            threshold_to_error_space(300.0, 1065.0, 1065.0, Direction::Down).unwrap(),
            300.0
        );
        assert_eq!(
            threshold_to_error_space(0.0, 0.0, 0.0, Direction::Down).unwrap(),
            0.0
        );
        assert_eq!(
            threshold_to_error_space(200.0, 1062.0, 1068.0, Direction::Up).unwrap(),
            194.0
        );
    }

    #[test]
    fn threshold_conversion_rejects_non_finite() {
        for bad in [f64::NAN, f64::INFINITY, f64::NEG_INFINITY] {
            assert!(threshold_to_error_space(bad, 0.0, 0.0, Direction::Down).is_err());
            assert!(threshold_to_error_space(0.0, bad, 0.0, Direction::Up).is_err());
            assert!(threshold_to_error_space(0.0, 0.0, bad, Direction::Down).is_err());
        }
    }

    #[test]
    fn constructors_reject_non_finite() {
        assert!(ErrorPair::new(f64::NAN, 0.0).is_err());
        assert!(ErrorPair::new(0.0, f64::INFINITY).is_err());
        assert!(RampQuery::new(Direction::Up, f64::NAN).is_err());
        assert!(WassersteinConfig::with_radius(MetricOrder::ONE, -0.1).is_err());
        assert!(WassersteinConfig::with_radius(MetricOrder::ONE, f64::NAN).is_err());
        assert!(MetricOrder::new(0.5).is_err());
        assert!(MetricOrder::new(f64::NAN).is_err());
    }

    #[test]
    fn dual_exponent_conjugacy() {
        assert_eq!(MetricOrder::ONE.dual_exponent(), f64::INFINITY);
        assert_eq!(MetricOrder::INFINITY.dual_exponent(), 1.0);
        assert_eq!(MetricOrder::TWO.dual_exponent(), 2.0);
        let p = MetricOrder::new(3.0).unwrap();
        let q = p.dual_exponent();
        assert!((1.0 / 3.0 + 1.0 / q - 1.0).abs() < 1e-15);
    }

    #[test]
    fn metric_order_parsing() {
        assert_eq!("1".parse::<MetricOrder>().unwrap(), MetricOrder::ONE);
        assert_eq!("inf".parse::<MetricOrder>().unwrap(), MetricOrder::INFINITY);
        assert!("0.3".parse::<MetricOrder>().is_err());
        assert!("abc".parse::<MetricOrder>().is_err());
    }

    #[test]
    fn power_space_query_records_origin() {
        let q = RampQuery::from_power_space(Direction::Down, 300.0, 1062.0, 1068.0).unwrap();
        assert_eq!(q.threshold(), 306.0);
        assert_eq!(q.origin().unwrap().threshold, 300.0);
    }

    #[test]
    fn prefix_keeps_order() {
        let s = SampleSet::from_tuples([(1.0, 0.0), (2.0, 0.0), (3.0, 0.0)]).unwrap();
        let p = s.prefix(2);
        assert_eq!(p.len(), 2);
        assert_eq!(p.pairs()[1].dw1(), 2.0);
    }

    proptest::proptest! {
        #[test]
        fn down_equals_up_with_swapped_forecasts(
            r in -1e4f64..1e4, a in -1e4f64..1e4, b in -1e4f64..1e4
        ) {
            let down = threshold_to_error_space(r, a, b, Direction::Down).unwrap();
            let up = threshold_to_error_space(r, b, a, Direction::Up).unwrap();
            proptest::prop_assert_eq!(down, up);
        }
    }
}
