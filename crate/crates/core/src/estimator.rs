//! Worst-case ramp probability over a Wasserstein ball around the empirical distribution.
//!
//! For a threshold `r` and a direction, each historical pair `i` gets a margin
//! `g_i = r - h_i` where `h_i` is its directed ramp. The dual program
//!
//! ```text
//! F = sup (1/I) sum_i beta_i - gamma * radius
//!     s.t. beta_i <= 1,  tau_i * c <= gamma,  beta_i <= tau_i * g_i,  gamma, tau >= 0
//! ```
//!
//! (with `c = ||(1, -1)||_q`) has, for a fixed `gamma`, optimal
//! `tau_i = gamma / c` and `beta_i = min(1, gamma * g_i / c)` when `g_i > 0`,
//! `beta_i = tau_i = 0` otherwise. What is left is the one-dimensional concave,
//! piecewise-linear function
//!
//! ```text
//! phi(gamma) = (1/I) sum_{g_i > 0} min(1, gamma * g_i / c) - gamma * radius
//! ```
//!
//! with breakpoints at `gamma = c / g_i`. [`solve_worst_case`] maximizes it by
//! scanning breakpoints in ascending order until the slope stops being positive.
//! The LP in [`crate::lp`] solves the same program without the reduction and
//! serves as the oracle for this scan.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{
    Direction, EstimateResult, MetricOrder, RampQuery, SampleSet, SolverPath, WassersteinConfig,
};
use crate::error::{ensure_finite, Error, Result};
use crate::lp;

/// Per-sample margins `g_i = threshold - h_i`, in sample order.
///
/// A positive margin means the sample is not a ramp at that threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginVector {
    margins: Vec<f64>,
}

impl MarginVector {
    pub fn new(margins: Vec<f64>) -> Result<Self> {
        if margins.is_empty() {
            return Err(Error::EmptyInput("margin vector has no entries"));
        }
        for &g in &margins {
            ensure_finite("margin", g)?;
        }
        Ok(Self { margins })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.margins
    }

    pub fn len(&self) -> usize {
        self.margins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.margins.is_empty()
    }

    /// Number of strictly positive margins (non-ramp samples).
    pub fn positive_count(&self) -> usize {
        self.margins.iter().filter(|&&g| g > 0.0).count()
    }
}

pub fn ramp_margins(
    samples: &SampleSet,
    direction: Direction,
    threshold: f64,
) -> Result<MarginVector> {
    samples.ensure_non_empty()?;
    ensure_finite("threshold", threshold)?;
    let margins = samples
        .pairs()
        .iter()
        .map(|pair| threshold - pair.directed_ramp(direction))
        .collect();
    MarginVector::new(margins)
}

/// `||(1, -1)||_q = 2^(1/q)` for the Hölder conjugate `q` of `p`.
pub fn dual_norm_scale(p: f64) -> Result<f64> {
    Ok(order_scale(MetricOrder::new(p)?))
}

pub(crate) fn order_scale(order: MetricOrder) -> f64 {
    2f64.powf(1.0 / order.dual_exponent())
}

/// Ambiguity radius `-ln(1 - alpha) / I` for confidence level `alpha`.
///
/// `alpha` is the confidence (0.9, 0.99, ...), so the radius grows with it and
/// shrinks as `1/I`.
pub fn radius_from_confidence(alpha: f64, sample_count: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!(
            "confidence level must lie in (0, 1), got {alpha}"
        )));
    }
    if sample_count < 1 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    Ok(-(-alpha).ln_1p() / sample_count as f64)
}

/// Value of the reduced dual objective `phi(gamma)`.
pub fn dual_objective(margins: &MarginVector, radius: f64, scale: f64, gamma: f64) -> f64 {
    let n = margins.len() as f64;
    let mass: f64 = margins
        .as_slice()
        .iter()
        .filter(|&&g| g > 0.0)
        .map(|&g| (gamma * g / scale).min(1.0))
        .sum();
    mass / n - gamma * radius
}

/// Optimum of the reduced dual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorstCase {
    /// Worst-case probability of the no-ramp region, clamped to `[0, 1]`.
    pub value: f64,
    /// Smallest maximizing dual multiplier.
    pub gamma_star: f64,
    /// Index (into the margin vector) of the sample whose breakpoint is `gamma_star`.
    pub active_breakpoint: Option<usize>,
}

pub fn solve_worst_case(margins: &MarginVector, radius: f64, scale: f64) -> Result<WorstCase> {
    if !(radius.is_finite() && radius >= 0.0) {
        return Err(Error::invalid(format!(
            "radius must be finite and nonnegative, got {radius}"
        )));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::invalid(format!(
            "dual norm scale must be finite and positive, got {scale}"
        )));
    }
    if margins.is_empty() {
        return Err(Error::EmptyInput("margin vector has no entries"));
    }

    let n = margins.len() as f64;
    let mut positive: Vec<(usize, f64)> = margins
        .as_slice()
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, g)| g > 0.0)
        .collect();
    // Descending margin = ascending breakpoint scale / g.
    positive.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let zero = WorstCase {
        value: 0.0,
        gamma_star: 0.0,
        active_breakpoint: None,
    };
    if positive.is_empty() {
        return Ok(zero);
    }

    // suffix[k] = sum of the margins still unsaturated once the k largest have hit beta = 1.
    let m = positive.len();
    let mut suffix = vec![0.0; m + 1];
    for k in (0..m).rev() {
        suffix[k] = suffix[k + 1] + positive[k].1;
    }

    // Slope on the k-th segment is suffix[k] / (I * scale) - radius.
    let budget = radius * n * scale;
    if suffix[0] <= budget {
        return Ok(zero);
    }
    let stop = (1..=m)
        .find(|&k| suffix[k] <= budget)
        .expect("the last segment has slope -radius <= 0");

    let (index, g) = positive[stop - 1];
    let gamma_star = scale / g;
    let value = (stop as f64 + suffix[stop] / g) / n - gamma_star * radius;
    Ok(WorstCase {
        value: value.clamp(0.0, 1.0),
        gamma_star,
        active_breakpoint: Some(index),
    })
}

/// Fraction of samples whose directed ramp reaches the threshold (`>=` counts as a ramp).
pub fn erp(samples: &SampleSet, query: &RampQuery) -> Result<f64> {
    samples.ensure_non_empty()?;
    let direction = query.direction();
    let threshold = query.threshold();
    let ramps = samples
        .pairs()
        .iter()
        .filter(|pair| pair.directed_ramp(direction) >= threshold)
        .count();
    Ok(ramps as f64 / samples.len() as f64)
}

/// Worst-case ramp probability using the closed-form breakpoint scan.
pub fn estimate(
    samples: &SampleSet,
    query: &RampQuery,
    config: &WassersteinConfig,
) -> Result<EstimateResult> {
    estimate_with(samples, query, config, SolverPath::ClosedForm)
}

/// Worst-case ramp probability using the chosen solver path.
///
/// The LP path reports the multiplier the simplex lands on, which need not be
/// the smallest maximizer, and no breakpoint index.
pub fn estimate_with(
    samples: &SampleSet,
    query: &RampQuery,
    config: &WassersteinConfig,
    solver: SolverPath,
) -> Result<EstimateResult> {
    let margins = ramp_margins(samples, query.direction(), query.threshold())?;
    let scale = order_scale(config.order());
    let radius = config.radius();

    let worst = match solver {
        SolverPath::ClosedForm => solve_worst_case(&margins, radius, scale)?,
        SolverPath::LpOracle => {
            let program = lp::build_dual_lp(&margins, radius, scale)?;
            let solution = lp::solve(&program)?;
            if solution.status != lp::LpStatus::Optimal {
                return Err(Error::Solver(format!(
                    "dual LP finished with status {:?}",
                    solution.status
                )));
            }
            WorstCase {
                value: solution.objective_value.clamp(0.0, 1.0),
                gamma_star: solution.values[lp::gamma_index(margins.len())],
                active_breakpoint: None,
            }
        }
    };

    Ok(EstimateResult {
        ramp_probability: 1.0 - worst.value,
        inner_value: worst.value,
        gamma_star: worst.gamma_star,
        active_breakpoint: worst.active_breakpoint,
        solver,
        radius_used: radius,
    })
}

/// Worst-case ramp probabilities over a threshold grid, with a finite-difference
/// quasi-density.
///
/// Each grid point has its own worst-case distribution, so the curve is an
/// envelope rather than the survival function of any single distribution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCurve {
    pub direction: Direction,
    pub thresholds: Vec<f64>,
    pub ramp_probabilities: Vec<f64>,
    pub density: Vec<f64>,
}

impl SweepCurve {
    pub const ENVELOPE_NOTE: &'static str = "each threshold has its own worst-case distribution; \
         the curve is an envelope, not the survival function of one distribution";

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }
}

pub fn sweep(
    samples: &SampleSet,
    direction: Direction,
    thresholds: &[f64],
    config: &WassersteinConfig,
) -> Result<SweepCurve> {
    samples.ensure_non_empty()?;
    if thresholds.len() < 2 {
        return Err(Error::invalid("sweep grid needs at least two thresholds"));
    }
    for &t in thresholds {
        ensure_finite("sweep threshold", t)?;
    }
    if thresholds
        .windows(2)
        .any(|w| w[0].partial_cmp(&w[1]) != Some(Ordering::Less))
    {
        return Err(Error::invalid("sweep grid must be strictly ascending"));
    }

    let ramp_probabilities = thresholds
        .par_iter()
        .map(|&t| {
            let query = RampQuery::new(direction, t)?;
            estimate(samples, &query, config).map(|r| r.ramp_probability)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut density: Vec<f64> = thresholds
        .windows(2)
        .zip(ramp_probabilities.windows(2))
        .map(|(t, p)| (p[0] - p[1]) / (t[1] - t[0]))
        .collect();
    density.push(*density.last().expect("grid has at least two points"));

    Ok(SweepCurve {
        direction,
        thresholds: thresholds.to_vec(),
        ramp_probabilities,
        density,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mv(g: &[f64]) -> MarginVector {
        MarginVector::new(g.to_vec()).unwrap()
    }

    fn worked_samples() -> SampleSet {
        SampleSet::from_tuples([(2.0, -1.0), (0.0, 0.0), (-3.0, 1.0)]).unwrap()
    }

    /// Brute-force maximum of the dual objective on a uniform gamma grid,
    /// written out from the objective definition.
    fn grid_oracle(margins: &[f64], radius: f64, scale: f64, hi: f64, step: f64) -> (f64, f64) {
        let n = margins.len() as f64;
        let steps = (hi / step).round() as usize;
        let mut best = (f64::NEG_INFINITY, 0.0);
        for k in 0..=steps {
            let gamma = k as f64 * step;
            let mut total = 0.0;
            for &g in margins {
                if g > 0.0 {
                    total += f64::min(1.0, gamma * g / scale);
                }
            }
            let value = total / n - gamma * radius;
            if value > best.0 + 1e-15 {
                best = (value, gamma);
            }
        }
        best
    }

    #[test]
    fn margins_examples() {
        let one = SampleSet::from_tuples([(1.0, 0.0)]).unwrap();
        assert_eq!(
            ramp_margins(&one, Direction::Down, 3.0).unwrap().as_slice(),
            &[2.0]
        );
        assert_eq!(
            ramp_margins(&one, Direction::Up, 3.0).unwrap().as_slice(),
            &[4.0]
        );
        assert_eq!(
            ramp_margins(&worked_samples(), Direction::Down, 1.0)
                .unwrap()
                .as_slice(),
            &[-2.0, 1.0, 5.0]
        );
    }

    #[test]
    fn margins_reject_empty() {
        let err = ramp_margins(&SampleSet::default(), Direction::Down, 1.0).unwrap_err();
        assert!(matches!(err, Error::EmptyInput(_)));
    }

    #[test]
    fn dual_norm_scale_examples() {
        assert_eq!(dual_norm_scale(1.0).unwrap(), 1.0);
        assert_eq!(dual_norm_scale(f64::INFINITY).unwrap(), 2.0);
        assert!((dual_norm_scale(2.0).unwrap() - std::f64::consts::SQRT_2).abs() < 1e-15);
        assert!(dual_norm_scale(0.99).is_err());
    }

    #[test]
    fn radius_examples() {
        let r90 = radius_from_confidence(0.9, 200).unwrap();
        assert!((r90 - 0.011_512_925_464_970_23).abs() < 1e-15);
        let r99 = radius_from_confidence(0.99, 200).unwrap();
        let r999 = radius_from_confidence(0.999, 200).unwrap();
        assert!((r99 / r90 - 2.0).abs() < 1e-12);
        assert!((r999 / r90 - 3.0).abs() < 1e-12);
        assert!(radius_from_confidence(1e-300, 7).unwrap() < 1e-299);
    }

    #[test]
    fn radius_rejects_bad_inputs() {
        for alpha in [0.0, 1.0, -0.5, 1.5, f64::NAN] {
            assert!(radius_from_confidence(alpha, 10).is_err());
        }
        assert!(radius_from_confidence(0.9, 0).is_err());
    }

    #[test]
    fn all_ramps_gives_zero() {
        let w = solve_worst_case(&mv(&[-1.0, -5.0]), 0.1, 1.0).unwrap();
        assert_eq!(w.value, 0.0);
        assert_eq!(w.gamma_star, 0.0);
        assert_eq!(w.active_breakpoint, None);
    }

    #[test]
    fn zero_radius_gives_positive_fraction() {
        let w = solve_worst_case(&mv(&[2.0, 1.0, -1.0]), 0.0, 1.0).unwrap();
        assert!((w.value - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn worked_instance_matches_grid_oracle() {
        let margins = [2.0, 1.0, -1.0];
        let (oracle_value, oracle_gamma) = grid_oracle(&margins, 0.1, 1.0, 10.0, 1e-5);
        assert!((oracle_value - 17.0 / 30.0).abs() < 1e-9);
        assert!((oracle_gamma - 1.0).abs() < 1e-4);

        let w = solve_worst_case(&mv(&margins), 0.1, 1.0).unwrap();
        assert!((w.value - 17.0 / 30.0).abs() < 1e-12);
        assert_eq!(w.gamma_star, 1.0);
        // Breakpoint gamma = 1 belongs to the margin 1.0 at index 1.
        assert_eq!(w.active_breakpoint, Some(1));
    }

    #[test]
    fn solve_rejects_bad_parameters() {
        let m = mv(&[1.0]);
        assert!(solve_worst_case(&m, -0.1, 1.0).is_err());
        assert!(solve_worst_case(&m, f64::NAN, 1.0).is_err());
        assert!(solve_worst_case(&m, 0.1, 0.0).is_err());
        assert!(solve_worst_case(&m, 0.1, -2.0).is_err());
    }

    #[test]
    fn flat_top_reports_smallest_gamma() {
        // Slope on the first segment is exactly zero: every gamma in [0, 1] is optimal.
        let w = solve_worst_case(&mv(&[1.0]), 1.0, 1.0).unwrap();
        assert_eq!(w.gamma_star, 0.0);
        assert_eq!(w.value, 0.0);
        // Single sample: slope 1 - 0.25 on [0, 1], then -0.25.
        let w = solve_worst_case(&mv(&[1.0]), 0.25, 1.0).unwrap();
        assert_eq!(w.gamma_star, 1.0);
        assert!((w.value - 0.75).abs() < 1e-15);
    }

    #[test]
    fn zero_margin_is_a_ramp() {
        let w = solve_worst_case(&mv(&[0.0, 0.0]), 0.0, 1.0).unwrap();
        assert_eq!(w.value, 0.0);
    }

    #[test]
    fn estimate_examples() {
        let zeros = SampleSet::from_tuples(vec![(0.0, 0.0); 10]).unwrap();
        let q = RampQuery::new(Direction::Down, 100.0).unwrap();
        let cfg = WassersteinConfig::with_radius(MetricOrder::ONE, 0.0).unwrap();
        assert_eq!(estimate(&zeros, &q, &cfg).unwrap().ramp_probability, 0.0);

        let q = RampQuery::new(Direction::Down, 1.0).unwrap();
        let cfg = WassersteinConfig::with_radius(MetricOrder::ONE, 0.1).unwrap();
        for path in [SolverPath::ClosedForm, SolverPath::LpOracle] {
            let r = estimate_with(&worked_samples(), &q, &cfg, path).unwrap();
            assert!((r.ramp_probability - 13.0 / 30.0).abs() < 1e-10, "{path:?}");
            assert_eq!(r.ramp_probability, 1.0 - r.inner_value);
            assert_eq!(r.solver, path);
            assert_eq!(r.radius_used, 0.1);
        }
    }

    #[test]
    fn estimate_uses_confidence_radius() {
        let samples = worked_samples();
        let cfg = WassersteinConfig::from_confidence(MetricOrder::ONE, 0.9, samples.len()).unwrap();
        let q = RampQuery::new(Direction::Down, 1.0).unwrap();
        let r = estimate(&samples, &q, &cfg).unwrap();
        assert_eq!(r.radius_used, radius_from_confidence(0.9, 3).unwrap());
    }

    #[test]
    fn erp_examples() {
        let q = RampQuery::new(Direction::Down, 1.0).unwrap();
        assert!((erp(&worked_samples(), &q).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let q = RampQuery::new(Direction::Up, -1e9).unwrap();
        assert_eq!(erp(&worked_samples(), &q).unwrap(), 1.0);
        let zeros = SampleSet::from_tuples(vec![(0.0, 0.0); 5]).unwrap();
        let q = RampQuery::new(Direction::Down, 0.0).unwrap();
        assert_eq!(erp(&zeros, &q).unwrap(), 1.0);
        assert!(matches!(
            erp(&SampleSet::default(), &q),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn sweep_examples() {
        let cfg = WassersteinConfig::with_radius(MetricOrder::ONE, 0.0).unwrap();
        let zeros = SampleSet::from_tuples(vec![(0.0, 0.0); 4]).unwrap();
        let c = sweep(&zeros, Direction::Down, &[1.0, 2.0], &cfg).unwrap();
        assert_eq!(c.ramp_probabilities, vec![0.0, 0.0]);
        assert_eq!(c.density, vec![0.0, 0.0]);

        let c = sweep(&worked_samples(), Direction::Down, &[1.0, 4.0], &cfg).unwrap();
        assert!((c.ramp_probabilities[0] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(c.ramp_probabilities[1], 0.0);
        assert!((c.density[0] - 1.0 / 9.0).abs() < 1e-15);
        assert_eq!(c.density[0], c.density[1]);
    }

    #[test]
    fn sweep_rejects_bad_grids() {
        let cfg = WassersteinConfig::with_radius(MetricOrder::ONE, 0.0).unwrap();
        let s = worked_samples();
        assert!(sweep(&s, Direction::Down, &[1.0], &cfg).is_err());
        assert!(sweep(&s, Direction::Down, &[1.0, 1.0], &cfg).is_err());
        assert!(sweep(&s, Direction::Down, &[2.0, 1.0], &cfg).is_err());
        assert!(sweep(&s, Direction::Down, &[1.0, f64::NAN], &cfg).is_err());
    }

    #[test]
    fn sweep_matches_sequential_estimates() {
        let s = SampleSet::from_tuples((0..40).map(|i| {
            let x = i as f64;
            ((x * 7.3).sin() * 50.0, (x * 3.1).cos() * 40.0)
        }))
        .unwrap();
        let cfg = WassersteinConfig::with_radius(MetricOrder::TWO, 0.3).unwrap();
        let grid: Vec<f64> = (0..60).map(|k| -60.0 + 2.0 * k as f64).collect();
        let curve = sweep(&s, Direction::Up, &grid, &cfg).unwrap();
        for (t, p) in grid.iter().zip(&curve.ramp_probabilities) {
            let q = RampQuery::new(Direction::Up, *t).unwrap();
            assert_eq!(*p, estimate(&s, &q, &cfg).unwrap().ramp_probability);
        }
    }
}
