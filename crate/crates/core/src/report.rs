//! Batch runs over (prefix, direction, threshold, radius) grids and their
//! CSV/JSON renderings.
//!
//! Floats are written with Rust's shortest round-trip formatting in CSV and
//! `serde_json`'s (also shortest round-trip) in JSON, so both formats carry the
//! same values and reruns are byte-identical.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{Direction, MetricOrder, RampQuery, SampleSet, SolverPath, WassersteinConfig};
use crate::error::{Error, Result};
use crate::estimator::{erp, estimate_with, SweepCurve};

/// How the ambiguity radius is chosen for each run.
#[derive(Debug, Clone, PartialEq)]
pub enum RadiusPlan {
    /// One fixed radius for every prefix.
    Radius(f64),
    /// One column per confidence level, radius recomputed per prefix size.
    Confidences(Vec<f64>),
}

impl RadiusPlan {
    pub fn len(&self) -> usize {
        match self {
            RadiusPlan::Radius(_) => 1,
            RadiusPlan::Confidences(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(confidence, config)` per column for a training set of `sample_count` pairs.
    pub fn configs(
        &self,
        order: MetricOrder,
        sample_count: usize,
    ) -> Result<Vec<(Option<f64>, WassersteinConfig)>> {
        match self {
            RadiusPlan::Radius(r) => Ok(vec![(None, WassersteinConfig::with_radius(order, *r)?)]),
            RadiusPlan::Confidences(levels) => levels
                .iter()
                .map(|&a| {
                    Ok((
                        Some(a),
                        WassersteinConfig::from_confidence(order, a, sample_count)?,
                    ))
                })
                .collect(),
        }
    }

    fn column_names(&self) -> Vec<String> {
        match self {
            RadiusPlan::Radius(r) => vec![format!("radius_{r}")],
            RadiusPlan::Confidences(levels) => levels.iter().map(|a| format!("conf_{a}")).collect(),
        }
    }
}

/// Thresholds either already in error space, or in power space with the two
/// point forecasts they refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdPlan {
    pub thresholds: Vec<f64>,
    pub forecasts: Option<(f64, f64)>,
}

impl ThresholdPlan {
    pub fn error_space(thresholds: Vec<f64>) -> Self {
        Self {
            thresholds,
            forecasts: None,
        }
    }

    pub fn query(&self, direction: Direction, threshold: f64) -> Result<RampQuery> {
        match self.forecasts {
            None => RampQuery::new(direction, threshold),
            Some((w1e, w2e)) => RampQuery::from_power_space(direction, threshold, w1e, w2e),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunPlan {
    pub order: MetricOrder,
    pub radius: RadiusPlan,
    pub directions: Vec<Direction>,
    pub thresholds: ThresholdPlan,
    /// Training prefix sizes; `None` means the whole set.
    pub prefixes: Option<Vec<usize>>,
    pub solver: SolverPath,
}

impl RunPlan {
    fn prefix_sizes(&self, samples: &SampleSet) -> Result<Vec<usize>> {
        samples.ensure_non_empty()?;
        let sizes = self.prefixes.clone().unwrap_or_else(|| vec![samples.len()]);
        for &n in &sizes {
            if n < 1 || n > samples.len() {
                return Err(Error::invalid(format!(
                    "prefix {n} outside 1..={} available pairs",
                    samples.len()
                )));
            }
        }
        Ok(sizes)
    }

    fn cells(&self, samples: &SampleSet) -> Result<Vec<(usize, Direction, f64)>> {
        let sizes = self.prefix_sizes(samples)?;
        if self.radius.is_empty() {
            return Err(Error::invalid("at least one confidence level is required"));
        }
        let mut cells = Vec::new();
        for &n in &sizes {
            for &d in &self.directions {
                for &t in &self.thresholds.thresholds {
                    cells.push((n, d, t));
                }
            }
        }
        Ok(cells)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRow {
    pub prefix: usize,
    pub direction: Direction,
    pub threshold_mw: f64,
    pub error_threshold_mw: f64,
    pub confidence: Option<f64>,
    pub radius: f64,
    pub erp: f64,
    pub ramp_probability: f64,
    pub inner_value: f64,
    pub gamma_star: f64,
    pub solver: SolverPath,
    pub solve_time_s: f64,
}

pub const ESTIMATE_HEADER: &str = "prefix,direction,threshold_mw,error_threshold_mw,confidence,\
radius,erp,ramp_probability,inner_value,gamma_star,solver,solve_time_s";

pub fn estimate_rows(samples: &SampleSet, plan: &RunPlan) -> Result<Vec<EstimateRow>> {
    let cells = plan.cells(samples)?;
    let nested = cells
        .par_iter()
        .map(|&(n, direction, threshold)| {
            let training = samples.prefix(n);
            let query = plan.thresholds.query(direction, threshold)?;
            let empirical = erp(&training, &query)?;
            plan.radius
                .configs(plan.order, n)?
                .into_iter()
                .map(|(confidence, config)| {
                    let started = Instant::now();
                    let result = estimate_with(&training, &query, &config, plan.solver)?;
                    let solve_time_s = started.elapsed().as_secs_f64();
                    Ok(EstimateRow {
                        prefix: n,
                        direction,
                        threshold_mw: threshold,
                        error_threshold_mw: query.threshold(),
                        confidence,
                        radius: result.radius_used,
                        erp: empirical,
                        ramp_probability: result.ramp_probability,
                        inner_value: result.inner_value,
                        gamma_star: result.gamma_star,
                        solver: result.solver,
                        solve_time_s,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(nested.into_iter().flatten().collect())
}

fn solver_name(solver: SolverPath) -> &'static str {
    match solver {
        SolverPath::ClosedForm => "closed_form",
        SolverPath::LpOracle => "lp_oracle",
    }
}

pub fn write_estimate_csv<W: Write>(mut out: W, rows: &[EstimateRow]) -> std::io::Result<()> {
    writeln!(out, "{ESTIMATE_HEADER}")?;
    for r in rows {
        let confidence = r.confidence.map(|c| c.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.prefix,
            r.direction,
            r.threshold_mw,
            r.error_threshold_mw,
            confidence,
            r.radius,
            r.erp,
            r.ramp_probability,
            r.inner_value,
            r.gamma_star,
            solver_name(r.solver),
            r.solve_time_s
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableCell {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    pub ramp_probability: f64,
}

/// One line of a ramp-probability table: observed rate over the full set,
/// empirical rate over the prefix, and one robust estimate per radius column.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub prefix: usize,
    pub direction: Direction,
    pub threshold_mw: f64,
    pub orp: f64,
    pub erp: f64,
    pub estimates: Vec<TableCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    #[serde(skip)]
    columns: Vec<String>,
    pub rows: Vec<TableRow>,
}

pub fn table(samples: &SampleSet, plan: &RunPlan) -> Result<Table> {
    let cells = plan.cells(samples)?;
    let rows = cells
        .par_iter()
        .map(|&(n, direction, threshold)| {
            let training = samples.prefix(n);
            let query = plan.thresholds.query(direction, threshold)?;
            let estimates = plan
                .radius
                .configs(plan.order, n)?
                .into_iter()
                .map(|(confidence, config)| {
                    let result = estimate_with(&training, &query, &config, plan.solver)?;
                    Ok(TableCell {
                        confidence,
                        radius: match plan.radius {
                            RadiusPlan::Radius(r) => Some(r),
                            RadiusPlan::Confidences(_) => None,
                        },
                        ramp_probability: result.ramp_probability,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(TableRow {
                prefix: n,
                direction,
                threshold_mw: threshold,
                orp: erp(samples, &query)?,
                erp: erp(&training, &query)?,
                estimates,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Table {
        columns: plan.radius.column_names(),
        rows,
    })
}

impl Table {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "prefix,direction,threshold_mw,orp,erp")?;
        for c in &self.columns {
            write!(out, ",{c}")?;
        }
        writeln!(out)?;
        for r in &self.rows {
            write!(
                out,
                "{},{},{},{},{}",
                r.prefix, r.direction, r.threshold_mw, r.orp, r.erp
            )?;
            for e in &r.estimates {
                write!(out, ",{}", e.ramp_probability)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub threshold_mw: f64,
    pub ramp_probability: f64,
    pub quasi_density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub direction: Direction,
    pub radius: f64,
    pub note: &'static str,
    pub points: Vec<SweepPoint>,
}

impl SweepReport {
    pub fn new(curve: &SweepCurve, radius: f64) -> Self {
        let points = curve
            .thresholds
            .iter()
            .zip(&curve.ramp_probabilities)
            .zip(&curve.density)
            .map(|((&t, &p), &d)| SweepPoint {
                threshold_mw: t,
                ramp_probability: p,
                quasi_density: d,
            })
            .collect();
        Self {
            direction: curve.direction,
            radius,
            note: SweepCurve::ENVELOPE_NOTE,
            points,
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "threshold_mw,ramp_probability,quasi_density")?;
        for p in &self.points {
            writeln!(
                out,
                "{},{},{}",
                p.threshold_mw, p.ramp_probability, p.quasi_density
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(radius: RadiusPlan, prefixes: Option<Vec<usize>>) -> RunPlan {
        RunPlan {
            order: MetricOrder::ONE,
            radius,
            directions: vec![Direction::Down, Direction::Up],
            thresholds: ThresholdPlan::error_space(vec![1.0, 2.0]),
            prefixes,
            solver: SolverPath::ClosedForm,
        }
    }

    fn samples() -> SampleSet {
        SampleSet::from_tuples([(2.0, -1.0), (0.0, 0.0), (-3.0, 1.0), (1.5, -0.5)]).unwrap()
    }

    #[test]
    fn rows_follow_plan_order() {
        let rows = estimate_rows(
            &samples(),
            &plan(RadiusPlan::Confidences(vec![0.9, 0.99]), Some(vec![2, 4])),
        )
        .unwrap();
        assert_eq!(rows.len(), 2 * 2 * 2 * 2);
        assert_eq!(rows[0].prefix, 2);
        assert_eq!(rows[0].direction, Direction::Down);
        assert_eq!(rows[0].confidence, Some(0.9));
        assert_eq!(rows[1].confidence, Some(0.99));
        assert_eq!(rows[2].threshold_mw, 2.0);
        assert_eq!(rows[4].direction, Direction::Up);
        assert_eq!(rows[8].prefix, 4);
    }

    #[test]
    fn zero_radius_estimates_equal_erp() {
        let rows = estimate_rows(&samples(), &plan(RadiusPlan::Radius(0.0), None)).unwrap();
        for r in rows {
            assert!((r.ramp_probability - r.erp).abs() < 1e-12);
        }
    }

    #[test]
    fn full_prefix_table_has_equal_orp_and_erp() {
        let t = table(
            &samples(),
            &plan(RadiusPlan::Confidences(vec![0.9]), Some(vec![4])),
        )
        .unwrap();
        for r in &t.rows {
            assert_eq!(r.orp, r.erp);
            assert!(r.estimates[0].ramp_probability >= r.erp);
        }
    }

    #[test]
    fn oversized_prefix_rejected() {
        let err = table(&samples(), &plan(RadiusPlan::Radius(0.1), Some(vec![5]))).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn table_csv_layout() {
        let t = table(
            &samples(),
            &plan(RadiusPlan::Confidences(vec![0.9, 0.99]), Some(vec![4])),
        )
        .unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "prefix,direction,threshold_mw,orp,erp,conf_0.9,conf_0.99"
        );
        assert_eq!(lines.count(), 4);
    }
}
