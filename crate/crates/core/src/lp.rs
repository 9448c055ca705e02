//! Small dense linear-programming solver.
//!
//! Two-phase tableau simplex with Bland's rule. It exists to check the
//! closed-form breakpoint scan against an independent route, and to solve the
//! explicit dual program when asked to. Instances are at most a few hundred
//! columns, so everything is dense.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::MarginVector;

/// Largest sample count [`build_dual_lp`] will accept.
pub const MAX_DUAL_SAMPLES: usize = 1_000_000;

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-10;
const FEASIBILITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub const NONNEGATIVE: Bounds = Bounds {
        lower: 0.0,
        upper: f64::INFINITY,
    };
    pub const FREE: Bounds = Bounds {
        lower: f64::NEG_INFINITY,
        upper: f64::INFINITY,
    };
}

/// `maximize objective . x` subject to row constraints and per-variable bounds.
/// Variables default to `x >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearProgram {
    objective: Vec<f64>,
    constraints: Vec<Constraint>,
    bounds: Vec<Bounds>,
}

impl LinearProgram {
    pub fn maximize(objective: Vec<f64>) -> Result<Self> {
        if objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("objective coefficients must be finite"));
        }
        let bounds = vec![Bounds::NONNEGATIVE; objective.len()];
        Ok(Self {
            objective,
            constraints: Vec::new(),
            bounds,
        })
    }

    pub fn add_constraint(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> Result<()> {
        if coeffs.len() != self.objective.len() {
            return Err(Error::invalid(format!(
                "constraint has {} coefficients, program has {} variables",
                coeffs.len(),
                self.objective.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) || !rhs.is_finite() {
            return Err(Error::invalid("constraint coefficients must be finite"));
        }
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
        Ok(())
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) -> Result<()> {
        if var >= self.objective.len() {
            return Err(Error::invalid(format!("variable {var} out of range")));
        }
        if lower.is_nan() || upper.is_nan() || lower == f64::INFINITY || upper == f64::NEG_INFINITY
        {
            return Err(Error::invalid(format!(
                "invalid bounds [{lower}, {upper}] for variable {var}"
            )));
        }
        self.bounds[var] = Bounds { lower, upper };
        Ok(())
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn bounds(&self) -> &[Bounds] {
        &self.bounds
    }

    /// Largest violation of any row or bound by `x`, each row scaled by its
    /// largest absolute coefficient.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.constraints.iter().map(|c| {
            let lhs: f64 = c.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
            let norm = c
                .coeffs
                .iter()
                .fold(c.rhs.abs(), |acc, a| acc.max(a.abs()))
                .max(1.0);
            let gap = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            gap.max(0.0) / norm
        });
        let bounds = self
            .bounds
            .iter()
            .zip(x)
            .map(|(b, &v)| (b.lower - v).max(v - b.upper).max(0.0));
        rows.chain(bounds).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Unbounded,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Objective read off the final tableau; NaN unless optimal.
    pub objective_value: f64,
    /// Values of the original variables; empty unless optimal.
    pub values: Vec<f64>,
}

impl LpSolution {
    fn without_point(status: LpStatus) -> Self {
        Self {
            status,
            objective_value: f64::NAN,
            values: Vec::new(),
        }
    }
}

/// Index of `gamma` in the variable layout of [`build_dual_lp`].
pub fn gamma_index(sample_count: usize) -> usize {
    sample_count
}

/// Explicit dual program for the given margins.
///
/// Layout: `beta_1..beta_I` (free), `gamma >= 0`, `tau_1..tau_I >= 0`.
/// Rows: `beta_i <= 1`, `scale * tau_i - gamma <= 0`, `beta_i - g_i * tau_i <= 0`.
pub fn build_dual_lp(margins: &MarginVector, radius: f64, scale: f64) -> Result<LinearProgram> {
    let n = margins.len();
    if n > MAX_DUAL_SAMPLES {
        return Err(Error::invalid(format!(
            "dual LP limited to {MAX_DUAL_SAMPLES} samples, got {n}"
        )));
    }
    if !(radius.is_finite() && radius >= 0.0) {
        return Err(Error::invalid(format!(
            "radius must be nonnegative, got {radius}"
        )));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::invalid(format!(
            "scale must be positive, got {scale}"
        )));
    }

    let width = 2 * n + 1;
    let gamma = gamma_index(n);
    let tau = |i: usize| n + 1 + i;

    let mut objective = vec![1.0 / n as f64; width];
    objective[gamma] = -radius;
    for i in 0..n {
        objective[tau(i)] = 0.0;
    }
    let mut program = LinearProgram::maximize(objective)?;
    for i in 0..n {
        program.set_bounds(i, f64::NEG_INFINITY, f64::INFINITY)?;
    }

    for i in 0..n {
        let mut row = vec![0.0; width];
        row[i] = 1.0;
        program.add_constraint(row, Relation::Le, 1.0)?;
    }
    for i in 0..n {
        let mut row = vec![0.0; width];
        row[tau(i)] = scale;
        row[gamma] = -1.0;
        program.add_constraint(row, Relation::Le, 0.0)?;
    }
    for (i, &g) in margins.as_slice().iter().enumerate() {
        let mut row = vec![0.0; width];
        row[i] = 1.0;
        row[tau(i)] = -g;
        program.add_constraint(row, Relation::Le, 0.0)?;
    }
    Ok(program)
}

/// How an original variable is expressed through nonnegative tableau columns.
#[derive(Debug, Clone, Copy)]
enum Column {
    /// `x = lower + y`
    Shifted { col: usize, lower: f64 },
    /// `x = upper - y`
    Mirrored { col: usize, upper: f64 },
    /// `x = y+ - y-`
    Split { pos: usize, neg: usize },
}

struct Tableau {
    /// `rows x (cols + 1)`, last entry of each row is the right-hand side.
    a: Vec<Vec<f64>>,
    /// Reduced costs `c_j - c_B B^-1 A_j`, last entry is `-objective`.
    cost: Vec<f64>,
    basis: Vec<usize>,
    cols: usize,
}

enum Phase {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn rhs(&self, r: usize) -> f64 {
        self.a[r][self.cols]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.a[row][col];
        for v in self.a[row].iter_mut() {
            *v /= p;
        }
        self.a[row][col] = 1.0;
        let pivot_row = self.a[row].clone();
        for (r, line) in self.a.iter_mut().enumerate() {
            if r == row {
                continue;
            }
            let factor = line[col];
            if factor != 0.0 {
                for (v, pv) in line.iter_mut().zip(&pivot_row) {
                    *v -= factor * pv;
                }
                line[col] = 0.0;
            }
        }
        let factor = self.cost[col];
        if factor != 0.0 {
            for (v, pv) in self.cost.iter_mut().zip(&pivot_row) {
                *v -= factor * pv;
            }
            self.cost[col] = 0.0;
        }
        self.basis[row] = col;
    }

    /// Sets reduced costs for objective `c` (length `cols`) against the current basis.
    fn price(&mut self, c: &[f64]) {
        let mut cost = c.to_vec();
        cost.push(0.0);
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = c[b];
            if cb != 0.0 {
                for (v, a) in cost.iter_mut().zip(&self.a[r]) {
                    *v -= cb * a;
                }
            }
        }
        self.cost = cost;
    }

    /// Bland's rule: lowest-index improving column enters, ties in the ratio
    /// test go to the lowest-index basic variable.
    fn run(&mut self, allowed: usize, budget: &mut usize) -> Result<Phase> {
        loop {
            let entering = (0..allowed).find(|&j| self.cost[j] > COST_TOL);
            let Some(col) = entering else {
                return Ok(Phase::Optimal);
            };

            let mut leaving: Option<(usize, f64)> = None;
            for r in 0..self.a.len() {
                let coef = self.a[r][col];
                if coef > PIVOT_TOL {
                    let ratio = self.rhs(r) / coef;
                    leaving = match leaving {
                        None => Some((r, ratio)),
                        Some((best, best_ratio)) => {
                            if ratio < best_ratio
                                || (ratio == best_ratio && self.basis[r] < self.basis[best])
                            {
                                Some((r, ratio))
                            } else {
                                Some((best, best_ratio))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = leaving else {
                return Ok(Phase::Unbounded);
            };

            if *budget == 0 {
                return Err(Error::Solver("simplex pivot limit reached".into()));
            }
            *budget -= 1;
            self.pivot(row, col);
            if !self.cost[self.cols].is_finite() {
                return Err(Error::Solver("non-finite objective after pivot".into()));
            }
        }
    }
}

/// Solves `lp` to an optimal basic solution, or reports it unbounded or infeasible.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    let n = lp.num_vars();

    // Express every original variable through nonnegative columns.
    let mut columns = Vec::with_capacity(n);
    let mut structural = 0usize;
    let mut upper_rows: Vec<(usize, f64)> = Vec::new();
    for b in &lp.bounds {
        if b.lower > b.upper {
            return Ok(LpSolution::without_point(LpStatus::Infeasible));
        }
        let column = if b.lower.is_finite() {
            if b.upper.is_finite() {
                upper_rows.push((structural, b.upper - b.lower));
            }
            Column::Shifted {
                col: structural,
                lower: b.lower,
            }
        } else if b.upper.is_finite() {
            Column::Mirrored {
                col: structural,
                upper: b.upper,
            }
        } else {
            structural += 1;
            Column::Split {
                pos: structural - 1,
                neg: structural,
            }
        };
        structural += 1;
        columns.push(column);
    }

    // Rows over structural columns, with rhs made nonnegative.
    let mut rows: Vec<(Vec<f64>, Relation, f64)> = Vec::new();
    for c in &lp.constraints {
        let mut coeffs = vec![0.0; structural];
        let mut rhs = c.rhs;
        for (a, column) in c.coeffs.iter().zip(&columns) {
            match *column {
                Column::Shifted { col, lower } => {
                    coeffs[col] += a;
                    rhs -= a * lower;
                }
                Column::Mirrored { col, upper } => {
                    coeffs[col] -= a;
                    rhs -= a * upper;
                }
                Column::Split { pos, neg } => {
                    coeffs[pos] += a;
                    coeffs[neg] -= a;
                }
            }
        }
        rows.push((coeffs, c.relation, rhs));
    }
    for &(col, width) in &upper_rows {
        let mut coeffs = vec![0.0; structural];
        coeffs[col] = 1.0;
        rows.push((coeffs, Relation::Le, width));
    }
    for row in rows.iter_mut() {
        if row.2 < 0.0 {
            row.0.iter_mut().for_each(|v| *v = -*v);
            row.2 = -row.2;
            row.1 = match row.1 {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
    }

    let slack_count = rows.iter().filter(|r| r.1 != Relation::Eq).count();
    let artificial_count = rows.iter().filter(|r| r.1 != Relation::Le).count();
    let first_artificial = structural + slack_count;
    let cols = first_artificial + artificial_count;

    let m = rows.len();
    let mut a = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let (mut next_slack, mut next_art) = (structural, first_artificial);
    for (coeffs, relation, rhs) in &rows {
        let mut line = vec![0.0; cols + 1];
        line[..structural].copy_from_slice(coeffs);
        line[cols] = *rhs;
        match relation {
            Relation::Le => {
                line[next_slack] = 1.0;
                basis.push(next_slack);
                next_slack += 1;
            }
            Relation::Ge => {
                line[next_slack] = -1.0;
                next_slack += 1;
                line[next_art] = 1.0;
                basis.push(next_art);
                next_art += 1;
            }
            Relation::Eq => {
                line[next_art] = 1.0;
                basis.push(next_art);
                next_art += 1;
            }
        }
        a.push(line);
    }

    let mut tableau = Tableau {
        a,
        cost: vec![0.0; cols + 1],
        basis,
        cols,
    };
    let mut budget = 50_000 + 200 * (m + cols);

    if artificial_count > 0 {
        let mut phase_one = vec![0.0; cols];
        phase_one[first_artificial..]
            .iter_mut()
            .for_each(|c| *c = -1.0);
        tableau.price(&phase_one);
        tableau.run(cols, &mut budget)?;
        let infeasibility = tableau.cost[cols];
        if infeasibility > FEASIBILITY_TOL {
            return Ok(LpSolution::without_point(LpStatus::Infeasible));
        }
        // Drive zero-level artificials out of the basis; drop redundant rows.
        let mut r = 0;
        while r < tableau.a.len() {
            if tableau.basis[r] >= first_artificial {
                match (0..first_artificial).find(|&j| tableau.a[r][j].abs() > PIVOT_TOL) {
                    Some(j) => tableau.pivot(r, j),
                    None => {
                        tableau.a.remove(r);
                        tableau.basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
    }

    let mut phase_two = vec![0.0; cols];
    let mut offset = 0.0;
    for (c, column) in lp.objective.iter().zip(&columns) {
        match *column {
            Column::Shifted { col, lower } => {
                phase_two[col] += c;
                offset += c * lower;
            }
            Column::Mirrored { col, upper } => {
                phase_two[col] -= c;
                offset += c * upper;
            }
            Column::Split { pos, neg } => {
                phase_two[pos] += c;
                phase_two[neg] -= c;
            }
        }
    }
    tableau.price(&phase_two);
    if let Phase::Unbounded = tableau.run(first_artificial, &mut budget)? {
        return Ok(LpSolution::without_point(LpStatus::Unbounded));
    }

    let mut y = vec![0.0; cols];
    for (r, &b) in tableau.basis.iter().enumerate() {
        y[b] = tableau.rhs(r);
    }
    let values = columns
        .iter()
        .map(|column| match *column {
            Column::Shifted { col, lower } => lower + y[col],
            Column::Mirrored { col, upper } => upper - y[col],
            Column::Split { pos, neg } => y[pos] - y[neg],
        })
        .collect::<Vec<_>>();
    let objective_value = offset - tableau.cost[cols];
    if !objective_value.is_finite() || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Solver("non-finite values in optimal basis".into()));
    }

    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective_value,
        values,
    })
}
