//! Dense two-phase primal simplex with Bland's rule.
//!
//! Problems are stated with free-form variable bounds and `≤ / ≥ / =` rows;
//! [`solve_lp`] rewrites them into standard form (`Ay = b, y ≥ 0, b ≥ 0`),
//! finds a feasible basis with artificial variables and then minimizes the
//! real objective over the same tableau.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Phase-one optimum above this means infeasible.
pub const FEASIBILITY_TOL: f64 = 1e-8;
/// Reduced costs above `-OPTIMALITY_TOL` count as nonnegative.
pub const OPTIMALITY_TOL: f64 = 1e-8;
/// Primal certificates must satisfy every row and bound within this.
pub const CERTIFICATE_TOL: f64 = 1e-7;
pub const MAX_PIVOTS: usize = 1_000_000;
const PIVOT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|(i, a)| a * x[*i]).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let v = self.activity(x) - self.rhs;
        match self.relation {
            Relation::Le => v.max(0.0),
            Relation::Ge => (-v).max(0.0),
            Relation::Eq => v.abs(),
        }
    }
}

/// `minimize objective·x + objective_constant` subject to the rows and
/// `lower ≤ x ≤ upper` (bounds may be infinite).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub names: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub objective: Vec<f64>,
    pub objective_constant: f64,
    pub constraints: Vec<Constraint>,
}

impl LpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> usize {
        self.names.push(name.into());
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.push(0.0);
        self.names.len() - 1
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        coeffs: Vec<(usize, f64)>,
        relation: Relation,
        rhs: f64,
    ) {
        self.constraints.push(Constraint {
            name: name.into(),
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + self.objective_constant
    }

    /// Largest row or bound violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self
            .constraints
            .iter()
            .map(|c| c.violation(x))
            .fold(0.0, f64::max);
        let bounds = x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (lo, hi))| (lo - v).max(v - hi).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    pub fn is_well_formed(&self) -> bool {
        let n = self.num_vars();
        self.lower.len() == n
            && self.upper.len() == n
            && self.objective.len() == n
            && self
                .lower
                .iter()
                .zip(&self.upper)
                .all(|(l, u)| l <= u && *l < f64::INFINITY && *u > f64::NEG_INFINITY)
            && self
                .constraints
                .iter()
                .all(|c| c.rhs.is_finite() && c.coeffs.iter().all(|(i, a)| *i < n && a.is_finite()))
    }

    /// Plain-text dump in an LP-file-like layout:
    ///
    /// ```text
    /// Minimize
    ///  obj: <coef> <var> + ... [+ <constant>]
    /// Subject To
    ///  <name>: <coef> <var> + ... (<=|>=|=) <rhs>
    /// Bounds
    ///  <lo> <= <var> <= <hi>      (or "<var> free", "-inf"/"+inf" for open sides)
    /// End
    /// ```
    pub fn to_lp_format(&self) -> String {
        let term_list = |terms: &mut dyn Iterator<Item = (f64, &str)>| {
            let mut s = String::new();
            for (i, (a, name)) in terms.enumerate() {
                if i == 0 {
                    let _ = write!(s, "{a} {name}");
                } else if a < 0.0 {
                    let _ = write!(s, " - {} {name}", -a);
                } else {
                    let _ = write!(s, " + {a} {name}");
                }
            }
            if s.is_empty() {
                s.push('0');
            }
            s
        };
        let mut out = String::from("Minimize\n obj: ");
        out.push_str(&term_list(
            &mut self
                .objective
                .iter()
                .zip(&self.names)
                .filter(|(c, _)| **c != 0.0)
                .map(|(c, n)| (*c, n.as_str())),
        ));
        if self.objective_constant != 0.0 {
            let _ = write!(out, " + {}", self.objective_constant);
        }
        out.push_str("\nSubject To\n");
        for c in &self.constraints {
            let op = match c.relation {
                Relation::Le => "<=",
                Relation::Ge => ">=",
                Relation::Eq => "=",
            };
            let lhs = term_list(
                &mut c
                    .coeffs
                    .iter()
                    .map(|(i, a)| (*a, self.names[*i].as_str())),
            );
            let _ = writeln!(out, " {}: {lhs} {op} {}", c.name, c.rhs);
        }
        out.push_str("Bounds\n");
        for ((name, lo), hi) in self.names.iter().zip(&self.lower).zip(&self.upper) {
            if lo.is_infinite() && hi.is_infinite() {
                let _ = writeln!(out, " {name} free");
            } else {
                let fmt = |v: f64| {
                    if v == f64::INFINITY {
                        "+inf".to_string()
                    } else if v == f64::NEG_INFINITY {
                        "-inf".to_string()
                    } else {
                        v.to_string()
                    }
                };
                let _ = writeln!(out, " {} <= {name} <= {}", fmt(*lo), fmt(*hi));
            }
        }
        out.push_str("End\n");
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LpOutcome {
    Optimal { value: f64, point: Vec<f64> },
    Infeasible,
    /// Objective unbounded below. Never produced by the bounded relaxations
    /// the verifier builds.
    Unbounded,
    /// Pivot limit reached or the final point failed the certificate check.
    NumericalFailure,
}

impl LpOutcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            LpOutcome::Optimal { value, .. } => Some(*value),
            _ => None,
        }
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, LpOutcome::Infeasible)
    }
}

/// How an original variable is expressed in standard-form columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    Fixed(f64),
    /// `x = lo + y`
    Shift { col: usize, lo: f64 },
    /// `x = hi - y`
    Flip { col: usize, hi: f64 },
    /// `x = y⁺ - y⁻`
    Split { pos: usize, neg: usize },
}

struct Tableau {
    /// Row-major `rows × (cols + 1)`; the last column is the right-hand side.
    data: Vec<f64>,
    rows: usize,
    cols: usize,
    basis: Vec<usize>,
    /// Reduced costs (length `cols`).
    cost: Vec<f64>,
    pivots: usize,
}

enum Phase {
    Optimal,
    Unbounded,
    Limit,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * (self.cols + 1) + c]
    }

    #[inline]
    fn rhs(&self, r: usize) -> f64 {
        self.data[r * (self.cols + 1) + self.cols]
    }

    fn price(&mut self, costs: &[f64]) {
        let w = self.cols + 1;
        self.cost = costs.to_vec();
        for r in 0..self.rows {
            let cb = costs[self.basis[r]];
            if cb != 0.0 {
                let row = &self.data[r * w..r * w + self.cols];
                for (c, a) in self.cost.iter_mut().zip(row) {
                    *c -= cb * a;
                }
            }
        }
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.cols + 1;
        let p = self.at(pr, pc);
        let (before, rest) = self.data.split_at_mut(pr * w);
        let (prow, after) = rest.split_at_mut(w);
        for v in prow.iter_mut() {
            *v /= p;
        }
        prow[pc] = 1.0;
        let eliminate = |row: &mut [f64]| {
            let f = row[pc];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * pv;
                }
                row[pc] = 0.0;
            }
        };
        before.chunks_mut(w).for_each(eliminate);
        after.chunks_mut(w).for_each(eliminate);
        let f = self.cost[pc];
        if f != 0.0 {
            for (c, pv) in self.cost.iter_mut().zip(prow.iter()) {
                *c -= f * pv;
            }
            self.cost[pc] = 0.0;
        }
        self.basis[pr] = pc;
        self.pivots += 1;
    }

    /// Bland's rule: lowest-index improving column, ties in the ratio test
    /// broken by lowest basic index.
    fn run(&mut self, allowed: usize, limit: usize) -> Phase {
        loop {
            if self.pivots >= limit {
                return Phase::Limit;
            }
            let Some(pc) = (0..allowed).find(|&c| self.cost[c] < -OPTIMALITY_TOL) else {
                return Phase::Optimal;
            };
            let mut best: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r).max(0.0) / a;
                    best = match best {
                        None => Some((r, ratio)),
                        Some((br, bv)) => {
                            let tie = (ratio - bv).abs() <= 1e-12 * (1.0 + bv.abs());
                            if (!tie && ratio < bv) || (tie && self.basis[r] < self.basis[br]) {
                                Some((r, ratio))
                            } else {
                                Some((br, bv))
                            }
                        }
                    };
                }
            }
            match best {
                Some((pr, _)) => self.pivot(pr, pc),
                None => return Phase::Unbounded,
            }
        }
    }
}

pub fn solve_lp(prob: &LpProblem) -> LpOutcome {
    solve_lp_with_limit(prob, MAX_PIVOTS)
}

pub fn solve_lp_with_limit(prob: &LpProblem, max_pivots: usize) -> LpOutcome {
    assert!(prob.is_well_formed(), "malformed LP problem");
    let n = prob.num_vars();

    // Columns for the original variables.
    let mut maps = Vec::with_capacity(n);
    let mut ncols = 0usize;
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for i in 0..n {
        let (lo, hi) = (prob.lower[i], prob.upper[i]);
        let map = if lo == hi {
            VarMap::Fixed(lo)
        } else if lo.is_finite() {
            let col = ncols;
            ncols += 1;
            if hi.is_finite() {
                bound_rows.push((col, hi - lo));
            }
            VarMap::Shift { col, lo }
        } else if hi.is_finite() {
            ncols += 1;
            VarMap::Flip { col: ncols - 1, hi }
        } else {
            ncols += 2;
            VarMap::Split {
                pos: ncols - 2,
                neg: ncols - 1,
            }
        };
        maps.push(map);
    }
    let n_struct = ncols;

    // Rows over structural columns.
    struct Row {
        coeffs: Vec<(usize, f64)>,
        relation: Relation,
        rhs: f64,
    }
    let mut rows: Vec<Row> = Vec::with_capacity(prob.constraints.len() + bound_rows.len());
    for c in &prob.constraints {
        let mut rhs = c.rhs;
        let mut dense: Vec<f64> = vec![0.0; n_struct];
        for &(i, a) in &c.coeffs {
            match maps[i] {
                VarMap::Fixed(v) => rhs -= a * v,
                VarMap::Shift { col, lo } => {
                    rhs -= a * lo;
                    dense[col] += a;
                }
                VarMap::Flip { col, hi } => {
                    rhs -= a * hi;
                    dense[col] -= a;
                }
                VarMap::Split { pos, neg } => {
                    dense[pos] += a;
                    dense[neg] -= a;
                }
            }
        }
        let coeffs = dense
            .into_iter()
            .enumerate()
            .filter(|(_, a)| *a != 0.0)
            .collect();
        rows.push(Row {
            coeffs,
            relation: c.relation,
            rhs,
        });
    }
    for (col, width) in bound_rows {
        rows.push(Row {
            coeffs: vec![(col, 1.0)],
            relation: Relation::Le,
            rhs: width,
        });
    }

    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.relation != Relation::Eq).count();
    // Decide which rows need an artificial variable.
    let mut slack_col = vec![None; m];
    let mut slack_sign = vec![0.0; m];
    let mut negate = vec![false; m];
    let mut next_slack = n_struct;
    for (r, row) in rows.iter().enumerate() {
        negate[r] = row.rhs < 0.0;
        if row.relation != Relation::Eq {
            slack_col[r] = Some(next_slack);
            next_slack += 1;
            let s = if row.relation == Relation::Le { 1.0 } else { -1.0 };
            slack_sign[r] = if negate[r] { -s } else { s };
        }
    }
    let needs_art: Vec<bool> = (0..m)
        .map(|r| !(slack_col[r].is_some() && slack_sign[r] > 0.0))
        .collect();
    let n_art = needs_art.iter().filter(|b| **b).count();
    let cols = n_struct + n_slack + n_art;
    let w = cols + 1;
    let mut data = vec![0.0; m * w];
    let mut basis = vec![0usize; m];
    let mut next_art = n_struct + n_slack;
    for (r, row) in rows.iter().enumerate() {
        let sign = if negate[r] { -1.0 } else { 1.0 };
        let base = r * w;
        for &(c, a) in &row.coeffs {
            data[base + c] = sign * a;
        }
        data[base + cols] = sign * row.rhs;
        if let Some(sc) = slack_col[r] {
            data[base + sc] = slack_sign[r];
        }
        if needs_art[r] {
            data[base + next_art] = 1.0;
            basis[r] = next_art;
            next_art += 1;
        } else {
            basis[r] = slack_col[r].expect("slack row");
        }
    }

    let mut tab = Tableau {
        data,
        rows: m,
        cols,
        basis,
        cost: vec![0.0; cols],
        pivots: 0,
    };
    let first_art = n_struct + n_slack;

    // Phase one.
    if n_art > 0 {
        let mut c1 = vec![0.0; cols];
        c1[first_art..].iter_mut().for_each(|c| *c = 1.0);
        tab.price(&c1);
        match tab.run(cols, max_pivots) {
            Phase::Optimal => {}
            Phase::Limit => return LpOutcome::NumericalFailure,
            Phase::Unbounded => return LpOutcome::NumericalFailure,
        }
        let infeas: f64 = (0..m)
            .filter(|&r| tab.basis[r] >= first_art)
            .map(|r| tab.rhs(r))
            .sum();
        if infeas > FEASIBILITY_TOL {
            return LpOutcome::Infeasible;
        }
        // Drive remaining artificials out of the basis where possible.
        for r in 0..m {
            if tab.basis[r] >= first_art {
                if let Some(c) = (0..first_art).find(|&c| tab.at(r, c).abs() > PIVOT_TOL) {
                    tab.pivot(r, c);
                }
            }
        }
    }

    // Phase two.
    let mut c2 = vec![0.0; cols];
    for (i, map) in maps.iter().enumerate() {
        let c = prob.objective[i];
        match *map {
            VarMap::Fixed(_) => {}
            VarMap::Shift { col, .. } => c2[col] += c,
            VarMap::Flip { col, .. } => c2[col] -= c,
            VarMap::Split { pos, neg } => {
                c2[pos] += c;
                c2[neg] -= c;
            }
        }
    }
    tab.price(&c2);
    match tab.run(first_art, max_pivots) {
        Phase::Optimal => {}
        Phase::Limit => return LpOutcome::NumericalFailure,
        Phase::Unbounded => return LpOutcome::Unbounded,
    }

    let mut y = vec![0.0; cols];
    for r in 0..m {
        y[tab.basis[r]] = tab.rhs(r).max(0.0);
    }
    let point: Vec<f64> = maps
        .iter()
        .enumerate()
        .map(|(i, map)| {
            let v = match *map {
                VarMap::Fixed(v) => v,
                VarMap::Shift { col, lo } => lo + y[col],
                VarMap::Flip { col, hi } => hi - y[col],
                VarMap::Split { pos, neg } => y[pos] - y[neg],
            };
            v.clamp(prob.lower[i], prob.upper[i])
        })
        .collect();
    if prob.max_violation(&point) > CERTIFICATE_TOL {
        return LpOutcome::NumericalFailure;
    }
    LpOutcome::Optimal {
        value: prob.objective_value(&point),
        point,
    }
}
