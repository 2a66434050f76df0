//! Linear programs and a dense bounded-variable primal simplex solver.
//!
//! Every market clearing and agent decision in this crate is expressed as a
//! [`LinearProgram`] and solved here. Variables carry their own bounds
//! (infinite bounds are `f64::INFINITY` / `f64::NEG_INFINITY`, never a large
//! finite stand-in), so bounds never become constraint rows.
//!
//! The solver is a two-phase primal simplex on a dense tableau. Entering
//! variables are picked by the largest reduced cost (lowest index on ties);
//! after a run of degenerate pivots the solver switches to Bland's rule until
//! progress resumes, which rules out cycling.

use std::fmt;
use std::io::{self, Write};

use thiserror::Error;

/// Primal feasibility tolerance, relative to `max(1, |rhs|)`.
pub const TOL_FEAS: f64 = 1e-7;
/// Smallest tableau entry accepted as a pivot.
pub const TOL_PIVOT: f64 = 1e-9;
/// Reduced-cost threshold for optimality.
const TOL_OPT: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("constraint {constraint} refers to undeclared variable index {var}")]
    UnknownVariable { constraint: usize, var: usize },
    #[error("variable `{name}` has lower bound {lower} above upper bound {upper}")]
    InvertedBounds { name: String, lower: f64, upper: f64 },
    #[error("non-finite data in {0}")]
    NonFinite(String),
    #[error("simplex iteration limit ({0}) reached")]
    IterationLimit(usize),
}

/// Handle to a variable of one particular [`LinearProgram`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub terms: Vec<(VarId, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, a)| a * values[v.0]).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub sense: Sense,
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub status: Status,
    pub objective: f64,
    pub values: Vec<f64>,
}

impl Solution {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    pub fn value(&self, var: VarId) -> f64 {
        self.values[var.0]
    }
}

impl std::ops::Index<VarId> for Solution {
    type Output = f64;
    fn index(&self, var: VarId) -> &f64 {
        &self.values[var.0]
    }
}

impl LinearProgram {
    pub fn new(sense: Sense) -> Self {
        Self {
            sense,
            variables: Vec::new(),
            constraints: Vec::new(),
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, cost: f64) -> VarId {
        self.variables.push(Variable {
            name: name.into(),
            lower,
            upper,
            cost,
        });
        VarId(self.variables.len() - 1)
    }

    pub fn set_cost(&mut self, var: VarId, cost: f64) {
        self.variables[var.0].cost = cost;
    }

    pub fn add_cost(&mut self, var: VarId, cost: f64) {
        self.variables[var.0].cost += cost;
    }

    pub fn set_bounds(&mut self, var: VarId, lower: f64, upper: f64) {
        let v = &mut self.variables[var.0];
        v.lower = lower;
        v.upper = upper;
    }

    /// Fixes a variable to a single value.
    pub fn fix(&mut self, var: VarId, value: f64) {
        self.set_bounds(var, value, value);
    }

    /// Adds a row. Repeated variables in `terms` are summed.
    pub fn add_constraint(
        &mut self,
        terms: impl IntoIterator<Item = (VarId, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> usize {
        let mut merged: Vec<(VarId, f64)> = Vec::new();
        for (v, a) in terms {
            match merged.iter_mut().find(|(w, _)| *w == v) {
                Some(slot) => slot.1 += a,
                None => merged.push((v, a)),
            }
        }
        merged.retain(|&(_, a)| a != 0.0);
        self.constraints.push(Constraint {
            terms: merged,
            relation,
            rhs,
        });
        self.constraints.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn validate(&self) -> Result<(), LpError> {
        for v in &self.variables {
            if v.lower.is_nan() || v.upper.is_nan() || !v.cost.is_finite() {
                return Err(LpError::NonFinite(format!("variable `{}`", v.name)));
            }
            if v.lower > v.upper || v.lower == f64::INFINITY || v.upper == f64::NEG_INFINITY {
                return Err(LpError::InvertedBounds {
                    name: v.name.clone(),
                    lower: v.lower,
                    upper: v.upper,
                });
            }
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if !c.rhs.is_finite() {
                return Err(LpError::NonFinite(format!("constraint {i} rhs")));
            }
            for &(v, a) in &c.terms {
                if v.0 >= self.variables.len() {
                    return Err(LpError::UnknownVariable {
                        constraint: i,
                        var: v.0,
                    });
                }
                if !a.is_finite() {
                    return Err(LpError::NonFinite(format!("constraint {i} coefficient")));
                }
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.variables
            .iter()
            .zip(values)
            .map(|(v, x)| v.cost * x)
            .sum()
    }

    /// Largest bound or row violation of `values`, each scaled by
    /// `max(1, |rhs|)` (or `max(1, |bound|)`).
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, &x) in self.variables.iter().zip(values) {
            if v.lower.is_finite() {
                worst = worst.max((v.lower - x) / v.lower.abs().max(1.0));
            }
            if v.upper.is_finite() {
                worst = worst.max((x - v.upper) / v.upper.abs().max(1.0));
            }
        }
        for c in &self.constraints {
            let lhs = c.activity(values);
            let scale = c.rhs.abs().max(1.0);
            let viol = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(viol / scale);
        }
        worst
    }

    pub fn solve(&self) -> Result<Solution, LpError> {
        Solver::default().solve(self)
    }

    /// Writes the program in CPLEX-LP style text. Numbers use Rust's
    /// shortest round-trip formatting, so the dump is exact.
    pub fn write_lp<W: Write>(&self, mut w: W) -> io::Result<()> {
        let name = |v: VarId| sanitize(&self.variables[v.0].name, v.0);
        writeln!(
            w,
            "{}",
            match self.sense {
                Sense::Minimize => "Minimize",
                Sense::Maximize => "Maximize",
            }
        )?;
        write!(w, " obj:")?;
        for (j, v) in self.variables.iter().enumerate() {
            if v.cost != 0.0 {
                write!(w, " {} {}", signed(v.cost), name(VarId(j)))?;
            }
        }
        writeln!(w)?;
        writeln!(w, "Subject To")?;
        for (i, c) in self.constraints.iter().enumerate() {
            write!(w, " c{i}:")?;
            if c.terms.is_empty() {
                write!(w, " 0 {}", name(VarId(0)))?;
            }
            for &(v, a) in &c.terms {
                write!(w, " {} {}", signed(a), name(v))?;
            }
            writeln!(w, " {} {}", c.relation, c.rhs)?;
        }
        writeln!(w, "Bounds")?;
        for (j, v) in self.variables.iter().enumerate() {
            let n = name(VarId(j));
            match (v.lower.is_finite(), v.upper.is_finite()) {
                (false, false) => writeln!(w, " {n} free")?,
                (true, false) => writeln!(w, " {n} >= {}", v.lower)?,
                (false, true) => writeln!(w, " -inf <= {n} <= {}", v.upper)?,
                (true, true) if v.lower == v.upper => writeln!(w, " {n} = {}", v.lower)?,
                (true, true) => writeln!(w, " {} <= {n} <= {}", v.lower, v.upper)?,
            }
        }
        writeln!(w, "End")
    }
}

fn signed(a: f64) -> String {
    if a < 0.0 {
        format!("- {}", -a)
    } else {
        format!("+ {a}")
    }
}

fn sanitize(name: &str, idx: usize) -> String {
    let cleaned: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '.' { c } else { '_' })
        .collect();
    if cleaned.is_empty() || cleaned.starts_with(|c: char| c.is_ascii_digit() || c == '.') {
        format!("x{idx}_{cleaned}")
    } else {
        cleaned
    }
}

#[derive(Debug, Clone)]
pub struct Solver {
    /// Consecutive degenerate pivots tolerated before switching to Bland's rule.
    pub degenerate_pivot_limit: usize,
    pub max_iterations: usize,
}

impl Default for Solver {
    fn default() -> Self {
        Self {
            degenerate_pivot_limit: 50,
            max_iterations: 200_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColState {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free column resting at zero.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColKind {
    Structural,
    Logical,
    Artificial,
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

/// Working tableau: `rows x cols` matrix holding `B^-1 [A | I | S]`.
struct Tableau {
    rows: usize,
    cols: usize,
    t: Vec<f64>,
    beta: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<ColState>,
    kind: Vec<ColKind>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    d: Vec<f64>,
    /// Original `b` for the refinement step.
    rhs: Vec<f64>,
    /// Column of the logical variable of each row.
    logical_of_row: Vec<usize>,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.cols + j]
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.state[j] {
            ColState::AtLower => self.lower[j],
            ColState::AtUpper => self.upper[j],
            ColState::Zero | ColState::Basic => 0.0,
        }
    }

    fn values(&self, count: usize) -> Vec<f64> {
        let mut out: Vec<f64> = (0..count).map(|j| self.nonbasic_value(j)).collect();
        for (r, &b) in self.basis.iter().enumerate() {
            if b < count {
                out[b] = self.beta[r];
            }
        }
        out
    }

    fn compute_reduced_costs(&mut self) {
        self.d.copy_from_slice(&self.cost);
        for i in 0..self.rows {
            let cb = self.cost[self.basis[i]];
            if cb == 0.0 {
                continue;
            }
            let row = &self.t[i * self.cols..(i + 1) * self.cols];
            for (dj, &a) in self.d.iter_mut().zip(row) {
                *dj -= cb * a;
            }
        }
        for &b in &self.basis {
            self.d[b] = 0.0;
        }
    }

    /// Recomputes basic values from `B^-1 (b - N x_N)`; the logical block of
    /// the tableau is `B^-1` because logical columns start as the identity.
    fn refine(&mut self, a_cols: &[Vec<(usize, f64)>]) {
        let mut r = self.rhs.clone();
        for j in 0..self.cols {
            if self.state[j] == ColState::Basic {
                continue;
            }
            let x = self.nonbasic_value(j);
            if x == 0.0 {
                continue;
            }
            for &(i, a) in &a_cols[j] {
                r[i] -= a * x;
            }
        }
        for i in 0..self.rows {
            let mut acc = 0.0;
            for (k, &rk) in r.iter().enumerate() {
                if rk != 0.0 {
                    acc += self.at(i, self.logical_of_row[k]) * rk;
                }
            }
            self.beta[i] = acc;
        }
    }

    fn pivot(&mut self, r: usize, q: usize, scratch: &mut Vec<usize>) {
        let cols = self.cols;
        let piv = self.at(r, q);
        {
            let row = &mut self.t[r * cols..(r + 1) * cols];
            let inv = 1.0 / piv;
            scratch.clear();
            for (j, a) in row.iter_mut().enumerate() {
                if *a != 0.0 {
                    *a *= inv;
                    if a.abs() < 1e-14 {
                        *a = 0.0;
                    } else {
                        scratch.push(j);
                    }
                }
            }
            row[q] = 1.0;
        }
        let (before, rest) = self.t.split_at_mut(r * cols);
        let (prow, after) = rest.split_at_mut(cols);
        let update = |row: &mut [f64]| {
            let f = row[q];
            if f != 0.0 {
                for &j in scratch.iter() {
                    row[j] -= f * prow[j];
                }
                row[q] = 0.0;
            }
        };
        before.chunks_exact_mut(cols).for_each(update);
        after.chunks_exact_mut(cols).for_each(update);
        let f = self.d[q];
        if f != 0.0 {
            for &j in scratch.iter() {
                self.d[j] -= f * prow[j];
            }
            self.d[q] = 0.0;
        }
    }

    fn eligible(&self, j: usize, phase2: bool) -> Option<f64> {
        if self.state[j] == ColState::Basic || self.lower[j] == self.upper[j] {
            return None;
        }
        if phase2 && self.kind[j] == ColKind::Artificial {
            return None;
        }
        let dj = self.d[j];
        match self.state[j] {
            ColState::AtLower if dj < -TOL_OPT => Some(1.0),
            ColState::AtUpper if dj > TOL_OPT => Some(-1.0),
            ColState::Zero if dj.abs() > TOL_OPT => Some(-dj.signum()),
            _ => None,
        }
    }

    fn run_phase(&mut self, solver: &Solver, phase2: bool, iters: &mut usize) -> Result<PhaseEnd, LpError> {
        let mut scratch = Vec::with_capacity(self.cols);
        let mut degenerate_run = 0usize;
        loop {
            *iters += 1;
            if *iters > solver.max_iterations {
                return Err(LpError::IterationLimit(solver.max_iterations));
            }
            let bland = degenerate_run >= solver.degenerate_pivot_limit;

            let mut entering: Option<(usize, f64)> = None;
            let mut best = 0.0;
            for j in 0..self.cols {
                if let Some(dir) = self.eligible(j, phase2) {
                    if bland {
                        entering = Some((j, dir));
                        break;
                    }
                    let score = self.d[j].abs();
                    if score > best {
                        best = score;
                        entering = Some((j, dir));
                    }
                }
            }
            let Some((q, dir)) = entering else {
                return Ok(PhaseEnd::Optimal);
            };

            // Ratio test.
            let mut step = f64::INFINITY;
            let mut leave: Option<(usize, bool)> = None; // (row, leaves at lower)
            let mut leave_mag = 0.0;
            for i in 0..self.rows {
                let g = dir * self.at(i, q);
                if g.abs() <= TOL_PIVOT {
                    continue;
                }
                let b = self.basis[i];
                let (ratio, to_lower) = if g > 0.0 {
                    if self.lower[b] == f64::NEG_INFINITY {
                        continue;
                    }
                    (((self.beta[i] - self.lower[b]) / g).max(0.0), true)
                } else {
                    if self.upper[b] == f64::INFINITY {
                        continue;
                    }
                    (((self.upper[b] - self.beta[i]) / -g).max(0.0), false)
                };
                let better = match leave {
                    None => true,
                    Some((r, _)) => {
                        if ratio < step - 1e-12 {
                            true
                        } else if ratio <= step + 1e-12 {
                            if bland {
                                b < self.basis[r]
                            } else {
                                g.abs() > leave_mag
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    step = ratio;
                    leave = Some((i, to_lower));
                    leave_mag = g.abs();
                }
            }
            let flip = self.upper[q] - self.lower[q];
            let flips = flip.is_finite() && flip <= step;
            if leave.is_none() && !flips {
                return Ok(PhaseEnd::Unbounded);
            }
            let t = if flips { flip } else { step };

            if t > 1e-11 {
                degenerate_run = 0;
            } else {
                degenerate_run += 1;
            }

            let entering_old = self.nonbasic_value(q);
            if t != 0.0 {
                for i in 0..self.rows {
                    let a = self.at(i, q);
                    if a != 0.0 {
                        self.beta[i] -= dir * a * t;
                    }
                }
            }
            if flips {
                self.state[q] = if dir > 0.0 { ColState::AtUpper } else { ColState::AtLower };
                continue;
            }
            let (r, to_lower) = leave.expect("leaving row");
            let p = self.basis[r];
            self.state[p] = if self.lower[p] == self.upper[p] || to_lower {
                ColState::AtLower
            } else {
                ColState::AtUpper
            };
            if self.state[p] == ColState::AtLower && self.lower[p] == f64::NEG_INFINITY {
                self.state[p] = ColState::Zero;
            }
            self.beta[r] = entering_old + dir * t;
            self.basis[r] = q;
            self.state[q] = ColState::Basic;
            self.pivot(r, q, &mut scratch);
        }
    }
}

impl Solver {
    pub fn solve(&self, lp: &LinearProgram) -> Result<Solution, LpError> {
        lp.validate()?;
        let n = lp.variables.len();
        let m = lp.constraints.len();
        let sign = match lp.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };

        // Columns: structurals, one logical per row, then artificials.
        let mut a_cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n + m];
        for (i, c) in lp.constraints.iter().enumerate() {
            for &(v, a) in &c.terms {
                a_cols[v.0].push((i, a));
            }
            a_cols[n + i].push((i, 1.0));
        }
        let mut lower = Vec::with_capacity(n + 2 * m);
        let mut upper = Vec::with_capacity(n + 2 * m);
        let mut kind = Vec::with_capacity(n + 2 * m);
        for v in &lp.variables {
            lower.push(v.lower);
            upper.push(v.upper);
            kind.push(ColKind::Structural);
        }
        for c in &lp.constraints {
            // a.x + s = b
            let (lo, hi) = match c.relation {
                Relation::Le => (0.0, f64::INFINITY),
                Relation::Ge => (f64::NEG_INFINITY, 0.0),
                Relation::Eq => (0.0, 0.0),
            };
            lower.push(lo);
            upper.push(hi);
            kind.push(ColKind::Logical);
        }

        let mut state: Vec<ColState> = (0..n)
            .map(|j| {
                if lower[j].is_finite() {
                    ColState::AtLower
                } else if upper[j].is_finite() {
                    ColState::AtUpper
                } else {
                    ColState::Zero
                }
            })
            .collect();
        let x_at = |j: usize, s: ColState| match s {
            ColState::AtLower => lower[j],
            ColState::AtUpper => upper[j],
            _ => 0.0,
        };
        let mut residual: Vec<f64> = lp.constraints.iter().map(|c| c.rhs).collect();
        for j in 0..n {
            let x = x_at(j, state[j]);
            if x != 0.0 {
                for &(i, a) in &a_cols[j] {
                    residual[i] -= a * x;
                }
            }
        }

        // Logical basic where its bounds admit the residual, else park it at
        // the nearest bound and cover the remainder with an artificial.
        let mut basis = vec![0usize; m];
        let mut beta = vec![0.0; m];
        let mut artificials: Vec<(usize, f64)> = Vec::new();
        for i in 0..m {
            let col = n + i;
            let r = residual[i];
            if r >= lower[col] && r <= upper[col] {
                state.push(ColState::Basic);
                basis[i] = col;
                beta[i] = r;
            } else {
                let (s, bound) = if r < lower[col] {
                    (ColState::AtLower, lower[col])
                } else {
                    (ColState::AtUpper, upper[col])
                };
                state.push(s);
                let rem = r - bound;
                artificials.push((i, rem.signum()));
                basis[i] = usize::MAX;
                beta[i] = rem.abs();
            }
        }
        let cols = n + m + artificials.len();
        for (k, &(i, s)) in artificials.iter().enumerate() {
            let col = n + m + k;
            a_cols.push(vec![(i, s)]);
            lower.push(0.0);
            upper.push(f64::INFINITY);
            kind.push(ColKind::Artificial);
            state.push(ColState::Basic);
            basis[i] = col;
        }

        // Build B^-1 A with B the initial basis (identity up to artificial signs).
        let mut t = vec![0.0; m * cols];
        let mut row_sign = vec![1.0; m];
        for &(i, s) in &artificials {
            row_sign[i] = s;
        }
        for (j, col) in a_cols.iter().enumerate() {
            for &(i, a) in col {
                t[i * cols + j] = a * row_sign[i];
            }
        }
        let rhs: Vec<f64> = lp.constraints.iter().map(|c| c.rhs).collect();

        let mut tab = Tableau {
            rows: m,
            cols,
            t,
            beta,
            basis,
            state,
            kind,
            lower,
            upper,
            cost: vec![0.0; cols],
            d: vec![0.0; cols],
            rhs,
            logical_of_row: (n..n + m).collect(),
        };
        let mut iters = 0usize;

        if !artificials.is_empty() {
            for k in 0..artificials.len() {
                tab.cost[n + m + k] = 1.0;
            }
            tab.compute_reduced_costs();
            tab.run_phase(self, false, &mut iters)?;
            tab.refine(&a_cols);
            let infeas: f64 = tab.values(cols)[n + m..].iter().sum();
            let scale = lp
                .constraints
                .iter()
                .map(|c| c.rhs.abs())
                .fold(1.0, f64::max);
            if infeas > TOL_FEAS * scale {
                return Ok(Solution {
                    status: Status::Infeasible,
                    objective: sign * f64::INFINITY,
                    values: tab.values(n),
                });
            }
            // Drive zero-valued artificials out of the basis where possible.
            let mut scratch = Vec::new();
            for r in 0..m {
                let b = tab.basis[r];
                if tab.kind[b] != ColKind::Artificial {
                    continue;
                }
                let q = (0..n + m)
                    .filter(|&j| tab.state[j] != ColState::Basic)
                    .max_by(|&a, &b| {
                        tab.at(r, a)
                            .abs()
                            .partial_cmp(&tab.at(r, b).abs())
                            .unwrap()
                            .then(b.cmp(&a))
                    });
                if let Some(q) = q {
                    if tab.at(r, q).abs() > 1e-7 {
                        let xq = tab.nonbasic_value(q);
                        tab.state[b] = ColState::AtLower;
                        tab.basis[r] = q;
                        tab.state[q] = ColState::Basic;
                        tab.beta[r] = xq;
                        tab.pivot(r, q, &mut scratch);
                    }
                }
            }
            for k in 0..artificials.len() {
                let col = n + m + k;
                tab.upper[col] = 0.0;
                tab.cost[col] = 0.0;
            }
        }

        for j in 0..n {
            tab.cost[j] = sign * lp.variables[j].cost;
        }
        tab.compute_reduced_costs();
        let end = tab.run_phase(self, true, &mut iters)?;
        tab.refine(&a_cols);
        let values = tab.values(n);
        Ok(match end {
            PhaseEnd::Unbounded => Solution {
                status: Status::Unbounded,
                objective: sign * f64::NEG_INFINITY,
                values,
            },
            PhaseEnd::Optimal => Solution {
                status: Status::Optimal,
                objective: lp.objective_value(&values),
                values,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_attained() {
        let mut lp = LinearProgram::new(Sense::Maximize);
        let x = lp.add_var("x", 0.0, 5.0, 1.0);
        let sol = lp.solve().unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert_eq!(sol.objective, 5.0);
        assert_eq!(sol[x], 5.0);
    }

    #[test]
    fn tight_covering_row() {
        let mut lp = LinearProgram::new(Sense::Minimize);
        let x = lp.add_var("x", 0.0, f64::INFINITY, 1.0);
        let y = lp.add_var("y", 0.0, f64::INFINITY, 1.0);
        lp.add_constraint([(x, 1.0), (y, 1.0)], Relation::Ge, 3.0);
        let sol = lp.solve().unwrap();
        assert!(sol.is_optimal());
        assert!((sol.objective - 3.0).abs() < 1e-12);
        assert!(lp.max_violation(&sol.values) <= TOL_FEAS);
    }

    #[test]
    fn reports_infeasible() {
        let mut lp = LinearProgram::new(Sense::Minimize);
        let x = lp.add_var("x", 0.0, 1.0, 1.0);
        lp.add_constraint([(x, 1.0)], Relation::Ge, 2.0);
        assert_eq!(lp.solve().unwrap().status, Status::Infeasible);
    }

    #[test]
    fn reports_unbounded() {
        let mut lp = LinearProgram::new(Sense::Maximize);
        let x = lp.add_var("x", 0.0, f64::INFINITY, 1.0);
        let y = lp.add_var("y", f64::NEG_INFINITY, f64::INFINITY, 0.0);
        lp.add_constraint([(x, 1.0), (y, -1.0)], Relation::Le, 1.0);
        assert_eq!(lp.solve().unwrap().status, Status::Unbounded);
    }

    #[test]
    fn free_variables_and_equalities() {
        // min |x - 2| style: x free, e >= x - 2, e >= 2 - x
        let mut lp = LinearProgram::new(Sense::Minimize);
        let x = lp.add_var("x", f64::NEG_INFINITY, f64::INFINITY, 0.0);
        let e = lp.add_var("e", 0.0, f64::INFINITY, 1.0);
        let z = lp.add_var("z", f64::NEG_INFINITY, f64::INFINITY, 0.0);
        lp.add_constraint([(e, 1.0), (x, -1.0)], Relation::Ge, -2.0);
        lp.add_constraint([(e, 1.0), (x, 1.0)], Relation::Ge, 2.0);
        lp.add_constraint([(z, 1.0), (x, 1.0)], Relation::Eq, 7.0);
        let sol = lp.solve().unwrap();
        assert!(sol.is_optimal());
        assert!(sol.objective.abs() < 1e-12);
        assert!((sol[x] - 2.0).abs() < 1e-9);
        assert!((sol[z] - 5.0).abs() < 1e-9);
    }

    #[test]
    fn redundant_equalities_are_tolerated() {
        let mut lp = LinearProgram::new(Sense::Minimize);
        let x = lp.add_var("x", 0.0, 10.0, 1.0);
        let y = lp.add_var("y", 0.0, 10.0, 2.0);
        lp.add_constraint([(x, 1.0), (y, 1.0)], Relation::Eq, 4.0);
        lp.add_constraint([(x, 2.0), (y, 2.0)], Relation::Eq, 8.0);
        let sol = lp.solve().unwrap();
        assert!(sol.is_optimal());
        assert!((sol.objective - 4.0).abs() < 1e-9);
    }

    #[test]
    fn classic_degenerate_cycling_example_terminates() {
        // Beale's example cycles under the textbook largest-coefficient rule.
        let mut lp = LinearProgram::new(Sense::Minimize);
        let x4 = lp.add_var("x4", 0.0, f64::INFINITY, -0.75);
        let x5 = lp.add_var("x5", 0.0, f64::INFINITY, 150.0);
        let x6 = lp.add_var("x6", 0.0, f64::INFINITY, -0.02);
        let x7 = lp.add_var("x7", 0.0, f64::INFINITY, 6.0);
        lp.add_constraint([(x4, 0.25), (x5, -60.0), (x6, -0.04), (x7, 9.0)], Relation::Le, 0.0);
        lp.add_constraint([(x4, 0.5), (x5, -90.0), (x6, -0.02), (x7, 3.0)], Relation::Le, 0.0);
        lp.add_constraint([(x6, 1.0)], Relation::Le, 1.0);
        let solver = Solver {
            degenerate_pivot_limit: 2,
            ..Solver::default()
        };
        let sol = solver.solve(&lp).unwrap();
        assert!(sol.is_optimal());
        assert!((sol.objective + 0.05).abs() < 1e-9);
    }

    #[test]
    fn malformed_programs_are_errors() {
        let mut lp = LinearProgram::new(Sense::Minimize);
        lp.add_var("x", 2.0, 1.0, 0.0);
        assert!(matches!(lp.solve(), Err(LpError::InvertedBounds { .. })));

        let mut other = LinearProgram::new(Sense::Minimize);
        let a = other.add_var("a", 0.0, 1.0, 0.0);
        let _b = other.add_var("b", 0.0, 1.0, 0.0);
        let mut lp = LinearProgram::new(Sense::Minimize);
        lp.add_var("x", 0.0, 1.0, 0.0);
        lp.add_constraint([(a, 1.0), (VarId(1), 1.0)], Relation::Le, 1.0);
        assert!(matches!(lp.solve(), Err(LpError::UnknownVariable { .. })));
    }

    #[test]
    fn lp_dump_is_exact() {
        let mut lp = LinearProgram::new(Sense::Minimize);
        let x = lp.add_var("x[1]", 0.1, f64::INFINITY, 0.30000000000000004);
        let y = lp.add_var("y", f64::NEG_INFINITY, f64::INFINITY, -2.0);
        lp.add_constraint([(x, 1.0), (y, -1.5)], Relation::Le, 7.25);
        let mut out = Vec::new();
        lp.write_lp(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.contains("obj: + 0.30000000000000004 x_1_ - 2 y"));
        assert!(text.contains("c0: + 1 x_1_ - 1.5 y <= 7.25"));
        assert!(text.contains("x_1_ >= 0.1"));
        assert!(text.contains("y free"));
    }

    #[test]
    fn solves_are_deterministic() {
        let mut lp = LinearProgram::new(Sense::Minimize);
        let v: Vec<VarId> = (0..5).map(|i| lp.add_var(format!("v{i}"), 0.0, 3.0, 1.0)).collect();
        lp.add_constraint(v.iter().map(|&x| (x, 1.0)), Relation::Ge, 4.0);
        let a = lp.solve().unwrap();
        let b = lp.solve().unwrap();
        assert_eq!(a, b);
    }
}
