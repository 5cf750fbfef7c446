//! Bounded-variable primal simplex returning basic (vertex) optimal solutions.
//!
//! Every rounding routine in this crate relies on the counting property of a
//! basic solution: the structural variables strictly between their bounds
//! are basic, so there are at most as many of them as linearly independent
//! tight rows. Interior-point output would not have that property.
//!
//! The engine is a dense tableau over `[structural | logical | artificial]`
//! columns. Each row carries one logical column (`a.x + s = b`, the bounds of
//! `s` encode the relation), so the logical block of the tableau is the basis
//! inverse and values can be recomputed from the original rows. Pivots skip
//! zero entries of the pivot row and column, which keeps assignment-shaped
//! problems cheap even though storage is dense.
//!
//! Pricing is Dantzig's rule with a switch to Bland's rule after a run of
//! degenerate pivots; the switch stays on until a pivot makes progress, which
//! rules out cycling. Ties are broken by lowest column index in Bland mode.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::instance::TOL;

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const PRIMAL_TOL: f64 = 1e-9;
const DEGENERATE_RUN: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(v, c)| c * x[v]).sum()
    }

    pub fn is_satisfied(&self, x: &[f64], tol: f64) -> bool {
        let a = self.activity(x);
        match self.relation {
            Relation::Le => a <= self.rhs + tol,
            Relation::Ge => a >= self.rhs - tol,
            Relation::Eq => (a - self.rhs).abs() <= tol,
        }
    }

    pub fn is_tight(&self, x: &[f64], tol: f64) -> bool {
        (self.activity(x) - self.rhs).abs() <= tol
    }
}

/// A linear program over bounded variables.
///
/// `var_origin`/`row_origin` record ids in the problem this one was reduced
/// from, so callers can map a reduced problem back to edges and rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    lower: Vec<f64>,
    upper: Vec<f64>,
    objective: Vec<f64>,
    sense: Sense,
    constant: f64,
    rows: Vec<Constraint>,
    var_origin: Vec<usize>,
    row_origin: Vec<usize>,
    hint: Option<Vec<f64>>,
}

impl LpProblem {
    /// `n_vars` variables in `[0, 1]` with zero objective.
    pub fn new(n_vars: usize, sense: Sense) -> Self {
        LpProblem {
            lower: vec![0.0; n_vars],
            upper: vec![1.0; n_vars],
            objective: vec![0.0; n_vars],
            sense,
            constant: 0.0,
            rows: Vec::new(),
            var_origin: (0..n_vars).collect(),
            row_origin: Vec::new(),
            hint: None,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.lower.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Constraint] {
        &self.rows
    }

    pub fn row(&self, r: usize) -> &Constraint {
        &self.rows[r]
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn var_origin(&self) -> &[usize] {
        &self.var_origin
    }

    pub fn row_origin(&self) -> &[usize] {
        &self.row_origin
    }

    /// Appends a variable and returns its index.
    pub fn add_var(&mut self, lo: f64, hi: f64, cost: f64) -> usize {
        let id = self.lower.len();
        self.lower.push(lo);
        self.upper.push(hi);
        self.objective.push(cost);
        self.var_origin.push(id);
        if let Some(h) = &mut self.hint {
            h.push(lo);
        }
        id
    }

    pub fn set_bounds(&mut self, var: usize, lo: f64, hi: f64) {
        self.lower[var] = lo;
        self.upper[var] = hi;
    }

    pub fn set_cost(&mut self, var: usize, cost: f64) {
        self.objective[var] = cost;
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) -> usize {
        let id = self.rows.len();
        self.rows.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
        let origin = self.row_origin.iter().max().map_or(0, |m| m + 1);
        self.row_origin.push(origin);
        id
    }

    /// Starting point used to place nonbasic variables at a bound.
    pub fn with_hint(mut self, hint: Vec<f64>) -> Self {
        self.hint = Some(hint);
        self
    }

    pub fn set_hint(&mut self, hint: Option<Vec<f64>>) {
        self.hint = hint;
    }

    pub fn hint(&self) -> Option<&[f64]> {
        self.hint.as_deref()
    }

    /// Copy keeping only the rows whose origin satisfies `keep`.
    pub fn retain_rows(&self, keep: impl Fn(usize) -> bool) -> LpProblem {
        let mut out = self.clone();
        out.rows.clear();
        out.row_origin.clear();
        for (row, &o) in self.rows.iter().zip(&self.row_origin) {
            if keep(o) {
                out.rows.push(row.clone());
                out.row_origin.push(o);
            }
        }
        out
    }

    pub fn check(&self) -> Result<()> {
        for v in 0..self.n_vars() {
            let (lo, hi) = (self.lower[v], self.upper[v]);
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::invalid("bounds", format!("variable {v}: [{lo}, {hi}]")));
            }
            if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
                return Err(Error::invalid("bounds", format!("variable {v} is free")));
            }
        }
        for (r, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(Error::invalid("rows", format!("row {r}: rhs not finite")));
            }
            if let Some(&(v, _)) = row.coeffs.iter().find(|(v, c)| *v >= self.n_vars() || !c.is_finite()) {
                return Err(Error::invalid("rows", format!("row {r}: bad entry for variable {v}")));
            }
        }
        if let Some(h) = &self.hint {
            if h.len() != self.n_vars() {
                return Err(Error::DimensionMismatch {
                    what: "hint",
                    expected: self.n_vars(),
                    found: h.len(),
                });
            }
        }
        Ok(())
    }

    /// Substitutes `var = value` everywhere and removes the variable.
    pub fn fix_variable(&self, var: usize, value: f64) -> Result<LpProblem> {
        self.fix_variables(&[(var, value)])
    }

    /// Substitutes several fixings at once. Rows left without variables are
    /// dropped when satisfied within [`TOL`] and kept (as a contradiction)
    /// otherwise, so an infeasible reduction is reported by the next solve.
    pub fn fix_variables(&self, fixes: &[(usize, f64)]) -> Result<LpProblem> {
        let n = self.n_vars();
        let mut fixed: Vec<Option<f64>> = vec![None; n];
        for &(v, val) in fixes {
            if v >= n {
                return Err(Error::invalid("var", format!("variable {v} out of range")));
            }
            if val < self.lower[v] - 1e-12 || val > self.upper[v] + 1e-12 {
                return Err(Error::invalid(
                    "value",
                    format!("{val} outside [{}, {}] for variable {v}", self.lower[v], self.upper[v]),
                ));
            }
            fixed[v] = Some(val);
        }
        let mut new_index = vec![usize::MAX; n];
        let mut out = LpProblem {
            lower: Vec::new(),
            upper: Vec::new(),
            objective: Vec::new(),
            sense: self.sense,
            constant: self.constant,
            rows: Vec::new(),
            var_origin: Vec::new(),
            row_origin: Vec::new(),
            hint: self.hint.as_ref().map(|_| Vec::new()),
        };
        for v in 0..n {
            match fixed[v] {
                Some(val) => out.constant += self.objective[v] * val,
                None => {
                    new_index[v] = out.lower.len();
                    out.lower.push(self.lower[v]);
                    out.upper.push(self.upper[v]);
                    out.objective.push(self.objective[v]);
                    out.var_origin.push(self.var_origin[v]);
                    if let (Some(h), Some(src)) = (&mut out.hint, &self.hint) {
                        h.push(src[v]);
                    }
                }
            }
        }
        for (r, row) in self.rows.iter().enumerate() {
            let mut rhs = row.rhs;
            let mut coeffs = Vec::with_capacity(row.coeffs.len());
            for &(v, c) in &row.coeffs {
                match fixed[v] {
                    Some(val) => rhs -= c * val,
                    None => coeffs.push((new_index[v], c)),
                }
            }
            let reduced = Constraint {
                coeffs,
                relation: row.relation,
                rhs,
            };
            if reduced.coeffs.is_empty() && reduced.is_satisfied(&[], TOL) {
                continue;
            }
            out.rows.push(reduced);
            out.row_origin.push(self.row_origin[r]);
        }
        Ok(out)
    }

    /// CPLEX-style LP text, for cross-checking with an external solver.
    pub fn to_lp_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{}",
            if self.sense == Sense::Maximize { "Maximize" } else { "Minimize" }
        );
        let _ = write!(s, " obj:");
        for (v, &c) in self.objective.iter().enumerate() {
            if c != 0.0 {
                let _ = write!(s, " {:+} x{}", c, v);
            }
        }
        let _ = writeln!(s, "\nSubject To");
        for (r, row) in self.rows.iter().enumerate() {
            let _ = write!(s, " r{}:", r);
            for &(v, c) in &row.coeffs {
                let _ = write!(s, " {:+} x{}", c, v);
            }
            let rel = match row.relation {
                Relation::Le => "<=",
                Relation::Ge => ">=",
                Relation::Eq => "=",
            };
            let _ = writeln!(s, " {} {}", rel, row.rhs);
        }
        let _ = writeln!(s, "Bounds");
        for v in 0..self.n_vars() {
            let _ = writeln!(s, " {} <= x{} <= {}", fmt_bound(self.lower[v]), v, fmt_bound(self.upper[v]));
        }
        let _ = writeln!(s, "End");
        s
    }
}

fn fmt_bound(b: f64) -> String {
    if b == f64::INFINITY {
        "+inf".into()
    } else if b == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{b}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarStatus {
    AtLower,
    AtUpper,
    Basic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VertexSolution {
    pub values: Vec<f64>,
    /// Objective in the problem's own sense, including its constant.
    pub objective: f64,
    pub status: Vec<VarStatus>,
    pub row_tight: Vec<bool>,
    pub pivots: usize,
}

impl VertexSolution {
    /// Variables strictly inside `(lo + TOL, hi - TOL)`.
    pub fn interior_vars(&self, p: &LpProblem) -> Vec<usize> {
        (0..self.values.len())
            .filter(|&v| self.values[v] > p.lower[v] + TOL && self.values[v] < p.upper[v] - TOL)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal(VertexSolution),
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn optimal(self) -> Result<VertexSolution> {
        match self {
            LpOutcome::Optimal(s) => Ok(s),
            LpOutcome::Infeasible => Err(Error::Infeasible("linear program".into())),
            LpOutcome::Unbounded => Err(Error::Unbounded),
        }
    }
}

/// Solves `p` to a basic optimal solution. Identical inputs give identical outputs.
pub fn solve_vertex(p: &LpProblem) -> Result<LpOutcome> {
    p.check()?;
    let mut t = Tableau::new(p);
    match t.primal()? {
        Phase::Infeasible => return Ok(LpOutcome::Infeasible),
        Phase::Unbounded => return Ok(LpOutcome::Unbounded),
        Phase::Optimal => {}
    }
    Ok(LpOutcome::Optimal(t.solution(p)))
}

pub(crate) enum Phase {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Dense bounded-variable simplex tableau.
pub(crate) struct Tableau {
    m: usize,
    n: usize,
    width: usize,
    a: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    at_upper: Vec<bool>,
    basis: Vec<usize>,
    row_of: Vec<usize>,
    /// Minimization costs over all columns.
    cost: Vec<f64>,
    d: Vec<f64>,
    d1: Vec<f64>,
    n_art: usize,
    art_row: Vec<usize>,
    art_sign: Vec<f64>,
    rows: Vec<Constraint>,
    pub pivots: usize,
    scratch: Vec<usize>,
    /// Bound violation the dual simplex leaves alone.
    pub dual_tol: f64,
}

const NONBASIC: usize = usize::MAX;

impl Tableau {
    pub fn new(p: &LpProblem) -> Self {
        let m = p.n_rows();
        let n = p.n_vars();
        let sign = if p.sense == Sense::Maximize { -1.0 } else { 1.0 };

        let mut x = vec![0.0; n + m];
        let mut at_upper = vec![false; n + m];
        let mut lo: Vec<f64> = p.lower.clone();
        let mut hi: Vec<f64> = p.upper.clone();
        for v in 0..n {
            let want_upper = match &p.hint {
                Some(h) if hi[v].is_finite() => {
                    !lo[v].is_finite() || h[v] >= 0.5 * (lo[v] + hi[v])
                }
                _ => !lo[v].is_finite(),
            };
            if want_upper {
                x[v] = hi[v];
                at_upper[v] = true;
            } else {
                x[v] = lo[v];
            }
        }
        for row in &p.rows {
            let (l, h) = match row.relation {
                Relation::Le => (0.0, f64::INFINITY),
                Relation::Ge => (f64::NEG_INFINITY, 0.0),
                Relation::Eq => (0.0, 0.0),
            };
            lo.push(l);
            hi.push(h);
        }

        // Decide per row: logical basic, or logical at a bound plus an artificial.
        let mut art_row = Vec::new();
        let mut art_sign = Vec::new();
        let mut basic_col = vec![0usize; m];
        let mut residual = vec![0.0; m];
        for (r, row) in p.rows.iter().enumerate() {
            let res = row.rhs - row.activity(&x);
            let s = n + r;
            if res >= lo[s] - PRIMAL_TOL && res <= hi[s] + PRIMAL_TOL {
                x[s] = res.clamp(lo[s], hi[s]);
                basic_col[r] = s;
            } else {
                let v = res.clamp(lo[s], hi[s]);
                x[s] = v;
                at_upper[s] = v == hi[s] && lo[s] != hi[s];
                residual[r] = res - v;
                basic_col[r] = usize::MAX;
                art_row.push(r);
                art_sign.push(if res - v < 0.0 { -1.0 } else { 1.0 });
            }
        }
        let n_art = art_row.len();
        let width = n + m + n_art;
        lo.extend(std::iter::repeat(0.0).take(n_art));
        hi.extend(std::iter::repeat(f64::INFINITY).take(n_art));
        x.resize(width, 0.0);
        at_upper.resize(width, false);
        let mut row_flip = vec![1.0; m];
        for (k, &r) in art_row.iter().enumerate() {
            let col = n + m + k;
            basic_col[r] = col;
            x[col] = residual[r].abs();
            row_flip[r] = art_sign[k];
        }

        let mut a = vec![0.0; m * width];
        for (r, row) in p.rows.iter().enumerate() {
            let f = row_flip[r];
            let base = r * width;
            for &(v, c) in &row.coeffs {
                a[base + v] += f * c;
            }
            a[base + n + r] = f;
        }
        for (k, &r) in art_row.iter().enumerate() {
            a[r * width + n + m + k] = 1.0;
        }

        let mut cost = vec![0.0; width];
        for v in 0..n {
            cost[v] = sign * p.objective[v];
        }
        let mut row_of = vec![NONBASIC; width];
        for (r, &c) in basic_col.iter().enumerate() {
            row_of[c] = r;
        }
        let mut d = cost.clone();
        let mut d1 = vec![0.0; width];
        for k in 0..n_art {
            d1[n + m + k] = 1.0;
        }
        for &r in &art_row {
            let base = r * width;
            for j in 0..width {
                d1[j] -= a[base + j];
            }
        }
        for &c in &basic_col {
            d[c] = 0.0;
            d1[c] = 0.0;
        }

        Tableau {
            m,
            n,
            width,
            a,
            lo,
            hi,
            x,
            at_upper,
            basis: basic_col,
            row_of,
            cost,
            d,
            d1,
            n_art,
            art_row,
            art_sign,
            rows: p.rows.clone(),
            pivots: 0,
            scratch: Vec::new(),
            dual_tol: PRIMAL_TOL * 10.0,
        }
    }

    fn iteration_cap(&self) -> usize {
        50 * (self.m + self.width) + 10_000
    }

    pub fn primal(&mut self) -> Result<Phase> {
        if self.n_art > 0 {
            match self.run_primal(true)? {
                Phase::Unbounded => return Err(Error::Internal("phase one unbounded".into())),
                _ => {}
            }
            let infeas: f64 = (0..self.n_art).map(|k| self.x[self.n + self.m + k]).sum();
            let scale = 1.0 + self.rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
            if infeas > TOL * scale {
                return Ok(Phase::Infeasible);
            }
            self.retire_artificials();
        }
        self.run_primal(false)
    }

    /// Clamps artificials to zero and pivots basic ones out where possible.
    fn retire_artificials(&mut self) {
        let first = self.n + self.m;
        for k in 0..self.n_art {
            let col = first + k;
            self.hi[col] = 0.0;
            self.x[col] = 0.0;
            self.at_upper[col] = false;
        }
        for k in 0..self.n_art {
            let col = first + k;
            let r = self.row_of[col];
            if r == NONBASIC {
                continue;
            }
            let base = r * self.width;
            let candidate = (0..first)
                .filter(|&j| self.row_of[j] == NONBASIC && self.lo[j] < self.hi[j])
                .max_by(|&p, &q| {
                    self.a[base + p]
                        .abs()
                        .partial_cmp(&self.a[base + q].abs())
                        .unwrap()
                        .then(q.cmp(&p))
                });
            if let Some(j) = candidate {
                if self.a[base + j].abs() > 1e-7 {
                    self.pivot(r, j);
                }
            }
        }
    }

    fn run_primal(&mut self, phase_one: bool) -> Result<Phase> {
        let cap = self.iteration_cap();
        let mut degenerate = 0usize;
        let mut bland = false;
        for _ in 0..cap {
            let Some((q, dir)) = self.choose_entering(phase_one, bland) else {
                return Ok(Phase::Optimal);
            };
            let (theta, leave) = self.ratio_test(q, dir, bland);
            if theta.is_infinite() {
                return Ok(Phase::Unbounded);
            }
            self.apply_step(q, dir, theta, leave);
            if theta <= 1e-12 {
                degenerate += 1;
                if degenerate >= DEGENERATE_RUN {
                    bland = true;
                }
            } else {
                degenerate = 0;
                bland = false;
            }
        }
        Err(Error::Internal(format!("simplex exceeded {cap} iterations")))
    }

    fn choose_entering(&self, phase_one: bool, bland: bool) -> Option<(usize, f64)> {
        let d = if phase_one { &self.d1 } else { &self.d };
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..self.width {
            if self.row_of[j] != NONBASIC || self.lo[j] >= self.hi[j] {
                continue;
            }
            let dj = d[j];
            let dir = if !self.at_upper[j] && dj < -COST_TOL {
                1.0
            } else if self.at_upper[j] && dj > COST_TOL {
                -1.0
            } else {
                continue;
            };
            if bland {
                return Some((j, dir));
            }
            if dj.abs() > best_score {
                best_score = dj.abs();
                best = Some((j, dir));
            }
        }
        best
    }

    /// Returns the step length and the leaving row (`None` for a bound flip).
    fn ratio_test(&self, q: usize, dir: f64, bland: bool) -> (f64, Option<usize>) {
        let mut theta = self.hi[q] - self.lo[q];
        let mut leave: Option<usize> = None;
        let mut leave_alpha = 0.0;
        for r in 0..self.m {
            let alpha = self.a[r * self.width + q];
            if alpha.abs() < PIVOT_TOL {
                continue;
            }
            let b = self.basis[r];
            let delta = -dir * alpha;
            let limit = if delta < 0.0 {
                if self.lo[b] == f64::NEG_INFINITY {
                    continue;
                }
                ((self.x[b] - self.lo[b]) / -delta).max(0.0)
            } else {
                if self.hi[b] == f64::INFINITY {
                    continue;
                }
                ((self.hi[b] - self.x[b]) / delta).max(0.0)
            };
            let better = if limit < theta - 1e-12 {
                true
            } else if limit <= theta + 1e-12 {
                match leave {
                    None => false,
                    Some(cur) => {
                        if bland {
                            b < self.basis[cur]
                        } else {
                            alpha.abs() > leave_alpha
                        }
                    }
                }
            } else {
                false
            };
            if better {
                theta = limit;
                leave = Some(r);
                leave_alpha = alpha.abs();
            }
        }
        (theta, leave)
    }

    fn apply_step(&mut self, q: usize, dir: f64, theta: f64, leave: Option<usize>) {
        if theta > 0.0 {
            for r in 0..self.m {
                let alpha = self.a[r * self.width + q];
                if alpha != 0.0 {
                    let b = self.basis[r];
                    self.x[b] -= dir * alpha * theta;
                }
            }
            self.x[q] += dir * theta;
        }
        match leave {
            None => {
                self.at_upper[q] = dir > 0.0;
                self.x[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
            }
            Some(r) => {
                let b = self.basis[r];
                let alpha = self.a[r * self.width + q];
                let to_upper = -dir * alpha > 0.0;
                self.x[b] = if to_upper { self.hi[b] } else { self.lo[b] };
                self.at_upper[b] = to_upper && self.lo[b] != self.hi[b];
                self.pivot(r, q);
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        self.pivots += 1;
        let w = self.width;
        let base = r * w;
        let inv = 1.0 / self.a[base + q];
        let mut nz = std::mem::take(&mut self.scratch);
        nz.clear();
        for j in 0..w {
            let v = self.a[base + j];
            if v != 0.0 {
                self.a[base + j] = v * inv;
                nz.push(j);
            }
        }
        self.a[base + q] = 1.0;
        let (before, rest) = self.a.split_at_mut(base);
        let (prow, after) = rest.split_at_mut(w);
        for chunk in before.chunks_exact_mut(w).chain(after.chunks_exact_mut(w)) {
            let f = chunk[q];
            if f != 0.0 {
                for &j in &nz {
                    chunk[j] -= f * prow[j];
                }
                chunk[q] = 0.0;
            }
        }
        for d in [&mut self.d, &mut self.d1] {
            let f = d[q];
            if f != 0.0 {
                for &j in &nz {
                    d[j] -= f * prow[j];
                }
                d[q] = 0.0;
            }
        }
        self.scratch = nz;
        let old = self.basis[r];
        self.row_of[old] = NONBASIC;
        self.row_of[q] = r;
        self.basis[r] = q;
    }

    /// Recomputes basic values from the original rows through the basis
    /// inverse held in the logical block.
    pub fn refresh_values(&mut self) {
        let (n, m) = (self.n, self.m);
        let mut residual = vec![0.0; m];
        for (r, row) in self.rows.iter().enumerate() {
            let mut res = row.rhs;
            for &(v, c) in &row.coeffs {
                if self.row_of[v] == NONBASIC {
                    res -= c * self.x[v];
                }
            }
            if self.row_of[n + r] == NONBASIC {
                res -= self.x[n + r];
            }
            residual[r] = res;
        }
        for (k, &r) in self.art_row.iter().enumerate() {
            let col = n + m + k;
            if self.row_of[col] == NONBASIC {
                residual[r] -= self.art_sign[k] * self.x[col];
            }
        }
        for r in 0..m {
            let base = r * self.width + n;
            let mut v = 0.0;
            for i in 0..m {
                let t = self.a[base + i];
                if t != 0.0 {
                    v += t * residual[i];
                }
            }
            self.x[self.basis[r]] = v;
        }
    }

    /// Changes the bounds of a structural column, keeping dual feasibility
    /// when the column is nonbasic. Values of basic columns may become
    /// infeasible; call [`Tableau::dual`] afterwards.
    pub fn set_bounds(&mut self, col: usize, lo: f64, hi: f64) {
        self.lo[col] = lo;
        self.hi[col] = hi;
        if self.row_of[col] != NONBASIC {
            return;
        }
        let upper = if lo == hi {
            false
        } else if self.d[col] < 0.0 {
            hi.is_finite()
        } else {
            !lo.is_finite()
        };
        let new = if upper { hi } else { lo };
        let delta = new - self.x[col];
        self.at_upper[col] = upper;
        self.x[col] = new;
        if delta != 0.0 {
            for r in 0..self.m {
                let alpha = self.a[r * self.width + col];
                if alpha != 0.0 {
                    let b = self.basis[r];
                    self.x[b] -= alpha * delta;
                }
            }
        }
    }

    /// Appends a row with its logical basic. The basis stays dual feasible, so
    /// a violated row is repaired by [`Tableau::dual`]. Returns the row index.
    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) -> usize {
        let (n, m, w) = (self.n, self.m, self.width);
        let s = n + m;
        let nw = w + 1;
        // Insert the new logical column at `s`, ahead of the artificials.
        let mut a = vec![0.0; (m + 1) * nw];
        for r in 0..m {
            let (src, dst) = (r * w, r * nw);
            a[dst..dst + s].copy_from_slice(&self.a[src..src + s]);
            a[dst + s + 1..dst + nw].copy_from_slice(&self.a[src + s..src + w]);
        }
        let shift = |c: usize| if c >= s { c + 1 } else { c };
        for b in &mut self.basis {
            *b = shift(*b);
        }
        let (lo, hi) = match relation {
            Relation::Le => (0.0, f64::INFINITY),
            Relation::Ge => (f64::NEG_INFINITY, 0.0),
            Relation::Eq => (0.0, 0.0),
        };
        self.lo.insert(s, lo);
        self.hi.insert(s, hi);
        self.at_upper.insert(s, false);
        self.cost.insert(s, 0.0);
        self.d.insert(s, 0.0);
        self.d1.insert(s, 0.0);
        self.row_of.insert(s, m);
        self.basis.push(s);

        let base = m * nw;
        let mut activity = 0.0;
        for &(v, c) in &coeffs {
            a[base + v] += c;
            activity += c * self.x[v];
        }
        a[base + s] = 1.0;
        for &(v, c) in &coeffs {
            let r = self.row_of[v];
            if r == NONBASIC || c == 0.0 {
                continue;
            }
            let f = a[base + v];
            if f == 0.0 {
                continue;
            }
            let (head, tail) = a.split_at_mut(base);
            let src = &head[r * nw..r * nw + nw];
            for (dst, &t) in tail.iter_mut().zip(src) {
                *dst -= f * t;
            }
            tail[v] = 0.0;
        }
        self.x.insert(s, rhs - activity);
        self.a = a;
        self.width = nw;
        self.m = m + 1;
        self.rows.push(Constraint { coeffs, relation, rhs });
        m
    }

    /// Dual simplex from a dual-feasible basis. Returns `Infeasible` when some
    /// row cannot be repaired.
    pub fn dual(&mut self) -> Result<Phase> {
        let cap = self.iteration_cap();
        for _ in 0..cap {
            let mut leave = None;
            let mut worst = self.dual_tol;
            for r in 0..self.m {
                let b = self.basis[r];
                let viol = (self.lo[b] - self.x[b]).max(self.x[b] - self.hi[b]);
                if viol > worst {
                    worst = viol;
                    leave = Some(r);
                }
            }
            let Some(r) = leave else {
                return Ok(Phase::Optimal);
            };
            let b = self.basis[r];
            let below = self.x[b] < self.lo[b];
            let base = r * self.width;
            // Two-pass Harris test: bound the ratio with relaxed reduced costs,
            // then take the largest pivot under that bound.
            let mut candidates = std::mem::take(&mut self.scratch);
            candidates.clear();
            let mut bound = f64::INFINITY;
            for j in 0..self.width {
                if self.row_of[j] != NONBASIC || self.lo[j] >= self.hi[j] {
                    continue;
                }
                let alpha = self.a[base + j];
                if alpha.abs() < PIVOT_TOL {
                    continue;
                }
                let dir = if self.at_upper[j] { -1.0 } else { 1.0 };
                // Moving j by dir changes x_b by -alpha*dir.
                let effect = -alpha * dir;
                if (below && effect <= 0.0) || (!below && effect >= 0.0) {
                    continue;
                }
                let dj = (self.d[j] * dir).max(0.0);
                bound = bound.min((dj + COST_TOL) / alpha.abs());
                candidates.push(j);
            }
            let mut best: Option<(usize, f64)> = None;
            let mut best_alpha = 0.0;
            for &j in &candidates {
                let alpha = self.a[base + j].abs();
                let dir = if self.at_upper[j] { -1.0 } else { 1.0 };
                let dj = (self.d[j] * dir).max(0.0);
                if dj / alpha <= bound && alpha > best_alpha {
                    best_alpha = alpha;
                    best = Some((j, dir));
                }
            }
            self.scratch = candidates;
            let Some((q, dir)) = best else {
                return Ok(Phase::Infeasible);
            };
            let target = if below { self.lo[b] } else { self.hi[b] };
            let alpha = self.a[base + q];
            let theta = (target - self.x[b]) / (-alpha * dir);
            for rr in 0..self.m {
                let al = self.a[rr * self.width + q];
                if al != 0.0 {
                    let bb = self.basis[rr];
                    self.x[bb] -= dir * al * theta;
                }
            }
            self.x[q] += dir * theta;
            self.x[b] = target;
            self.at_upper[b] = !below && self.lo[b] != self.hi[b];
            self.pivot(r, q);
        }
        Err(Error::Internal(format!("dual simplex exceeded {cap} iterations")))
    }

    pub fn objective(&self) -> f64 {
        (0..self.n).map(|v| self.cost[v] * self.x[v]).sum()
    }

    pub fn values(&self) -> &[f64] {
        &self.x[..self.n]
    }

    pub fn solution(&mut self, p: &LpProblem) -> VertexSolution {
        self.refresh_values();
        let n = self.n;
        let mut values = self.x[..n].to_vec();
        for v in 0..n {
            if self.row_of[v] != NONBASIC {
                if (values[v] - p.lower[v]).abs() <= 1e-9 {
                    values[v] = p.lower[v];
                } else if (values[v] - p.upper[v]).abs() <= 1e-9 {
                    values[v] = p.upper[v];
                }
            }
        }
        let status = (0..n)
            .map(|v| {
                if self.row_of[v] != NONBASIC {
                    VarStatus::Basic
                } else if self.at_upper[v] {
                    VarStatus::AtUpper
                } else {
                    VarStatus::AtLower
                }
            })
            .collect();
        let objective = p.constant
            + values
                .iter()
                .zip(&p.objective)
                .map(|(x, c)| x * c)
                .sum::<f64>();
        let row_tight = p.rows.iter().map(|r| r.is_tight(&values, TOL)).collect();
        VertexSolution {
            values,
            objective,
            status,
            row_tight,
            pivots: self.pivots,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bound_only_lp() {
        let mut p = LpProblem::new(1, Sense::Maximize);
        p.set_cost(0, 1.0);
        let s = solve_vertex(&p).unwrap().optimal().unwrap();
        assert_eq!(s.values, vec![1.0]);
        assert_eq!(s.status, vec![VarStatus::AtUpper]);
    }

    #[test]
    fn single_row_lp_is_vertex() {
        let mut p = LpProblem::new(2, Sense::Maximize);
        p.set_cost(0, 1.0);
        p.set_cost(1, 1.0);
        p.add_row(vec![(0, 1.0), (1, 1.0)], Relation::Le, 1.0);
        let s = solve_vertex(&p).unwrap().optimal().unwrap();
        assert!((s.objective - 1.0).abs() < 1e-12);
        assert!(s.row_tight[0]);
        assert!(s.values.iter().any(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn infeasible_and_unbounded_are_outcomes() {
        let mut p = LpProblem::new(1, Sense::Minimize);
        p.add_row(vec![(0, 1.0)], Relation::Ge, 2.0);
        assert_eq!(solve_vertex(&p).unwrap(), LpOutcome::Infeasible);

        let mut q = LpProblem::new(1, Sense::Maximize);
        q.set_bounds(0, 0.0, f64::INFINITY);
        q.set_cost(0, 1.0);
        assert_eq!(solve_vertex(&q).unwrap(), LpOutcome::Unbounded);
    }

    #[test]
    fn equality_rows_need_phase_one() {
        // x + y = 1.5, x - y = 0.5 -> x = 1, y = 0.5
        let mut p = LpProblem::new(2, Sense::Minimize);
        p.add_row(vec![(0, 1.0), (1, 1.0)], Relation::Eq, 1.5);
        p.add_row(vec![(0, 1.0), (1, -1.0)], Relation::Eq, 0.5);
        let s = solve_vertex(&p).unwrap().optimal().unwrap();
        assert!((s.values[0] - 1.0).abs() < 1e-12 && (s.values[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fix_with_zero_coefficients_leaves_rows() {
        let mut p = LpProblem::new(3, Sense::Maximize);
        p.add_row(vec![(0, 1.0), (1, 2.0)], Relation::Le, 2.0);
        let q = p.fix_variable(2, 1.0).unwrap();
        assert_eq!(q.rows(), p.rows());
        assert_eq!(q.var_origin(), &[0, 1]);
    }

    #[test]
    fn fix_substitutes_into_rhs() {
        let mut p = LpProblem::new(2, Sense::Maximize);
        p.set_bounds(0, 0.0, 2.0);
        p.set_bounds(1, 0.0, 2.0);
        p.add_row(vec![(0, 1.0), (1, 1.0)], Relation::Le, 2.0);
        let q = p.fix_variable(0, 1.0).unwrap();
        assert_eq!(q.row(0).coeffs, vec![(0, 1.0)]);
        assert_eq!(q.row(0).rhs, 1.0);
        assert!(p.fix_variable(0, 3.0).is_err());
    }

    #[test]
    fn lp_text_dump_mentions_rows() {
        let mut p = LpProblem::new(2, Sense::Minimize);
        p.add_row(vec![(0, 1.0), (1, 1.0)], Relation::Ge, 1.0);
        let t = p.to_lp_text();
        assert!(t.contains("r0:") && t.contains(">= 1"));
    }

    fn random_lp(rng: &mut ChaCha8Rng, n: usize, m: usize) -> LpProblem {
        let sense = if rng.gen_bool(0.5) { Sense::Maximize } else { Sense::Minimize };
        let mut p = LpProblem::new(n, sense);
        for v in 0..n {
            let lo = rng.gen_range(-1..=0) as f64;
            let hi = lo + rng.gen_range(1..=3) as f64;
            p.set_bounds(v, lo, hi);
            p.set_cost(v, rng.gen_range(-3..=3) as f64);
        }
        for _ in 0..m {
            let mut coeffs = Vec::new();
            for v in 0..n {
                if rng.gen_bool(0.7) {
                    coeffs.push((v, rng.gen_range(-3..=3) as f64));
                }
            }
            let rel = match rng.gen_range(0..3) {
                0 => Relation::Le,
                1 => Relation::Ge,
                _ => Relation::Eq,
            };
            p.add_row(coeffs, rel, rng.gen_range(-2..=3) as f64);
        }
        p
    }

    /// Dense Gaussian elimination with partial pivoting; `None` if singular.
    fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
        let n = b.len();
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| a[i][c].abs().partial_cmp(&a[j][c].abs()).unwrap())?;
            if a[p][c].abs() < 1e-10 {
                return None;
            }
            a.swap(c, p);
            b.swap(c, p);
            for r in 0..n {
                if r != c {
                    let f = a[r][c] / a[c][c];
                    for k in c..n {
                        a[r][k] -= f * a[c][k];
                    }
                    b[r] -= f * b[c];
                }
            }
        }
        Some((0..n).map(|i| b[i] / a[i][i]).collect())
    }

    fn rank(mut rows: Vec<Vec<f64>>) -> usize {
        let cols = rows.first().map_or(0, Vec::len);
        let mut rank = 0;
        for c in 0..cols {
            let Some(p) = (rank..rows.len()).find(|&r| rows[r][c].abs() > 1e-9) else {
                continue;
            };
            rows.swap(rank, p);
            for r in 0..rows.len() {
                if r != rank {
                    let f = rows[r][c] / rows[rank][c];
                    for k in 0..cols {
                        rows[r][k] -= f * rows[rank][k];
                    }
                }
            }
            rank += 1;
        }
        rank
    }

    /// Best objective over all basic solutions, by enumerating active sets.
    fn vertex_enumeration(p: &LpProblem) -> Option<f64> {
        let n = p.n_vars();
        let mut cands: Vec<(Vec<f64>, f64)> = Vec::new();
        for row in p.rows() {
            let mut dense = vec![0.0; n];
            for &(v, c) in &row.coeffs {
                dense[v] += c;
            }
            cands.push((dense, row.rhs));
        }
        for v in 0..n {
            let mut e = vec![0.0; n];
            e[v] = 1.0;
            cands.push((e.clone(), p.lower()[v]));
            cands.push((e, p.upper()[v]));
        }
        let k = cands.len();
        let mut best: Option<f64> = None;
        let mut idx: Vec<usize> = (0..n).collect();
        loop {
            let a = idx.iter().map(|&i| cands[i].0.clone()).collect();
            let b = idx.iter().map(|&i| cands[i].1).collect();
            if let Some(x) = solve_dense(a, b) {
                let feasible = (0..n).all(|v| x[v] >= p.lower()[v] - 1e-9 && x[v] <= p.upper()[v] + 1e-9)
                    && p.rows().iter().all(|r| r.is_satisfied(&x, 1e-9));
                if feasible {
                    let obj: f64 = x.iter().zip(p.objective()).map(|(a, b)| a * b).sum();
                    best = Some(match (best, p.sense()) {
                        (None, _) => obj,
                        (Some(b), Sense::Maximize) => b.max(obj),
                        (Some(b), Sense::Minimize) => b.min(obj),
                    });
                }
            }
            // next combination
            let mut i = n;
            loop {
                if i == 0 {
                    return best;
                }
                i -= 1;
                if idx[i] < k - n + i {
                    idx[i] += 1;
                    for j in i + 1..n {
                        idx[j] = idx[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    #[test]
    fn matches_vertex_enumeration_on_random_lps() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut optimal = 0;
        for case in 0..300 {
            let p = random_lp(&mut rng, 6, 4);
            let oracle = vertex_enumeration(&p);
            match (solve_vertex(&p).unwrap(), oracle) {
                (LpOutcome::Optimal(s), Some(best)) => {
                    optimal += 1;
                    assert!((s.objective - best).abs() < 1e-6, "case {case}: {} vs {best}", s.objective);
                    for r in p.rows() {
                        assert!(r.is_satisfied(&s.values, 1e-7));
                    }
                    for v in 0..6 {
                        assert!(s.values[v] >= p.lower()[v] - 1e-9 && s.values[v] <= p.upper()[v] + 1e-9);
                    }
                    // Vertex: tight rows + tight bounds span R^n.
                    let mut active: Vec<Vec<f64>> = Vec::new();
                    for (ri, r) in p.rows().iter().enumerate() {
                        if s.row_tight[ri] {
                            let mut d = vec![0.0; 6];
                            for &(v, c) in &r.coeffs {
                                d[v] += c;
                            }
                            active.push(d);
                        }
                    }
                    for v in 0..6 {
                        if (s.values[v] - p.lower()[v]).abs() < 1e-9 || (s.values[v] - p.upper()[v]).abs() < 1e-9 {
                            let mut e = vec![0.0; 6];
                            e[v] = 1.0;
                            active.push(e);
                        }
                    }
                    assert!(rank(active) >= 6, "case {case}: not a vertex");
                    assert!(s.interior_vars(&p).len() <= s.row_tight.iter().filter(|&&t| t).count());
                }
                (LpOutcome::Infeasible, None) => {}
                (got, want) => panic!("case {case}: solver {got:?}, oracle {want:?}"),
            }
        }
        assert!(optimal > 50);
    }

    #[test]
    fn fixes_match_equality_pins() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let p = random_lp(&mut rng, 6, 3);
            let fixes: Vec<(usize, f64)> = vec![(1, p.lower()[1]), (4, p.upper()[4])];
            let reduced = p.fix_variables(&fixes).unwrap();
            let mut pinned = p.clone();
            for &(v, val) in &fixes {
                pinned.add_row(vec![(v, 1.0)], Relation::Eq, val);
            }
            match (solve_vertex(&reduced).unwrap(), solve_vertex(&pinned).unwrap()) {
                (LpOutcome::Optimal(a), LpOutcome::Optimal(b)) => {
                    assert!((a.objective - b.objective).abs() < 1e-6)
                }
                (LpOutcome::Infeasible, LpOutcome::Infeasible) => {}
                (a, b) => panic!("{a:?} vs {b:?}"),
            }
        }
    }

    #[test]
    fn hint_does_not_change_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let p = random_lp(&mut rng, 6, 4);
            let hint: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..1.0)).collect();
            let q = p.clone().with_hint(hint);
            match (solve_vertex(&p).unwrap(), solve_vertex(&q).unwrap()) {
                (LpOutcome::Optimal(a), LpOutcome::Optimal(b)) => {
                    assert!((a.objective - b.objective).abs() < 1e-6)
                }
                (a, b) => assert_eq!(std::mem::discriminant(&a), std::mem::discriminant(&b)),
            }
        }
    }

    #[test]
    fn solves_are_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_lp(&mut rng, 6, 4);
        assert_eq!(solve_vertex(&p).unwrap(), solve_vertex(&p).unwrap());
    }

    #[test]
    fn dual_reoptimizes_after_bound_change() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut checked = 0;
        for _ in 0..200 {
            let p = random_lp(&mut rng, 6, 3);
            let mut t = Tableau::new(&p);
            if !matches!(t.primal().unwrap(), Phase::Optimal) {
                continue;
            }
            let v = rng.gen_range(0..6);
            let mid = (p.lower()[v] + p.upper()[v]) / 2.0;
            let (lo, hi) = (mid.floor().max(p.lower()[v]), mid.floor().max(p.lower()[v]));
            t.set_bounds(v, lo, hi);
            let mut q = p.clone();
            q.set_bounds(v, lo, hi);
            let direct = solve_vertex(&q).unwrap();
            match (t.dual().unwrap(), direct) {
                (Phase::Optimal, LpOutcome::Optimal(s)) => {
                    let sol = t.solution(&q);
                    assert!((sol.objective - s.objective).abs() < 1e-6);
                    checked += 1;
                }
                (Phase::Infeasible, LpOutcome::Infeasible) => {}
                (_, d) => panic!("dual mismatch, direct {d:?}"),
            }
        }
        assert!(checked > 30);
    }
}
