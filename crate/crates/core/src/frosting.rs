//! Cake-frosting rounding of the fractional core.
//!
//! The core is first reduced to a degree-two graph whose components are
//! alternating paths and cycles (even edges carry `alpha`, odd edges
//! `1 - alpha`). A small LP over one interpolation variable per component
//! leaves at most one fractional component per player row. Each fractional
//! component becomes a path whose students are cells of `[0, 1]`; a perfect
//! frosting of the per-player difference densities decides which students
//! take their even edge, which take their odd edge, and which few sit on a
//! boundary.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fairness::FairTarget;
use crate::gap_round::{fractional_core, ResidualState, Rounded};
use crate::instance::{Instance, IntegralAssignment, TOL};
use crate::model::{ChoiceRule, SideRow};
use crate::par;
use crate::simplex::{solve_vertex, LpOutcome, LpProblem, Relation, Sense};

/// Equality tolerance inside the frosting search.
const FROST_TOL: f64 = 1e-8;
/// Coverage within this of 0 or 1 counts as an empty or full cell.
const CELL_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ComponentKind {
    Path,
    Cycle,
}

/// One alternating component. Student `k` takes `even[k]` (towards the
/// previous school) or `odd[k]` (towards the next one).
#[derive(Debug, Clone, Serialize)]
pub struct Component {
    pub kind: ComponentKind,
    pub students: Vec<usize>,
    pub even: Vec<usize>,
    pub odd: Vec<usize>,
    /// Value carried by every even edge.
    pub alpha: f64,
}

impl Component {
    pub fn len(&self) -> usize {
        self.students.len()
    }

    pub fn is_empty(&self) -> bool {
        self.students.is_empty()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PathSystem {
    pub components: Vec<Component>,
    /// Edge fixed for each student settled outside the components.
    pub fixed: Vec<Option<usize>>,
    /// Seats added by settling high-degree students and splitting schools.
    pub capacity_added: usize,
    /// Students settled when breaking cycles.
    pub cycle_breaks: usize,
    /// Excess degree of the core this system was built from.
    pub core_excess: usize,
}

impl PathSystem {
    /// Checks degree and alternation structure against the core values.
    pub fn check_invariants(&self, inst: &Instance, value_of: impl Fn(usize) -> f64) -> Result<()> {
        let mut seen = vec![false; inst.n_students()];
        for (c, comp) in self.components.iter().enumerate() {
            if !(comp.alpha > TOL && comp.alpha < 1.0 - TOL) {
                return Err(Error::Internal(format!("component {c} has alpha {}", comp.alpha)));
            }
            let r = comp.len();
            for k in 0..r {
                let s = comp.students[k];
                if std::mem::replace(&mut seen[s], true) || self.fixed[s].is_some() {
                    return Err(Error::Internal(format!("student {s} appears twice")));
                }
                let (ev, od) = (inst.edge(comp.even[k]), inst.edge(comp.odd[k]));
                if ev.student != s || od.student != s || ev.school == od.school {
                    return Err(Error::Internal(format!("component {c} has a malformed student {s}")));
                }
                if (value_of(comp.even[k]) - comp.alpha).abs() > TOL
                    || (value_of(comp.odd[k]) - (1.0 - comp.alpha)).abs() > TOL
                {
                    return Err(Error::Internal(format!("component {c} does not alternate at student {s}")));
                }
                // Consecutive students share a school.
                if k + 1 < r || comp.kind == ComponentKind::Cycle {
                    let next = comp.even[(k + 1) % r];
                    if inst.edge(next).school != od.school {
                        return Err(Error::Internal(format!("component {c} is disconnected after student {s}")));
                    }
                }
            }
        }
        if self.capacity_added > 2 * self.core_excess {
            return Err(Error::Internal(format!(
                "graph modification added {} seats for excess {}",
                self.capacity_added, self.core_excess
            )));
        }
        Ok(())
    }
}

/// Reduces a fractional core to alternating paths and cycles.
///
/// Students of degree above two are settled by `rule`. A school stays a
/// shared interior vertex only when it has exactly two fractional edges
/// summing to one; every other school is split into unit copies, one per edge.
pub fn build_path_system(inst: &Instance, state: &ResidualState, rule: &ChoiceRule<'_>) -> Result<PathSystem> {
    state.check_invariants()?;
    let n = inst.n_students();
    let m = inst.n_schools();
    let mut value = vec![0.0; inst.n_edges()];
    let mut support: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (v, &e) in state.edges.iter().enumerate() {
        value[e] = state.values[v];
        support[inst.edge(e).student].push(e);
    }
    let mut fixed = state.fixed.clone();
    let mut capacity_added = 0;
    for i in 0..n {
        if support[i].len() > 2 {
            fixed[i] = Some(rule.choose(inst, i, &support[i]));
            support[i].clear();
            capacity_added += 1;
        }
    }
    // School nodes: interior schools keep one node, split schools get one per edge.
    let mut school_edges: Vec<Vec<usize>> = vec![Vec::new(); m];
    for s in &support {
        for &e in s {
            school_edges[inst.edge(e).school].push(e);
        }
    }
    let mut node_of_edge = vec![usize::MAX; inst.n_edges()];
    let mut node_edges: Vec<Vec<usize>> = Vec::new();
    for (j, edges) in school_edges.iter().enumerate() {
        if edges.is_empty() {
            continue;
        }
        let interior = edges.len() == 2 && (value[edges[0]] + value[edges[1]] - 1.0).abs() <= TOL;
        if interior {
            for &e in edges {
                node_of_edge[e] = node_edges.len();
            }
            node_edges.push(edges.clone());
        } else {
            let cap = (state.residual_capacity[j] + TOL).floor().max(0.0) as usize;
            capacity_added += edges.len().saturating_sub(cap);
            for &e in edges {
                node_of_edge[e] = node_edges.len();
                node_edges.push(vec![e]);
            }
        }
    }

    let mut used = vec![false; n];
    let mut components = Vec::new();
    let other_student_edge = |e: usize, support: &[Vec<usize>]| -> usize {
        let s = &support[inst.edge(e).student];
        if s[0] == e { s[1] } else { s[0] }
    };
    let other_node_edge = |e: usize, node_edges: &[Vec<usize>]| -> Option<usize> {
        let ne = &node_edges[node_of_edge[e]];
        (ne.len() == 2).then(|| if ne[0] == e { ne[1] } else { ne[0] })
    };
    let walk = |start: usize, used: &mut [bool], kind: ComponentKind| -> Component {
        let (mut students, mut even, mut odd) = (Vec::new(), Vec::new(), Vec::new());
        let mut e = start;
        loop {
            let s = inst.edge(e).student;
            if used[s] {
                break;
            }
            used[s] = true;
            let out = other_student_edge(e, &support);
            students.push(s);
            even.push(e);
            odd.push(out);
            match other_node_edge(out, &node_edges) {
                Some(next) => e = next,
                None => break,
            }
        }
        Component { kind, alpha: value[start], students, even, odd }
    };
    // Paths start at degree-one school nodes.
    for node in &node_edges {
        if node.len() == 1 && !used[inst.edge(node[0]).student] {
            components.push(walk(node[0], &mut used, ComponentKind::Path));
        }
    }
    for i in 0..n {
        if support[i].len() == 2 && !used[i] {
            components.push(walk(support[i][0], &mut used, ComponentKind::Cycle));
        }
    }
    let ps = PathSystem { components, fixed, capacity_added, cycle_breaks: 0, core_excess: state.total_excess() };
    ps.check_invariants(inst, |e| value[e])?;
    Ok(ps)
}

/// Breaks the selected cycles into paths by settling their lowest-id student
/// with `rule`. Paths are left as they are.
pub fn cycles_to_paths(inst: &Instance, ps: &PathSystem, rule: &ChoiceRule<'_>, selected: &[usize]) -> PathSystem {
    let mut out = ps.clone();
    for &c in selected {
        let comp = &mut out.components[c];
        if comp.kind != ComponentKind::Cycle {
            continue;
        }
        let p = (0..comp.len()).min_by_key(|&k| comp.students[k]).expect("cycles are nonempty");
        let s = comp.students[p];
        out.fixed[s] = Some(rule.choose(inst, s, &[comp.even[p], comp.odd[p]]));
        out.cycle_breaks += 1;
        let rot = |v: &Vec<usize>| -> Vec<usize> { v[p + 1..].iter().chain(&v[..p]).copied().collect() };
        comp.students = rot(&comp.students);
        comp.even = rot(&comp.even);
        comp.odd = rot(&comp.odd);
        comp.kind = ComponentKind::Path;
    }
    out
}

/// Dense per-edge coefficients of `rows`.
pub(crate) fn dense_rows(rows: &[SideRow], n_edges: usize) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|row| {
            let mut d = vec![0.0; n_edges];
            for &(e, c) in &row.coeffs {
                d[e] += c;
            }
            d
        })
        .collect()
}

/// Interpolation LP over one variable per component.
#[derive(Debug, Clone, Serialize)]
pub struct ComponentLp {
    /// `even[c][l]`: row `l`'s value when component `c` takes its even matching.
    pub even: Vec<Vec<f64>>,
    pub odd: Vec<Vec<f64>>,
    /// Row `l` asks `sum_c z_c even + (1 - z_c) odd >= rhs[l]`.
    pub rhs: Vec<f64>,
}

impl ComponentLp {
    /// Rows are set to the value of the current fractional point, so `z = alpha` is feasible.
    pub fn new(ps: &PathSystem, coeffs: &[Vec<f64>]) -> Self {
        let nc = ps.components.len();
        let g = coeffs.len();
        let mut even = vec![vec![0.0; g]; nc];
        let mut odd = vec![vec![0.0; g]; nc];
        let mut rhs = vec![0.0; g];
        for (c, comp) in ps.components.iter().enumerate() {
            for l in 0..g {
                even[c][l] = comp.even.iter().map(|&e| coeffs[l][e]).sum();
                odd[c][l] = comp.odd.iter().map(|&e| coeffs[l][e]).sum();
                rhs[l] += comp.alpha * even[c][l] + (1.0 - comp.alpha) * odd[c][l];
            }
        }
        ComponentLp { even, odd, rhs }
    }

    pub fn value(&self, z: &[f64], l: usize) -> f64 {
        (0..z.len()).map(|c| z[c] * self.even[c][l] + (1.0 - z[c]) * self.odd[c][l]).sum()
    }

    /// Vertex solution, snapped so that integral entries are exact.
    pub fn solve(&self, hint: &[f64]) -> Result<Vec<f64>> {
        let nc = self.even.len();
        let mut lp = LpProblem::new(nc, Sense::Minimize);
        for l in 0..self.rhs.len() {
            let mut constant = 0.0;
            let mut coeffs = Vec::new();
            let mut scale = self.rhs[l].abs();
            for c in 0..nc {
                constant += self.odd[c][l];
                let d = self.even[c][l] - self.odd[c][l];
                scale += d.abs();
                if d != 0.0 {
                    coeffs.push((c, d));
                }
            }
            if coeffs.is_empty() {
                continue;
            }
            let rhs = self.rhs[l] - constant - 1e-10 * (1.0 + scale);
            lp.add_row(coeffs, Relation::Ge, rhs);
        }
        lp.set_hint(Some(hint.to_vec()));
        let sol = match solve_vertex(&lp)? {
            LpOutcome::Optimal(s) => s,
            _ => return Err(Error::Internal("component LP is not solvable at its own fractional point".into())),
        };
        Ok(sol
            .values
            .into_iter()
            .map(|z| if z <= TOL { 0.0 } else if z >= 1.0 - TOL { 1.0 } else { z })
            .collect())
    }
}

/// Piecewise-constant densities on `r` equal cells of `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrostingProblem {
    pub r: usize,
    /// `densities[l][i]` is player `l`'s density on cell `[i/r, (i+1)/r)`.
    pub densities: Vec<Vec<f64>>,
    pub alpha: f64,
}

/// Sorted disjoint half-open intervals of `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Frosting {
    pub intervals: Vec<(f64, f64)>,
}

impl Frosting {
    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Length of `X ∩ [lo, hi)`.
    pub fn overlap(&self, lo: f64, hi: f64) -> f64 {
        self.intervals.iter().map(|&(a, b)| (b.min(hi) - a.max(lo)).max(0.0)).sum()
    }

    /// Fraction of cell `i` (of `r`) covered.
    pub fn coverage(&self, r: usize, i: usize) -> f64 {
        self.overlap(i as f64 / r as f64, (i + 1) as f64 / r as f64) * r as f64
    }
}

impl FrostingProblem {
    pub fn new(densities: Vec<Vec<f64>>, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid("alpha", format!("{alpha} outside (0, 1)")));
        }
        let r = densities.first().map_or(0, Vec::len);
        if r == 0 || densities.iter().any(|d| d.len() != r) {
            return Err(Error::invalid("densities", "rows must share a positive cell count"));
        }
        if densities.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::invalid("densities", "must be finite"));
        }
        Ok(FrostingProblem { r, densities, alpha })
    }

    pub fn n_players(&self) -> usize {
        self.densities.len()
    }

    /// `integral_X f_l`.
    pub fn integral(&self, l: usize, x: &Frosting) -> f64 {
        (0..self.r).map(|i| self.densities[l][i] * x.coverage(self.r, i) / self.r as f64).sum()
    }

    pub fn total(&self, l: usize) -> f64 {
        self.densities[l].iter().sum::<f64>() / self.r as f64
    }

    /// Largest `|integral_X f_l - alpha * total_l|` over players.
    pub fn max_error(&self, x: &Frosting) -> f64 {
        (0..self.n_players())
            .map(|l| (self.integral(l, x) - self.alpha * self.total(l)).abs())
            .fold(0.0, f64::max)
    }

    /// Players whose densities are linearly independent (in order of appearance).
    pub fn independent_players(&self) -> Vec<usize> {
        let scale = self.densities.iter().flatten().fold(0.0f64, |a, &x| a.max(x.abs()));
        let tol = 1e-9 * scale.max(1e-300);
        let mut basis: Vec<(usize, Vec<f64>)> = Vec::new();
        let mut keep = Vec::new();
        for (l, row) in self.densities.iter().enumerate() {
            let mut v = row.clone();
            for (pivot, b) in &basis {
                let f = v[*pivot] / b[*pivot];
                if f != 0.0 {
                    for i in 0..self.r {
                        v[i] -= f * b[i];
                    }
                }
            }
            let (pivot, mag) = v.iter().enumerate().fold((0, 0.0), |acc, (i, &x)| {
                if x.abs() > acc.1 { (i, x.abs()) } else { acc }
            });
            if mag > tol {
                basis.push((pivot, v));
                keep.push(l);
            }
        }
        keep
    }
}

/// Cell-integral prefix sums of one player's density.
struct Prefix {
    /// `p[c] = integral of f over [0, c/r)`, for `c = 0..=r`.
    p: Vec<f64>,
    suf_min: Vec<f64>,
    suf_max: Vec<f64>,
}

impl Prefix {
    fn new(density: &[f64]) -> Self {
        let r = density.len();
        let mut p = vec![0.0; r + 1];
        for i in 0..r {
            p[i + 1] = p[i] + density[i] / r as f64;
        }
        let mut suf_min = p.clone();
        let mut suf_max = p.clone();
        for c in (0..r).rev() {
            suf_min[c] = suf_min[c].min(suf_min[c + 1]);
            suf_max[c] = suf_max[c].max(suf_max[c + 1]);
        }
        Prefix { p, suf_min, suf_max }
    }

    /// Range of the primitive over cell `c`.
    fn cell_range(&self, c: usize) -> (f64, f64) {
        (self.p[c].min(self.p[c + 1]), self.p[c].max(self.p[c + 1]))
    }
}

struct Search<'a> {
    problem: &'a FrostingProblem,
    players: Vec<usize>,
    prefix: Vec<Prefix>,
    target: Vec<f64>,
    slack: Vec<f64>,
    cells: Vec<usize>,
    lp_solves: usize,
}

impl Search<'_> {
    /// Depth-first over nondecreasing cell placements of `m` endpoints.
    fn dfs(&mut self, depth: usize, m: usize) -> Result<Option<Frosting>> {
        if depth == m {
            return self.solve_placement();
        }
        let r = self.problem.r;
        let start = if depth == 0 { 0 } else { self.cells[depth - 1] };
        for c in start..r {
            self.cells.push(c);
            if self.promising(depth + 1, m) {
                if let Some(x) = self.dfs(depth + 1, m)? {
                    return Ok(Some(x));
                }
            }
            self.cells.pop();
        }
        Ok(None)
    }

    fn sign(j: usize) -> f64 {
        // Endpoint j (0-based) opens an interval when even.
        if j % 2 == 0 { -1.0 } else { 1.0 }
    }

    /// Interval check of every equality given the placed endpoints.
    fn promising(&self, placed: usize, m: usize) -> bool {
        let last = self.cells[placed - 1];
        for (q, pre) in self.prefix.iter().enumerate() {
            let (mut lo, mut hi) = (0.0, 0.0);
            for j in 0..placed {
                let (a, b) = pre.cell_range(self.cells[j]);
                if Self::sign(j) > 0.0 {
                    lo += a;
                    hi += b;
                } else {
                    lo -= b;
                    hi -= a;
                }
            }
            for j in placed..m {
                let (a, b) = (pre.suf_min[last], pre.suf_max[last]);
                if Self::sign(j) > 0.0 {
                    lo += a;
                    hi += b;
                } else {
                    lo -= b;
                    hi -= a;
                }
            }
            let t = self.target[q];
            if t < lo - self.slack[q] || t > hi + self.slack[q] {
                return false;
            }
        }
        true
    }

    /// Solves for the endpoint offsets within their cells.
    fn solve_placement(&mut self) -> Result<Option<Frosting>> {
        let m = self.cells.len();
        let r = self.problem.r;
        let mut lp = LpProblem::new(m, Sense::Minimize);
        for j in 0..m {
            lp.set_cost(j, 1.0);
        }
        for (q, &l) in self.players.iter().enumerate() {
            let pre = &self.prefix[q];
            let mut rhs = self.target[q];
            let mut coeffs = Vec::new();
            for (j, &c) in self.cells.iter().enumerate() {
                let s = Self::sign(j);
                rhs -= s * pre.p[c];
                let d = self.problem.densities[l][c] / r as f64;
                if d != 0.0 {
                    coeffs.push((j, s * d));
                }
            }
            if coeffs.is_empty() {
                if rhs.abs() > FROST_TOL {
                    return Ok(None);
                }
                continue;
            }
            lp.add_row(coeffs, Relation::Eq, rhs);
        }
        for j in 1..m {
            if self.cells[j] == self.cells[j - 1] {
                lp.add_row(vec![(j - 1, 1.0), (j, -1.0)], Relation::Le, 0.0);
            }
        }
        self.lp_solves += 1;
        let sol = match solve_vertex(&lp)? {
            LpOutcome::Optimal(s) => s,
            _ => return Ok(None),
        };
        let points: Vec<f64> = (0..m)
            .map(|j| ((self.cells[j] as f64 + sol.values[j].clamp(0.0, 1.0)) / r as f64).clamp(0.0, 1.0))
            .collect();
        let x = normalize(&points);
        if self.problem.max_error(&x) <= FROST_TOL * self.error_scale() {
            Ok(Some(x))
        } else {
            Ok(None)
        }
    }

    fn error_scale(&self) -> f64 {
        let s = self.problem.densities.iter().flatten().fold(0.0f64, |a, &x| a.max(x.abs()));
        s.max(1.0)
    }
}

/// Turns sorted endpoints into disjoint nonempty intervals, merging touching ones.
fn normalize(points: &[f64]) -> Frosting {
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    let mut last_end = 0.0f64;
    for pair in points.chunks(2) {
        let a = pair[0].max(last_end);
        let b = pair[1].max(a);
        last_end = b;
        if b - a <= 1e-15 {
            continue;
        }
        match intervals.last_mut() {
            Some(prev) if a - prev.1 <= 1e-15 => prev.1 = b,
            _ => intervals.push((a, b)),
        }
    }
    Frosting { intervals }
}

/// Statistics of one frosting search.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct SearchStats {
    pub effective_players: usize,
    pub lp_solves: usize,
}

/// Finds `X` with `integral_X f_l = alpha * integral f_l` for every player,
/// using the fewest intervals found by enumeration (at most
/// `2 g_eff - 1`, or `max_intervals` when given).
pub fn perfect_frosting(p: &FrostingProblem, max_intervals: Option<usize>) -> Result<Frosting> {
    perfect_frosting_with_stats(p, max_intervals).map(|(x, _)| x)
}

pub fn perfect_frosting_with_stats(p: &FrostingProblem, max_intervals: Option<usize>) -> Result<(Frosting, SearchStats)> {
    let players = p.independent_players();
    let g_eff = players.len();
    let mut stats = SearchStats { effective_players: g_eff, lp_solves: 0 };
    if g_eff == 0 {
        return Ok((Frosting { intervals: Vec::new() }, stats));
    }
    let prefix: Vec<Prefix> = players.iter().map(|&l| Prefix::new(&p.densities[l])).collect();
    let target: Vec<f64> = prefix.iter().map(|pre| p.alpha * pre.p[p.r]).collect();
    let slack: Vec<f64> = players
        .iter()
        .map(|&l| FROST_TOL * p.densities[l].iter().fold(1.0f64, |a, &x| a.max(x.abs())))
        .collect();
    let k_max = max_intervals.unwrap_or(2 * g_eff - 1).max(1);
    let mut search = Search { problem: p, players, prefix, target, slack, cells: Vec::new(), lp_solves: 0 };
    for k in 1..=k_max {
        search.cells.clear();
        if let Some(x) = search.dfs(0, 2 * k)? {
            stats.lp_solves = search.lp_solves;
            if p.max_error(&x) > 1e-6 {
                return Err(Error::Internal("frosting failed its own quadrature check".into()));
            }
            return Ok((x, stats));
        }
    }
    Err(Error::Internal(format!(
        "no perfect frosting with at most {k_max} intervals for {g_eff} players"
    )))
}

/// Where each student of a rounded path went.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CellClass {
    /// Cell inside `X`: even edge.
    Inside,
    /// Cell outside `X`: odd edge.
    Outside,
    /// Cell cut by a boundary of `X`: settled by the choice rule.
    Boundary,
}

/// Assigns the students of a path given its frosting.
pub fn frost_round(
    inst: &Instance,
    comp: &Component,
    x: &Frosting,
    rule: &ChoiceRule<'_>,
) -> Vec<(usize, usize, CellClass)> {
    let r = comp.len();
    (0..r)
        .map(|k| {
            let cov = x.coverage(r, k);
            let s = comp.students[k];
            if cov >= 1.0 - CELL_SNAP {
                (s, comp.even[k], CellClass::Inside)
            } else if cov <= CELL_SNAP {
                (s, comp.odd[k], CellClass::Outside)
            } else {
                (s, rule.choose(inst, s, &[comp.even[k], comp.odd[k]]), CellClass::Boundary)
            }
        })
        .collect()
}

/// Frosting problem of a path: cell `k` carries `r * (even - odd)` per row.
pub fn path_problem(comp: &Component, coeffs: &[Vec<f64>], alpha: f64) -> Result<FrostingProblem> {
    let r = comp.len() as f64;
    let densities = coeffs
        .iter()
        .map(|row| {
            comp.even
                .iter()
                .zip(&comp.odd)
                .map(|(&e, &o)| r * (row[e] - row[o]))
                .collect()
        })
        .collect();
    FrostingProblem::new(densities, alpha)
}

/// Statistics of a full frosting rounding run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct FrostStats {
    pub core_support: usize,
    pub components: usize,
    pub fractional_components: usize,
    pub capacity_added: usize,
    pub cycle_breaks: usize,
    pub intervals: Vec<usize>,
    pub boundary_students: usize,
}

/// Frosting rounding of a fractional core with `rows` as the players.
pub fn frost_core(
    inst: &Instance,
    state: &ResidualState,
    rows: &[SideRow],
    rule: &ChoiceRule<'_>,
    max_intervals: Option<usize>,
) -> Result<(IntegralAssignment, FrostStats)> {
    let coeffs = dense_rows(rows, inst.n_edges());
    let ps = build_path_system(inst, state, rule)?;
    let clp = ComponentLp::new(&ps, &coeffs);
    let alphas: Vec<f64> = ps.components.iter().map(|c| c.alpha).collect();
    let z = clp.solve(&alphas)?;
    let fractional: Vec<usize> = (0..z.len()).filter(|&c| z[c] > 0.0 && z[c] < 1.0).collect();
    if fractional.len() > rows.len() {
        return Err(Error::Internal(format!(
            "{} fractional components for {} rows",
            fractional.len(),
            rows.len()
        )));
    }
    let ps_frac = cycles_to_paths(inst, &ps, rule, &fractional);

    let mut edge_of: Vec<Option<usize>> = ps_frac.fixed.clone();
    for (c, comp) in ps_frac.components.iter().enumerate() {
        if z[c] == 1.0 || z[c] == 0.0 {
            let chosen = if z[c] == 1.0 { &comp.even } else { &comp.odd };
            for (k, &s) in comp.students.iter().enumerate() {
                edge_of[s] = Some(chosen[k]);
            }
        }
    }
    let jobs: Vec<usize> = fractional.iter().copied().filter(|&c| !ps_frac.components[c].is_empty()).collect();
    let frostings = par::map(&jobs, |&c| {
        let comp = &ps_frac.components[c];
        let problem = path_problem(comp, &coeffs, z[c])?;
        perfect_frosting(&problem, max_intervals)
    });
    let mut stats = FrostStats {
        core_support: state.support_size(),
        components: ps.components.len(),
        fractional_components: fractional.len(),
        capacity_added: ps.capacity_added,
        cycle_breaks: ps_frac.cycle_breaks,
        ..Default::default()
    };
    for (&c, x) in jobs.iter().zip(frostings) {
        let x = x?;
        stats.intervals.push(x.len());
        for (s, e, class) in frost_round(inst, &ps_frac.components[c], &x, rule) {
            edge_of[s] = Some(e);
            stats.boundary_students += (class == CellClass::Boundary) as usize;
        }
    }
    let mut school_of = Vec::with_capacity(inst.n_students());
    for (i, e) in edge_of.into_iter().enumerate() {
        let e = e.ok_or_else(|| Error::Internal(format!("student {i} left unassigned by frosting")))?;
        school_of.push(inst.edge(e).school);
    }
    Ok((IntegralAssignment::new(inst, school_of)?, stats))
}

/// Fractional core of the target LP followed by frosting rounding.
pub fn frost_pipeline(inst: &Instance, target: &FairTarget, max_intervals: Option<usize>) -> Result<(Rounded, FrostStats)> {
    let (state, rows) = fractional_core(inst, target)?;
    let (assignment, stats) = frost_core(inst, &state, &rows, &ChoiceRule::MaxUtility, max_intervals)?;
    Ok((Rounded::new(inst, assignment, state.support_size())?, stats))
}

/// Overflow bound for frosting rounding with `g` player rows.
pub fn frost_overflow_bound(g: usize) -> u64 {
    (4 * g * g + 3 * g) as u64
}
