//! Exact benchmark: the least total capacity violation `sum_j delta_j` of an
//! integral assignment meeting given group utility targets.
//!
//! Best-first branch and bound over one dense tableau. Moving between nodes
//! only changes column bounds, so every node is re-optimised by the dual
//! simplex from the previous basis.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::{violation_report, Edge, GroupUtilities, Instance, IntegralAssignment};
use crate::model::group_rows;
use crate::simplex::{LpProblem, Relation, Sense};
use crate::simplex::{Phase, Tableau};

const INT_TOL: f64 = 1e-6;
const BOUND_TOL: f64 = 1e-7;
/// Nodes between full recomputations of the basic values.
const REFRESH_EVERY: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IlpOptions {
    pub node_limit: usize,
    pub time_budget: Option<Duration>,
    /// Relative slack on the utility rows when checking an assignment.
    pub utility_tol: f64,
    /// Restricted re-solves tried before the full search.
    pub neighbourhood_rounds: usize,
    /// Random students freed on top of the focus set per re-solve.
    pub neighbourhood_extra: usize,
    pub neighbourhood_nodes: usize,
}

impl Default for IlpOptions {
    fn default() -> Self {
        IlpOptions {
            node_limit: 1_000_000,
            time_budget: None,
            utility_tol: 1e-6,
            neighbourhood_rounds: 40,
            neighbourhood_extra: 40,
            neighbourhood_nodes: 2000,
        }
    }
}

/// A search node: the fixings on the path from the root.
#[derive(Debug, Clone)]
pub struct BnbNode {
    pub fixings: Vec<(usize, bool)>,
    pub bound: f64,
    pub depth: usize,
}

impl BnbNode {
    fn consistent(&self, inst: &Instance) -> bool {
        let mut seen = vec![false; inst.n_students()];
        self.fixings.iter().filter(|f| f.1).all(|&(e, _)| {
            let s = inst.edge(e).student;
            !std::mem::replace(&mut seen[s], true)
        })
    }
}

struct Queued(BnbNode);

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    // Max-heap: smallest bound first, deeper first on ties.
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.bound.total_cmp(&self.0.bound).then(self.0.depth.cmp(&other.0.depth))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IlpResult {
    pub assignment: IntegralAssignment,
    pub total_violation: u64,
    /// True when the search closed with no open node below the incumbent.
    pub optimal: bool,
    pub nodes: usize,
    pub root_bound: f64,
    pub wall_time: Duration,
}

/// Checks utilities within the absolute slack `tol` and returns the total
/// overflow.
fn evaluate(inst: &Instance, targets: &[f64], a: &IntegralAssignment, tol: f64) -> Result<Option<u64>> {
    let rows = group_rows(inst, targets);
    let chosen = a.edge_ids(inst);
    for row in &rows {
        if row.value_on_edges(inst.n_edges(), &chosen) < row.rhs - tol {
            return Ok(None);
        }
    }
    Ok(Some(violation_report(inst, a)?.total_overflow))
}

fn build(inst: &Instance, targets: &[f64]) -> LpProblem {
    let ne = inst.n_edges();
    let mut lp = LpProblem::new(ne, Sense::Minimize);
    let delta: Vec<usize> = (0..inst.n_schools()).map(|_| lp.add_var(0.0, f64::INFINITY, 1.0)).collect();
    for i in 0..inst.n_students() {
        lp.add_row(inst.student_edges(i).iter().map(|&e| (e, 1.0)).collect(), Relation::Eq, 1.0);
    }
    for j in 0..inst.n_schools() {
        let mut row: Vec<(usize, f64)> = inst.school_edges(j).iter().map(|&e| (e, 1.0)).collect();
        row.push((delta[j], -1.0));
        lp.add_row(row, Relation::Le, inst.capacities()[j] as f64);
    }
    for row in group_rows(inst, targets) {
        lp.add_row(row.coeffs, Relation::Ge, row.rhs);
    }
    lp
}

/// Edge nearest one half among fractional edges; ties go to the lowest id.
fn branch_edge(values: &[f64], n_edges: usize) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (e, &v) in values[..n_edges].iter().enumerate() {
        let frac = v.min(1.0 - v);
        if frac > INT_TOL && best.is_none_or(|(_, b)| frac > b + 1e-12) {
            best = Some((e, frac));
        }
    }
    best.map(|(e, _)| e)
}

fn rounded_assignment(inst: &Instance, values: &[f64]) -> Result<IntegralAssignment> {
    let school_of = (0..inst.n_students())
        .map(|i| {
            let e = inst.student_edges(i).iter().copied().max_by(|&a, &b| values[a].total_cmp(&values[b]));
            e.map(|e| inst.edge(e).school).ok_or_else(|| Error::Internal(format!("student {i} has no edge")))
        })
        .collect::<Result<Vec<_>>>()?;
    IntegralAssignment::new(inst, school_of)
}

/// Fresh tableau for the LP with `fixings` applied, solved by the primal simplex.
fn solve_cold(lp: &LpProblem, fixings: &[(usize, bool)]) -> Result<(Tableau, Phase)> {
    let mut q = lp.clone();
    for &(e, v) in fixings {
        let x = if v { 1.0 } else { 0.0 };
        q.set_bounds(e, x, x);
    }
    let mut tab = Tableau::new(&q);
    let phase = tab.primal()?;
    Ok((tab, phase))
}

struct Search {
    best: Option<(IntegralAssignment, u64)>,
    optimal: bool,
    nodes: usize,
    root_bound: f64,
}

fn out_of_budget(start: Instant, budget: Option<Duration>) -> bool {
    budget.is_some_and(|b| start.elapsed() >= b)
}

/// Best-first branch and bound from `best`.
fn branch_and_bound(
    inst: &Instance,
    t: &[f64],
    tol: f64,
    mut best: Option<(IntegralAssignment, u64)>,
    node_limit: usize,
    start: Instant,
    budget: Option<Duration>,
) -> Result<Search> {
    let ne = inst.n_edges();
    let lp = build(inst, t);
    let mut tab = Tableau::new(&lp);
    match tab.primal()? {
        Phase::Optimal => {}
        Phase::Infeasible => return Err(Error::Infeasible("utility targets are not attainable".into())),
        Phase::Unbounded => return Err(Error::Internal("violation LP unbounded".into())),
    }
    let root_bound = tab.objective();
    let mut heap = BinaryHeap::new();
    heap.push(Queued(BnbNode { fixings: Vec::new(), bound: root_bound, depth: 0 }));
    let mut current: Vec<Option<bool>> = vec![None; ne];
    let mut nodes = 0usize;
    let mut exhausted = false;

    while let Some(Queued(node)) = heap.pop() {
        let cutoff = best.as_ref().map_or(f64::INFINITY, |b| b.1 as f64);
        if node.bound > cutoff - 1.0 + BOUND_TOL {
            // Violations are integral, so nothing below the incumbent remains.
            break;
        }
        if nodes >= node_limit || out_of_budget(start, budget) {
            exhausted = true;
            break;
        }
        nodes += 1;
        debug_assert!(node.consistent(inst));

        let mut wanted: Vec<Option<bool>> = vec![None; ne];
        for &(e, v) in &node.fixings {
            wanted[e] = Some(v);
        }
        for e in 0..ne {
            if current[e] != wanted[e] {
                match wanted[e] {
                    None => tab.set_bounds(e, 0.0, 1.0),
                    Some(v) => {
                        let x = if v { 1.0 } else { 0.0 };
                        tab.set_bounds(e, x, x)
                    }
                }
            }
        }
        current = wanted;
        if nodes % REFRESH_EVERY == 0 {
            tab.refresh_values();
        }
        let warm = tab.dual();
        let mut cold = match &warm {
            Ok(Phase::Optimal) => tab.objective() < node.bound - 1e-6 * node.bound.abs().max(1.0),
            Ok(_) => false,
            Err(_) => true,
        };
        let mut phase = warm.unwrap_or(Phase::Infeasible);
        if cold {
            // The warm basis has drifted numerically or stalled.
            (tab, phase) = solve_cold(&lp, &node.fixings)?;
        }
        loop {
            match phase {
                Phase::Optimal => {}
                Phase::Infeasible => break,
                Phase::Unbounded => return Err(Error::Internal("violation LP unbounded".into())),
            }
            let bound = tab.objective();
            if bound > cutoff - 1.0 + BOUND_TOL {
                break;
            }
            let values = tab.values();
            match branch_edge(values, ne) {
                None => {
                    let a = rounded_assignment(inst, values)?;
                    match evaluate(inst, t, &a, tol)? {
                        Some(v) if best.as_ref().is_none_or(|b| v < b.1) => best = Some((a, v)),
                        Some(_) => {}
                        None if !cold => {
                            cold = true;
                            (tab, phase) = solve_cold(&lp, &node.fixings)?;
                            continue;
                        }
                        None => return Err(Error::Internal("integral node misses a utility target".into())),
                    }
                }
                Some(e) => {
                    for v in [true, false] {
                        let mut fixings = node.fixings.clone();
                        fixings.push((e, v));
                        heap.push(Queued(BnbNode { fixings, bound, depth: node.depth + 1 }));
                    }
                }
            }
            break;
        }
    }
    Ok(Search { best, optimal: !exhausted, nodes, root_bound })
}

/// Re-optimises the students in `free` with everyone else held at `base`.
/// Returns an improved full assignment, if the restricted search finds one.
fn improve_on(
    inst: &Instance,
    t: &[f64],
    tol: f64,
    base: &IntegralAssignment,
    base_value: u64,
    free: &[usize],
    node_limit: usize,
    start: Instant,
    budget: Option<Duration>,
) -> Result<Option<(IntegralAssignment, u64)>> {
    let m = inst.n_schools();
    let mut local = vec![usize::MAX; inst.n_students()];
    for (k, &i) in free.iter().enumerate() {
        local[i] = k;
    }
    let mut fixed_load = vec![0u64; m];
    let mut targets = t.to_vec();
    for (i, &j) in base.school_of.iter().enumerate() {
        if local[i] != usize::MAX {
            continue;
        }
        fixed_load[j] += 1;
        if let Some(e) = inst.edge_between(i, j) {
            for &k in inst.student_groups(i) {
                targets[k] -= inst.edge(e).utility;
            }
        }
    }
    let caps: Vec<u64> = (0..m).map(|j| inst.capacities()[j].saturating_sub(fixed_load[j])).collect();
    let offset: u64 = (0..m).map(|j| fixed_load[j].saturating_sub(inst.capacities()[j])).sum();
    let edges = free
        .iter()
        .flat_map(|&i| inst.student_edges(i).iter().map(move |&e| (i, e)))
        .map(|(i, e)| Edge { student: local[i], ..inst.edge(e).clone() })
        .collect();
    let groups = inst
        .groups()
        .iter()
        .map(|g| g.iter().filter(|&&i| local[i] != usize::MAX).map(|&i| local[i]).collect())
        .collect();
    let sub = Instance::new(free.len(), m, caps, edges, groups)?;
    let seed = IntegralAssignment::new(&sub, free.iter().map(|&i| base.school_of[i]).collect())?;
    let seed_value = base_value.checked_sub(offset).ok_or_else(|| Error::Internal("negative restricted violation".into()))?;
    let target = base_value - offset;
    let found = branch_and_bound(&sub, &targets, tol, Some((seed, seed_value)), node_limit, start, budget)?;
    let Some((a, v)) = found.best else { return Ok(None) };
    if v >= target {
        return Ok(None);
    }
    let mut school_of = base.school_of.clone();
    for (k, &i) in free.iter().enumerate() {
        school_of[i] = a.school_of[k];
    }
    Ok(Some((IntegralAssignment::new(inst, school_of)?, v + offset)))
}

/// Exact re-solve over the students in `free`, everyone else held at `base`.
/// Returns the improved assignment and its total violation, or `None` when
/// nothing better than `base` exists within the node limit.
pub fn improve_students(
    inst: &Instance,
    targets: &GroupUtilities,
    base: &IntegralAssignment,
    free: &[usize],
    opts: IlpOptions,
) -> Result<Option<(IntegralAssignment, u64)>> {
    let t = targets.as_slice();
    let tol = opts.utility_tol * t.iter().fold(1.0f64, |a, &x| a.max(x.abs()));
    let value = evaluate(inst, t, base, tol)?.ok_or_else(|| Error::invalid("base", "misses a utility target"))?;
    improve_on(inst, t, tol, base, value, free, opts.node_limit, Instant::now(), opts.time_budget)
}

/// `focus` plus up to `extra` students: half drawn from over-full schools,
/// the rest from anywhere.
fn neighbourhood(
    inst: &Instance,
    base: &IntegralAssignment,
    focus: &[usize],
    extra: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let loads = base.loads(inst);
    let mut chosen = vec![false; inst.n_students()];
    for &i in focus {
        chosen[i] = true;
    }
    let over = |i: usize| loads[base.school_of[i]] > inst.capacities()[base.school_of[i]];
    let mut hot: Vec<usize> = (0..inst.n_students()).filter(|&i| !chosen[i] && over(i)).collect();
    let mut rest: Vec<usize> = (0..inst.n_students()).filter(|&i| !chosen[i] && !over(i)).collect();
    hot.shuffle(rng);
    rest.shuffle(rng);
    let take_hot = hot.len().min(extra / 2);
    let take_rest = rest.len().min(extra - take_hot);
    let mut free: Vec<usize> = focus.to_vec();
    free.extend(&hot[..take_hot]);
    free.extend(&rest[..take_rest]);
    free.sort_unstable();
    free.dedup();
    free
}

/// Minimum total violation subject to `U_k(y) >= targets_k`.
///
/// `incumbent` seeds the search (for example a rounded assignment). A
/// neighbourhood phase then re-solves `focus` (typically the fractional
/// core) plus a few random students exactly, holding the rest at the
/// incumbent. The full tree runs last, until it closes or the budget runs
/// out; on exhaustion the best assignment found is returned with
/// `optimal = false`.
pub fn ilp_min_violation(
    inst: &Instance,
    targets: &GroupUtilities,
    incumbent: Option<&IntegralAssignment>,
    focus: &[usize],
    opts: IlpOptions,
) -> Result<IlpResult> {
    let start = Instant::now();
    if targets.len() != inst.n_groups() {
        return Err(Error::invalid("targets", format!("{} targets for {} groups", targets.len(), inst.n_groups())));
    }
    let t = targets.as_slice();
    let scale = t.iter().fold(1.0f64, |a, &x| a.max(x.abs()));
    let tol = opts.utility_tol * scale;
    let mut best = None;
    if let Some(a) = incumbent {
        if let Some(v) = evaluate(inst, t, a, tol)? {
            best = Some((a.clone(), v));
        }
    }
    let mut nodes = 0;
    if focus.iter().any(|&i| i >= inst.n_students()) {
        return Err(Error::invalid("focus", "student id out of range"));
    }
    if inst.n_students() > focus.len() + opts.neighbourhood_extra {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for round in 0..opts.neighbourhood_rounds {
            let Some((base, value)) = best.clone() else { break };
            if value == 0 || out_of_budget(start, opts.time_budget) {
                break;
            }
            let extra = if round == 0 { 0 } else { opts.neighbourhood_extra };
            let free = neighbourhood(inst, &base, focus, extra, &mut rng);
            match improve_on(inst, t, tol, &base, value, &free, opts.neighbourhood_nodes, start, opts.time_budget) {
                Ok(Some(better)) => best = Some(better),
                Ok(None) | Err(Error::Infeasible(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }
    let search = branch_and_bound(inst, t, tol, best, opts.node_limit, start, opts.time_budget)?;
    nodes += search.nodes;
    let (assignment, total_violation) =
        search.best.ok_or_else(|| Error::Infeasible("no integral assignment meets the utility targets".into()))?;
    Ok(IlpResult {
        assignment,
        total_violation,
        optimal: search.optimal,
        nodes,
        root_bound: search.root_bound,
        wall_time: start.elapsed(),
    })
}

/// Exhaustive minimum over every integral assignment, or `None` when no
/// assignment meets the targets. Exponential; meant for tiny instances.
pub fn brute_force_min_violation(inst: &Instance, targets: &[f64], tol: f64) -> Result<Option<u64>> {
    let n = inst.n_students();
    let mut pick = vec![0usize; n];
    let mut best: Option<u64> = None;
    if (0..n).any(|i| inst.student_edges(i).is_empty()) {
        return Ok(None);
    }
    loop {
        let school_of: Vec<usize> = (0..n).map(|i| inst.edge(inst.student_edges(i)[pick[i]]).school).collect();
        let a = IntegralAssignment::new(inst, school_of)?;
        if let Some(v) = evaluate(inst, targets, &a, tol)? {
            best = Some(best.map_or(v, |b| b.min(v)));
        }
        let mut i = 0;
        loop {
            if i == n {
                return Ok(best);
            }
            pick[i] += 1;
            if pick[i] < inst.student_edges(i).len() {
                break;
            }
            pick[i] = 0;
            i += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_small(seed: u64) -> Instance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..=7);
        let m = rng.gen_range(1..=3);
        let mut edges = Vec::new();
        for i in 0..n {
            let mut any = false;
            for j in 0..m {
                if rng.gen_bool(0.6) {
                    edges.push(Edge { student: i, school: j, utility: rng.gen_range(0.0..1.0), rank: None });
                    any = true;
                }
            }
            if !any {
                edges.push(Edge { student: i, school: rng.gen_range(0..m), utility: rng.gen_range(0.0..1.0), rank: None });
            }
        }
        let caps = (0..m).map(|_| rng.gen_range(0..=2)).collect();
        let groups = (0..2).map(|_| (0..n).filter(|_| rng.gen_bool(0.5)).collect()).collect();
        Instance::new(n, m, caps, edges, groups).unwrap()
    }

    #[test]
    fn matches_enumeration_on_small_instances() {
        let mut checked = 0;
        for seed in 0..60 {
            let inst = random_small(seed);
            // Targets at a random fraction of what each group could get alone.
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
            let targets: Vec<f64> = inst
                .groups()
                .iter()
                .map(|g| {
                    let best: f64 = g
                        .iter()
                        .map(|&i| inst.student_edges(i).iter().map(|&e| inst.edge(e).utility).fold(0.0, f64::max))
                        .sum();
                    best * rng.gen_range(0.3..0.9)
                })
                .collect();
            let expect = brute_force_min_violation(&inst, &targets, 1e-9).unwrap();
            let got = ilp_min_violation(&inst, &GroupUtilities(targets), None, &[], IlpOptions::default());
            match (expect, got) {
                (Some(v), Ok(r)) => {
                    assert!(r.optimal);
                    assert_eq!(r.total_violation, v, "seed {seed}");
                    checked += 1;
                }
                (None, Err(Error::Infeasible(_))) => {}
                (e, g) => panic!("seed {seed}: enumeration {e:?}, search {g:?}"),
            }
        }
        assert!(checked > 30);
    }

    #[test]
    fn zero_when_capacities_suffice() {
        let edges = vec![
            Edge { student: 0, school: 0, utility: 1.0, rank: None },
            Edge { student: 1, school: 1, utility: 1.0, rank: None },
        ];
        let inst = Instance::new(2, 2, vec![1, 1], edges, vec![vec![0, 1]]).unwrap();
        let r = ilp_min_violation(&inst, &GroupUtilities(vec![2.0]), None, &[], IlpOptions::default()).unwrap();
        assert_eq!(r.total_violation, 0);
        assert!(r.optimal);
    }

    #[test]
    fn forced_overflow_is_counted() {
        // Both students need school 0 (capacity 1) to reach the target.
        let edges = vec![
            Edge { student: 0, school: 0, utility: 1.0, rank: None },
            Edge { student: 0, school: 1, utility: 0.0, rank: None },
            Edge { student: 1, school: 0, utility: 1.0, rank: None },
            Edge { student: 1, school: 1, utility: 0.0, rank: None },
        ];
        let inst = Instance::new(2, 2, vec![1, 1], edges, vec![vec![0, 1]]).unwrap();
        let r = ilp_min_violation(&inst, &GroupUtilities(vec![2.0]), None, &[], IlpOptions::default()).unwrap();
        assert_eq!(r.total_violation, 1);
        assert_eq!(r.assignment.school_of, vec![0, 0]);
    }

    #[test]
    fn unreachable_targets_are_infeasible() {
        let edges = vec![Edge { student: 0, school: 0, utility: 1.0, rank: None }];
        let inst = Instance::new(1, 1, vec![1], edges, vec![vec![0]]).unwrap();
        let r = ilp_min_violation(&inst, &GroupUtilities(vec![2.0]), None, &[], IlpOptions::default());
        assert!(matches!(r, Err(Error::Infeasible(_))));
    }

    #[test]
    fn node_limit_keeps_incumbent() {
        let inst = random_small(3);
        let zero = vec![0.0; inst.n_groups()];
        let a = IntegralAssignment::new(
            &inst,
            (0..inst.n_students()).map(|i| inst.edge(inst.student_edges(i)[0]).school).collect(),
        )
        .unwrap();
        let opts = IlpOptions { node_limit: 0, ..IlpOptions::default() };
        let r = ilp_min_violation(&inst, &GroupUtilities(zero), Some(&a), &[], opts).unwrap();
        let v = violation_report(&inst, &a).unwrap().total_overflow;
        assert_eq!(r.nodes, 0);
        assert_eq!(r.total_violation, v);
        assert_eq!(r.optimal, r.root_bound > v as f64 - 1.0 + BOUND_TOL);
    }
}
