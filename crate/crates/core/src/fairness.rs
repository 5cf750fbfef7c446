//! Concave group-fairness objectives over the assignment polytope.
//!
//! Separable objectives `h(U) = sum_k f_k(U_k)` are maximized by an interior
//! point method by default, or by Kelley cutting planes on the assignment LP.
//! The two return different witnesses: a relative-interior point, or a
//! vertex of the final cut model. Max-min is a single LP and linear welfare
//! is one transport solve.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interior::{interior_point, Separable};
use crate::instance::{group_utilities, FractionalAssignment, GroupUtilities, Instance};
use crate::model::{assignment_lp, group_rows, SideRow};
use crate::par;
use crate::simplex::{solve_vertex, LpOutcome, LpProblem, Phase, Relation, Tableau};
use crate::transport::max_weight_assignment;

pub const DEFAULT_EPS: f64 = 1e-6;
pub const MAX_ITERATIONS: usize = 500;
/// Nash terms are evaluated at `max(U_k, NASH_FLOOR * solo_k)`.
pub const NASH_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    NashWelfare,
    MaxMin,
    /// `sum_k a_k U_k^r`; empty weights mean all ones.
    Ces { weights: Vec<f64>, r: f64 },
    /// `sum_k a_k U_k`; empty weights mean all ones.
    LinearWelfare { weights: Vec<f64> },
}

impl Objective {
    pub fn validate(&self, n_groups: usize) -> Result<()> {
        let check_weights = |w: &[f64]| -> Result<()> {
            if !w.is_empty() && w.len() != n_groups {
                return Err(Error::DimensionMismatch {
                    what: "objective weights",
                    expected: n_groups,
                    found: w.len(),
                });
            }
            if w.iter().any(|&a| !(a.is_finite() && a >= 0.0)) {
                return Err(Error::invalid("weights", "must be finite and nonnegative"));
            }
            Ok(())
        };
        match self {
            Objective::Ces { weights, r } => {
                if !(*r > 0.0 && *r <= 1.0) {
                    return Err(Error::invalid("r", format!("CES exponent {r} outside (0, 1]")));
                }
                check_weights(weights)
            }
            Objective::LinearWelfare { weights } => check_weights(weights),
            _ => Ok(()),
        }
    }

    fn weight(&self, k: usize) -> f64 {
        match self {
            Objective::Ces { weights, .. } | Objective::LinearWelfare { weights } if !weights.is_empty() => {
                weights[k]
            }
            _ => 1.0,
        }
    }

    /// `h(U)`. For Nash, `floors` bounds each argument from below.
    pub fn value(&self, u: &[f64], floors: &[f64]) -> f64 {
        match self {
            Objective::MaxMin => u.iter().copied().fold(f64::INFINITY, f64::min),
            _ => (0..u.len()).map(|k| self.term(k, u[k], floors[k]).0).sum(),
        }
    }

    /// `-f_k''(x)`, nonnegative for the supported objectives.
    fn curvature(&self, k: usize, x: f64) -> f64 {
        match self {
            Objective::NashWelfare => 1.0 / (x * x),
            Objective::Ces { r, .. } => self.weight(k) * r * (1.0 - r) * x.powf(r - 2.0),
            _ => 0.0,
        }
    }

    /// `(f_k(x), f_k'(x))` for separable objectives.
    fn term(&self, k: usize, x: f64, floor: f64) -> (f64, f64) {
        match self {
            Objective::NashWelfare => {
                let x = x.max(floor);
                (x.ln(), 1.0 / x)
            }
            Objective::Ces { r, .. } => {
                let a = self.weight(k);
                let xd = x.max(floor);
                (a * x.max(0.0).powf(*r), a * r * xd.powf(r - 1.0))
            }
            Objective::LinearWelfare { .. } => {
                let a = self.weight(k);
                (a * x, a)
            }
            Objective::MaxMin => unreachable!("max-min is not separable"),
        }
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, tail) = s.split_once(':').unwrap_or((s, ""));
        let obj = match head {
            "nash" => Objective::NashWelfare,
            "maxmin" => Objective::MaxMin,
            "welfare" => Objective::LinearWelfare { weights: Vec::new() },
            "ces" => {
                let r = tail
                    .strip_prefix("r=")
                    .ok_or_else(|| Error::invalid("objective", "expected ces:r=<exponent>"))?;
                let r: f64 = r
                    .parse()
                    .map_err(|_| Error::invalid("objective", format!("bad CES exponent `{r}`")))?;
                Objective::Ces { weights: Vec::new(), r }
            }
            _ => return Err(Error::invalid("objective", format!("unknown objective `{s}`"))),
        };
        if head != "ces" && !tail.is_empty() {
            return Err(Error::invalid("objective", format!("`{head}` takes no parameters")));
        }
        Ok(obj)
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Objective::NashWelfare => write!(f, "nash"),
            Objective::MaxMin => write!(f, "maxmin"),
            Objective::Ces { r, .. } => write!(f, "ces:r={r}"),
            Objective::LinearWelfare { .. } => write!(f, "welfare"),
        }
    }
}

/// Method for the separable objectives.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// Primal-dual interior point; the witness is a relative-interior point.
    #[default]
    InteriorPoint,
    /// Kelley cutting planes; the witness is a vertex of the cut model.
    CuttingPlane,
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interior" => Ok(Solver::InteriorPoint),
            "kelley" => Ok(Solver::CuttingPlane),
            _ => Err(Error::invalid("solver", format!("unknown solver {s:?}; expected interior|kelley"))),
        }
    }
}

/// Target utilities with a feasible fractional witness achieving them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairTarget {
    pub objective: Objective,
    pub utilities: GroupUtilities,
    pub witness: FractionalAssignment,
    pub objective_value: f64,
    /// Best proven upper bound on the optimum.
    pub upper_bound: f64,
    pub iterations: usize,
    /// `(incumbent, upper bound)` after each iteration.
    #[serde(default)]
    pub trace: Vec<(f64, f64)>,
}

impl FairTarget {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("target serializes")
    }
}

/// Edge weights for maximizing `sum_k w_k U_k`.
fn edge_weights(inst: &Instance, w: &[f64]) -> Vec<f64> {
    inst.edges()
        .iter()
        .map(|e| e.utility * inst.student_groups(e.student).iter().map(|&k| w[k]).sum::<f64>())
        .collect()
}

fn utilities_of(inst: &Instance, chosen: &[usize]) -> Vec<f64> {
    let mut u = vec![0.0; inst.n_groups()];
    for &e in chosen {
        let edge = inst.edge(e);
        for &k in inst.student_groups(edge.student) {
            u[k] += edge.utility;
        }
    }
    u
}

fn integral_witness(inst: &Instance, chosen: &[usize]) -> FractionalAssignment {
    let mut y = vec![0.0; inst.n_edges()];
    for &e in chosen {
        y[e] = 1.0;
    }
    FractionalAssignment::new(y)
}

/// Best utility each group could get if it were the only one that counted.
pub fn solo_utilities(inst: &Instance) -> Result<Vec<f64>> {
    let groups: Vec<usize> = (0..inst.n_groups()).collect();
    par::map(&groups, |&k| {
        let mut w = vec![0.0; inst.n_groups()];
        w[k] = 1.0;
        let chosen = max_weight_assignment(inst, &edge_weights(inst, &w))?;
        Ok(utilities_of(inst, &chosen)[k])
    })
    .into_iter()
    .collect()
}

/// `U_k / U_k^solo` per group (`1` for groups that can get nothing).
pub fn proportionality_check(inst: &Instance, u: &GroupUtilities) -> Result<Vec<f64>> {
    let solo = solo_utilities(inst)?;
    Ok(u.as_slice()
        .iter()
        .zip(&solo)
        .map(|(&x, &s)| if s > 0.0 { x / s } else { 1.0 })
        .collect())
}

/// Target LP: the assignment polytope plus `U_k(y) >= targets[k]`, zero objective.
pub fn build_target_lp(inst: &Instance, targets: &GroupUtilities) -> LpProblem {
    assignment_lp(inst, &group_rows(inst, targets.as_slice()), true).0
}

pub fn maximize_fairness(inst: &Instance, obj: &Objective, eps: f64) -> Result<FairTarget> {
    maximize_fairness_with(inst, obj, eps, Solver::default())
}

pub fn maximize_fairness_with(inst: &Instance, obj: &Objective, eps: f64, solver: Solver) -> Result<FairTarget> {
    obj.validate(inst.n_groups())?;
    if inst.capacities().iter().sum::<u64>() < inst.n_students() as u64 {
        return Err(Error::Infeasible("total capacity below student count".into()));
    }
    match obj {
        Objective::MaxMin => max_min(inst),
        Objective::LinearWelfare { .. } => {
            let w: Vec<f64> = (0..inst.n_groups()).map(|k| obj.weight(k)).collect();
            let chosen = max_weight_assignment(inst, &edge_weights(inst, &w))?;
            let witness = integral_witness(inst, &chosen);
            let utilities = group_utilities(inst, &witness)?;
            let v = obj.value(utilities.as_slice(), &vec![0.0; w.len()]);
            Ok(FairTarget {
                objective: obj.clone(),
                utilities,
                witness,
                objective_value: v,
                upper_bound: v,
                iterations: 1,
                trace: vec![(v, v)],
            })
        }
        _ if solver == Solver::CuttingPlane => kelley(inst, obj, eps),
        _ => interior(inst, obj, eps),
    }
}

fn max_min(inst: &Instance) -> Result<FairTarget> {
    let g = inst.n_groups();
    let solo = solo_utilities(inst)?;
    let (mut lp, _) = assignment_lp(inst, &[], true);
    let t_hi = solo.iter().copied().fold(f64::INFINITY, f64::min);
    let t_hi = if t_hi.is_finite() { t_hi } else { 0.0 };
    // Minimize -t.
    let t = lp.add_var(0.0, t_hi, -1.0);
    for mut row in group_rows(inst, &vec![0.0; g]) {
        row.coeffs.push((t, -1.0));
        lp.add_row(row.coeffs, Relation::Ge, 0.0);
    }
    let sol = match solve_vertex(&lp)? {
        LpOutcome::Optimal(s) => s,
        LpOutcome::Infeasible => return Err(Error::Infeasible("assignment polytope is empty".into())),
        LpOutcome::Unbounded => return Err(Error::Unbounded),
    };
    let lp_value = -sol.objective;
    let witness = FractionalAssignment::new(sol.values[..inst.n_edges()].to_vec());
    let utilities = group_utilities(inst, &witness)?;
    let v = if g == 0 { 0.0 } else { Objective::MaxMin.value(utilities.as_slice(), &[]) };
    Ok(FairTarget {
        objective: Objective::MaxMin,
        utilities,
        witness,
        objective_value: v,
        upper_bound: lp_value,
        iterations: 1,
        trace: vec![(v, lp_value)],
    })
}

/// Solo utilities, and the groups that enter the objective.
fn active_groups(inst: &Instance, obj: &Objective) -> Result<(Vec<f64>, Vec<bool>)> {
    let g = inst.n_groups();
    let solo = solo_utilities(inst)?;
    let mut active = vec![true; g];
    for k in 0..g {
        if solo[k] <= 0.0 {
            match obj {
                Objective::NashWelfare => {
                    return Err(Error::DegenerateObjective(format!(
                        "group {k} cannot receive positive utility; drop or reweight it"
                    )))
                }
                _ => active[k] = false,
            }
        }
        if obj.weight(k) == 0.0 {
            active[k] = false;
        }
    }
    Ok((solo, active))
}

struct Terms<'a> {
    obj: &'a Objective,
    groups: Vec<usize>,
}

impl Separable for Terms<'_> {
    fn eval(&self, k: usize, x: f64) -> (f64, f64, f64) {
        let k = self.groups[k];
        let (f, df) = self.obj.term(k, x, 0.0);
        (f, df, self.obj.curvature(k, x))
    }
}

fn interior(inst: &Instance, obj: &Objective, eps: f64) -> Result<FairTarget> {
    let g = inst.n_groups();
    let (_, active) = active_groups(inst, obj)?;
    let terms = Terms { obj, groups: (0..g).filter(|&k| active[k]).collect() };
    let rows = group_rows(inst, &vec![0.0; g]);
    let coeffs: Vec<Vec<(usize, f64)>> = terms.groups.iter().map(|&k| rows[k].coeffs.clone()).collect();
    let res = interior_point(inst, &coeffs, &terms, eps)?;
    let mut y: Vec<f64> = res.y.iter().map(|&v| v.max(0.0)).collect();
    for i in 0..inst.n_students() {
        let es = inst.student_edges(i);
        let total: f64 = es.iter().map(|&e| y[e]).sum();
        for &e in es {
            y[e] /= total;
        }
    }
    let witness = FractionalAssignment::new(y);
    let utilities = group_utilities(inst, &witness)?;
    let value = terms.groups.iter().map(|&k| obj.term(k, utilities.as_slice()[k], 0.0).0).sum();
    Ok(FairTarget {
        objective: obj.clone(),
        utilities,
        witness,
        objective_value: value,
        upper_bound: res.upper_bound,
        iterations: res.iterations,
        trace: res.trace,
    })
}

/// Kelley cutting planes over `(y, t)`: maximize `sum_k t_k` subject to
/// `y` in the polytope and tangent cuts `t_k <= f_k(a) + f_k'(a) (U_k(y) - a)`.
/// Each round adds the cuts violated at the current vertex and repairs
/// the basis with the dual simplex.
fn kelley(inst: &Instance, obj: &Objective, eps: f64) -> Result<FairTarget> {
    let g = inst.n_groups();
    let ne = inst.n_edges();
    let (solo, active) = active_groups(inst, obj)?;
    let floors: Vec<f64> = solo.iter().map(|&s| NASH_FLOOR * s.max(0.0)).collect();
    let h = |u: &[f64]| -> f64 {
        (0..g).filter(|&k| active[k]).map(|k| obj.term(k, u[k], floors[k]).0).sum()
    };
    let groups = group_rows(inst, &vec![0.0; g]);

    let (mut lp, _) = assignment_lp(inst, &[], true);
    let mut t_var = vec![usize::MAX; g];
    for k in (0..g).filter(|&k| active[k]) {
        let lo = obj.term(k, floors[k], floors[k]).0.min(obj.term(k, 0.0, floors[k]).0);
        let hi = obj.term(k, solo[k], floors[k]).0;
        t_var[k] = lp.add_var(lo, hi.max(lo), -1.0);
    }
    let cut = |k: usize, a: f64| -> (Vec<(usize, f64)>, f64) {
        let (fa, da) = obj.term(k, a, floors[k]);
        let mut coeffs = vec![(t_var[k], 1.0)];
        coeffs.extend(groups[k].coeffs.iter().map(|&(e, u)| (e, -da * u)));
        (coeffs, fa - da * a)
    };
    let mut cuts: Vec<Vec<f64>> = vec![Vec::new(); g];
    for k in (0..g).filter(|&k| active[k]) {
        for a in [solo[k] / g as f64, solo[k]] {
            let (coeffs, rhs) = cut(k, a);
            lp.add_row(coeffs, Relation::Le, rhs);
            cuts[k].push(a);
        }
    }
    let inv_solo: Vec<f64> =
        (0..g).map(|k| if active[k] { 1.0 / solo[k].max(f64::MIN_POSITIVE) } else { 0.0 }).collect();
    let start = max_weight_assignment(inst, &edge_weights(inst, &inv_solo))?;
    let mut hint = integral_witness(inst, &start).values;
    hint.extend_from_slice(&lp.lower()[ne..]);
    lp.set_hint(Some(hint));

    let mut tab = Tableau::new(&lp);
    tab.dual_tol = 1e-12;
    match tab.primal()? {
        Phase::Optimal => {}
        Phase::Infeasible => return Err(Error::Infeasible("assignment polytope is empty".into())),
        Phase::Unbounded => return Err(Error::Internal("fairness cut model unbounded".into())),
    }

    let mut best_h = f64::NEG_INFINITY;
    let mut best_y = Vec::new();
    let mut best_ub = f64::INFINITY;
    let mut trace = Vec::new();
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        if iterations % 25 == 0 {
            tab.refresh_values();
            if let Phase::Infeasible = tab.dual()? {
                return Err(Error::Internal("fairness cut model lost feasibility".into()));
            }
        }
        let x = tab.values().to_vec();
        let y = snap(&x[..ne]);
        let u = utilities_on(&groups, &y);
        let h_cur = h(&u);
        if h_cur > best_h {
            best_h = h_cur;
            best_y = y;
        }
        best_ub = best_ub.min(-tab.objective());
        trace.push((best_h, best_ub));
        if best_ub - best_h <= eps * best_h.abs().max(1.0) {
            break;
        }
        let mut added = false;
        for k in (0..g).filter(|&k| active[k]) {
            let a = u[k].max(floors[k]);
            let (fa, _) = obj.term(k, a, floors[k]);
            let scale = solo[k].max(f64::MIN_POSITIVE);
            if x[t_var[k]] > fa + 1e-12 * fa.abs().max(1.0)
                && cuts[k].iter().all(|&b| (a - b).abs() > 1e-12 * scale)
            {
                let (coeffs, rhs) = cut(k, a);
                tab.add_row(coeffs, Relation::Le, rhs);
                cuts[k].push(a);
                added = true;
            }
        }
        if !added {
            break;
        }
        if let Phase::Infeasible = tab.dual()? {
            return Err(Error::Internal("fairness cut model lost feasibility".into()));
        }
    }

    let witness = FractionalAssignment::new(best_y);
    let utilities = group_utilities(inst, &witness)?;
    Ok(FairTarget {
        objective: obj.clone(),
        objective_value: h(utilities.as_slice()),
        utilities,
        witness,
        upper_bound: best_ub,
        iterations,
        trace,
    })
}

/// Clears rounding drift near the bounds of `[0, 1]`.
fn snap(y: &[f64]) -> Vec<f64> {
    y.iter()
        .map(|&v| if v < 1e-9 { 0.0 } else if v > 1.0 - 1e-9 { 1.0 } else { v })
        .collect()
}

fn utilities_on(groups: &[SideRow], y: &[f64]) -> Vec<f64> {
    groups.iter().map(|row| row.coeffs.iter().map(|&(e, u)| u * y[e]).sum()).collect()
}
