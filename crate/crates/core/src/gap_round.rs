//! Iterative vertex rounding of the target-utility feasibility LP.
//!
//! Repeatedly solve for a vertex, fix every variable that came out integral
//! and drop it, until the vertex is fully fractional. What is left (the
//! fractional core) is sparse: with `g'` tight side rows, the excess degrees
//! over remaining students and schools sum to at most `2g'`. Each remaining
//! student is finally sent to its best supported school.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fairness::FairTarget;
use crate::instance::{
    group_utilities, violation_report, GroupUtilities, Instance, IntegralAssignment, ViolationReport, TOL,
};
use crate::model::{assignment_lp, group_rows, ChoiceRule, RowKind, RowLayout, SideRow};
use crate::simplex::{solve_vertex, LpOutcome, LpProblem};

/// The fully fractional remainder after fixing all integral vertex values.
#[derive(Debug, Clone)]
pub struct ResidualState {
    /// Reduced problem over the remaining fractional variables only.
    pub lp: LpProblem,
    pub layout: RowLayout,
    /// Edge id of each remaining variable.
    pub edges: Vec<usize>,
    /// Vertex value of each remaining variable, all in `(0, 1)`.
    pub values: Vec<f64>,
    /// Edge fixed to one for each student settled so far.
    pub fixed: Vec<Option<usize>>,
    pub remaining_students: Vec<usize>,
    pub remaining_schools: Vec<usize>,
    /// Remaining schools whose capacity row is tight.
    pub tight_schools: Vec<usize>,
    /// Capacity left at each school after the fixed assignments.
    pub residual_capacity: Vec<f64>,
    /// Side-row rhs after subtracting fixed contributions.
    pub residual_rhs: Vec<f64>,
    pub tight_side_rows: usize,
    pub student_degree: Vec<usize>,
    pub school_degree: Vec<usize>,
    pub iterations: usize,
    student_of: Vec<usize>,
}

impl ResidualState {
    pub fn support_size(&self) -> usize {
        self.edges.len()
    }

    pub fn is_tight_school(&self, j: usize) -> bool {
        self.tight_schools.binary_search(&j).is_ok()
    }

    /// Excess degree of every remaining vertex: `deg - 2` for students and
    /// tight schools, `deg` for the other remaining schools.
    pub fn excess_degrees(&self) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
        let students = self
            .remaining_students
            .iter()
            .map(|&i| (i, self.student_degree[i].saturating_sub(2)))
            .collect();
        let schools = self
            .remaining_schools
            .iter()
            .map(|&j| {
                let d = self.school_degree[j];
                (j, if self.is_tight_school(j) { d.saturating_sub(2) } else { d })
            })
            .collect();
        (students, schools)
    }

    pub fn total_excess(&self) -> usize {
        let (s, t) = self.excess_degrees();
        s.iter().chain(&t).map(|&(_, d)| d).sum()
    }

    /// Fractional edges incident to student `i`.
    pub fn student_support(&self, i: usize) -> Vec<usize> {
        self.support_pairs()
            .filter(|&(_, e, _)| e.0 == i)
            .map(|(_, e, _)| e.1)
            .collect()
    }

    fn support_pairs(&self) -> impl Iterator<Item = (usize, (usize, usize), f64)> + '_ {
        self.edges
            .iter()
            .enumerate()
            .map(|(v, &e)| (v, (self.student_of[v], e), self.values[v]))
    }

    /// Checks the structural facts the rounding bounds rest on.
    pub fn check_invariants(&self) -> Result<()> {
        if let Some(v) = self.values.iter().position(|&x| x <= TOL || x >= 1.0 - TOL) {
            return Err(Error::Internal(format!("residual variable {v} is not fractional")));
        }
        if let Some(&i) = self.remaining_students.iter().find(|&&i| self.student_degree[i] < 2) {
            return Err(Error::Internal(format!("remaining student {i} has degree < 2")));
        }
        if let Some(&j) = self.tight_schools.iter().find(|&&j| self.school_degree[j] < 2) {
            return Err(Error::Internal(format!("tight school {j} has degree < 2")));
        }
        let deg_sum: usize = self.student_degree.iter().sum::<usize>() + self.school_degree.iter().sum::<usize>();
        if deg_sum != 2 * self.support_size() {
            return Err(Error::Internal("handshake count mismatch".into()));
        }
        let excess = self.total_excess();
        if excess > 2 * self.tight_side_rows {
            return Err(Error::Internal(format!(
                "excess degree {excess} exceeds twice the {} tight side rows",
                self.tight_side_rows
            )));
        }
        Ok(())
    }

    /// Settles every remaining student with `rule` over its supported edges.
    pub fn complete_with(&self, inst: &Instance, rule: &ChoiceRule<'_>) -> Result<IntegralAssignment> {
        let mut support: Vec<Vec<usize>> = vec![Vec::new(); inst.n_students()];
        for (v, &e) in self.edges.iter().enumerate() {
            support[self.student_of[v]].push(e);
        }
        let mut school_of = Vec::with_capacity(inst.n_students());
        for i in 0..inst.n_students() {
            let e = match self.fixed[i] {
                Some(e) => e,
                None if !support[i].is_empty() => rule.choose(inst, i, &support[i]),
                None => return Err(Error::Internal(format!("student {i} neither fixed nor supported"))),
            };
            school_of.push(inst.edge(e).school);
        }
        IntegralAssignment::new(inst, school_of)
    }
}

impl ResidualState {
    fn assemble(
        inst: &Instance,
        lp: LpProblem,
        layout: RowLayout,
        values: Vec<f64>,
        fixed: Vec<Option<usize>>,
        side: &[SideRow],
        iterations: usize,
    ) -> Self {
        let edges: Vec<usize> = lp.var_origin().to_vec();
        let mut student_degree = vec![0; inst.n_students()];
        let mut school_degree = vec![0; inst.n_schools()];
        let mut frac_load = vec![0.0; inst.n_schools()];
        for (v, &e) in edges.iter().enumerate() {
            let ed = inst.edge(e);
            student_degree[ed.student] += 1;
            school_degree[ed.school] += 1;
            frac_load[ed.school] += values[v];
        }
        let mut residual_capacity: Vec<f64> = inst.capacities().iter().map(|&c| c as f64).collect();
        let mut chosen = Vec::new();
        for e in fixed.iter().flatten() {
            residual_capacity[inst.edge(*e).school] -= 1.0;
            chosen.push(*e);
        }
        let residual_rhs: Vec<f64> = side
            .iter()
            .map(|r| r.rhs - r.value_on_edges(inst.n_edges(), &chosen))
            .collect();
        let remaining_students: Vec<usize> = (0..inst.n_students()).filter(|&i| student_degree[i] > 0).collect();
        let remaining_schools: Vec<usize> = (0..inst.n_schools()).filter(|&j| school_degree[j] > 0).collect();
        let tight_schools = if layout.capacity_rows {
            remaining_schools
                .iter()
                .copied()
                .filter(|&j| (residual_capacity[j] - frac_load[j]).abs() <= TOL)
                .collect()
        } else {
            Vec::new()
        };
        let mut full = vec![0.0; inst.n_edges()];
        for (v, &e) in edges.iter().enumerate() {
            full[e] = values[v];
        }
        let tight_side_rows = side
            .iter()
            .zip(&residual_rhs)
            .filter(|(r, &rhs)| (r.value_on(&full) - rhs).abs() <= TOL)
            .count();
        let student_of = edges.iter().map(|&e| inst.edge(e).student).collect();
        ResidualState {
            lp,
            layout,
            edges,
            values,
            fixed,
            remaining_students,
            remaining_schools,
            tight_schools,
            residual_capacity,
            residual_rhs,
            tight_side_rows,
            student_degree,
            school_degree,
            iterations,
            student_of,
        }
    }
}

/// Solve-and-fix loop until the vertex is fully fractional.
///
/// `lp` must be an [`assignment_lp`] (variables are edges) whose side rows are `side`.
pub fn iterate_to_fractional_core(
    inst: &Instance,
    lp: LpProblem,
    layout: RowLayout,
    side: &[SideRow],
) -> Result<ResidualState> {
    let mut lp = lp;
    let mut fixed: Vec<Option<usize>> = vec![None; inst.n_students()];
    let cap = inst.n_edges() + 1;
    let mut iterations = 0;
    let values = loop {
        if lp.n_vars() == 0 {
            if lp.n_rows() > 0 {
                return Err(Error::Infeasible("fixed assignment violates a row".into()));
            }
            break Vec::new();
        }
        iterations += 1;
        if iterations > cap {
            return Err(Error::Internal("fixing loop did not terminate".into()));
        }
        let sol = match solve_vertex(&lp)? {
            LpOutcome::Optimal(s) => s,
            LpOutcome::Infeasible => return Err(Error::Infeasible("rounding LP".into())),
            LpOutcome::Unbounded => return Err(Error::Unbounded),
        };
        let mut fixes = Vec::new();
        for (v, &x) in sol.values.iter().enumerate() {
            if x <= TOL {
                fixes.push((v, 0.0));
            } else if x >= 1.0 - TOL {
                fixes.push((v, 1.0));
                let e = lp.var_origin()[v];
                fixed[inst.edge(e).student] = Some(e);
            }
        }
        if fixes.is_empty() {
            break sol.values;
        }
        let hint: Vec<f64> = sol.values.clone();
        lp.set_hint(Some(hint));
        lp = lp.fix_variables(&fixes)?;
    };
    lp.set_hint(None);
    Ok(ResidualState::assemble(inst, lp, layout, values, fixed, side, iterations))
}

/// Output of a rounding routine.
#[derive(Debug, Clone, Serialize)]
pub struct Rounded {
    pub assignment: IntegralAssignment,
    pub report: ViolationReport,
    pub utilities: GroupUtilities,
    pub fractional_vars: usize,
}

impl Rounded {
    pub(crate) fn new(inst: &Instance, assignment: IntegralAssignment, fractional_vars: usize) -> Result<Self> {
        Ok(Rounded {
            report: violation_report(inst, &assignment)?,
            utilities: group_utilities(inst, &assignment)?,
            assignment,
            fractional_vars,
        })
    }
}

/// Vertex-solves the target LP for `target` and returns its fractional core.
pub fn fractional_core(inst: &Instance, target: &FairTarget) -> Result<(ResidualState, Vec<SideRow>)> {
    let rows = group_rows(inst, target.utilities.as_slice());
    let (mut lp, layout) = assignment_lp(inst, &rows, true);
    lp.set_hint(Some(target.witness.values.clone()));
    let state = iterate_to_fractional_core(inst, lp, layout, &rows)?;
    state.check_invariants()?;
    Ok((state, rows))
}

/// Rounds the fractional core by sending each remaining student to its
/// highest-utility supported school.
pub fn gap_round(inst: &Instance, target: &FairTarget) -> Result<Rounded> {
    let (state, _) = fractional_core(inst, target)?;
    let assignment = state.complete_with(inst, &ChoiceRule::MaxUtility)?;
    Rounded::new(inst, assignment, state.support_size())
}

/// Counts rows by kind in a reduced problem; used by diagnostics.
pub fn row_kinds(state: &ResidualState) -> (usize, usize, usize) {
    let mut counts = (0, 0, 0);
    for &o in state.lp.row_origin() {
        match state.layout.kind(o) {
            RowKind::Student(_) => counts.0 += 1,
            RowKind::School(_) => counts.1 += 1,
            RowKind::Side(_) => counts.2 += 1,
        }
    }
    counts
}
