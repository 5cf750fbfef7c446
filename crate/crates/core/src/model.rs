//! Shared LP model of the assignment polytope with extra covering rows.
//!
//! Variable `e` is edge `e` of the instance. Rows are laid out as student
//! equalities, then (optionally) school capacities, then side rows
//! `sum_e q_e y_e >= rhs`; [`RowLayout`] decodes a row origin back to its kind.

use crate::constraints::PreferenceOrders;
use crate::instance::Instance;
use crate::simplex::{LpProblem, Relation, Sense};

/// A covering row over edges: `sum coeff * y_e >= rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct SideRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl SideRow {
    pub fn value_on(&self, edge_values: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(e, c)| c * edge_values[e]).sum()
    }

    /// Row value of an integral assignment given as one edge per student.
    pub fn value_on_edges(&self, n_edges: usize, chosen: &[usize]) -> f64 {
        let mut y = vec![0.0; n_edges];
        for &e in chosen {
            y[e] = 1.0;
        }
        self.value_on(&y)
    }
}

/// Group utility rows `U_k(y) >= targets[k]`.
pub fn group_rows(inst: &Instance, targets: &[f64]) -> Vec<SideRow> {
    let mut rows: Vec<SideRow> = targets
        .iter()
        .map(|&rhs| SideRow {
            coeffs: Vec::new(),
            rhs,
        })
        .collect();
    for (e, edge) in inst.edges().iter().enumerate() {
        if edge.utility == 0.0 {
            continue;
        }
        for &k in inst.student_groups(edge.student) {
            rows[k].coeffs.push((e, edge.utility));
        }
    }
    rows
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Student(usize),
    School(usize),
    Side(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowLayout {
    pub n_students: usize,
    pub n_schools: usize,
    pub capacity_rows: bool,
}

impl RowLayout {
    pub fn kind(&self, origin: usize) -> RowKind {
        if origin < self.n_students {
            RowKind::Student(origin)
        } else if self.capacity_rows && origin < self.n_students + self.n_schools {
            RowKind::School(origin - self.n_students)
        } else {
            let skip = self.n_students + if self.capacity_rows { self.n_schools } else { 0 };
            RowKind::Side(origin - skip)
        }
    }
}

/// Feasibility LP (zero objective) over the assignment polytope plus `side` rows.
pub fn assignment_lp(inst: &Instance, side: &[SideRow], capacity_rows: bool) -> (LpProblem, RowLayout) {
    let mut lp = LpProblem::new(inst.n_edges(), Sense::Minimize);
    for i in 0..inst.n_students() {
        lp.add_row(
            inst.student_edges(i).iter().map(|&e| (e, 1.0)).collect(),
            Relation::Eq,
            1.0,
        );
    }
    if capacity_rows {
        for j in 0..inst.n_schools() {
            lp.add_row(
                inst.school_edges(j).iter().map(|&e| (e, 1.0)).collect(),
                Relation::Le,
                inst.capacities()[j] as f64,
            );
        }
    }
    for row in side {
        lp.add_row(row.coeffs.clone(), Relation::Ge, row.rhs);
    }
    let layout = RowLayout {
        n_students: inst.n_students(),
        n_schools: inst.n_schools(),
        capacity_rows,
    };
    (lp, layout)
}

/// How a student with several supported edges picks one.
#[derive(Debug, Clone, Copy)]
pub enum ChoiceRule<'a> {
    /// Highest utility, ties to the lowest school id.
    MaxUtility,
    /// Lowest school id.
    LowestSchool,
    /// Most preferred school under the student's order.
    Preference(&'a PreferenceOrders),
}

impl ChoiceRule<'_> {
    /// Picks one edge among `candidates` (all incident to `student`).
    pub fn choose(&self, inst: &Instance, student: usize, candidates: &[usize]) -> usize {
        debug_assert!(!candidates.is_empty());
        let school = |e: usize| inst.edge(e).school;
        match self {
            ChoiceRule::MaxUtility => *candidates
                .iter()
                .max_by(|&&a, &&b| {
                    inst.edge(a)
                        .utility
                        .partial_cmp(&inst.edge(b).utility)
                        .unwrap()
                        .then(school(b).cmp(&school(a)))
                })
                .unwrap(),
            ChoiceRule::LowestSchool => *candidates.iter().min_by_key(|&&e| school(e)).unwrap(),
            ChoiceRule::Preference(orders) => *candidates
                .iter()
                .min_by_key(|&&e| (orders.position(student, school(e)), school(e)))
                .unwrap(),
        }
    }
}
