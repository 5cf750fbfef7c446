//! Assignment instances, fractional/integral solutions and utility accounting.
//!
//! Students and schools are dense 0-based ids. Edges keep their input order,
//! which is the canonical edge id used everywhere else in the crate (LP
//! variable order, tie-breaking, serialization).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integrality/tightness tolerance shared by every module.
pub const TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub student: usize,
    pub school: usize,
    pub utility: f64,
    pub rank: Option<u32>,
}

/// A bipartite student/school instance with capacities and overlapping groups.
///
/// Immutable once constructed; all invariants are checked in [`Instance::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    n_students: usize,
    n_schools: usize,
    capacities: Vec<u64>,
    edges: Vec<Edge>,
    groups: Vec<Vec<usize>>,
    student_edges: Vec<Vec<usize>>,
    school_edges: Vec<Vec<usize>>,
    student_groups: Vec<Vec<usize>>,
}

impl Instance {
    pub fn new(
        n_students: usize,
        n_schools: usize,
        capacities: Vec<u64>,
        edges: Vec<Edge>,
        groups: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if capacities.len() != n_schools {
            return Err(Error::invalid(
                "capacities",
                format!("expected {n_schools} entries, found {}", capacities.len()),
            ));
        }
        let mut student_edges = vec![Vec::new(); n_students];
        let mut school_edges = vec![Vec::new(); n_schools];
        let any_rank = edges.iter().any(|e| e.rank.is_some());
        for (id, e) in edges.iter().enumerate() {
            if e.student >= n_students {
                return Err(Error::invalid(
                    "edges",
                    format!("edge {id}: student {} out of range", e.student),
                ));
            }
            if e.school >= n_schools {
                return Err(Error::invalid(
                    "edges",
                    format!("edge {id}: school {} out of range", e.school),
                ));
            }
            if !e.utility.is_finite() || e.utility < 0.0 {
                return Err(Error::invalid(
                    "edges",
                    format!("edge {id}: utility must be finite and nonnegative"),
                ));
            }
            match e.rank {
                Some(0) => {
                    return Err(Error::invalid("edges", format!("edge {id}: rank must be positive")))
                }
                None if any_rank => {
                    return Err(Error::invalid(
                        "edges",
                        format!("edge {id}: rank missing in a ranking instance"),
                    ))
                }
                _ => {}
            }
            if student_edges[e.student]
                .iter()
                .any(|&other: &usize| edges[other].school == e.school)
            {
                return Err(Error::invalid(
                    "edges",
                    format!("duplicate edge ({}, {})", e.student, e.school),
                ));
            }
            student_edges[e.student].push(id);
            school_edges[e.school].push(id);
        }
        if let Some(i) = student_edges.iter().position(Vec::is_empty) {
            return Err(Error::invalid("edges", format!("student {i} has no edge")));
        }
        let mut student_groups = vec![Vec::new(); n_students];
        let mut sorted_groups = Vec::with_capacity(groups.len());
        for (k, mut members) in groups.into_iter().enumerate() {
            members.sort_unstable();
            members.dedup();
            if let Some(&bad) = members.iter().find(|&&i| i >= n_students) {
                return Err(Error::invalid(
                    "groups",
                    format!("group {k}: student {bad} out of range"),
                ));
            }
            for &i in &members {
                student_groups[i].push(k);
            }
            sorted_groups.push(members);
        }
        Ok(Instance {
            n_students,
            n_schools,
            capacities,
            edges,
            groups: sorted_groups,
            student_edges,
            school_edges,
            student_groups,
        })
    }

    pub fn n_students(&self) -> usize {
        self.n_students
    }

    pub fn n_schools(&self) -> usize {
        self.n_schools
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn capacities(&self) -> &[u64] {
        &self.capacities
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: usize) -> &Edge {
        &self.edges[id]
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    /// Edge ids incident to student `i`, in edge-id order.
    pub fn student_edges(&self, i: usize) -> &[usize] {
        &self.student_edges[i]
    }

    pub fn school_edges(&self, j: usize) -> &[usize] {
        &self.school_edges[j]
    }

    /// Groups containing student `i`, ascending.
    pub fn student_groups(&self, i: usize) -> &[usize] {
        &self.student_groups[i]
    }

    pub fn is_ranked(&self) -> bool {
        self.edges.first().is_some_and(|e| e.rank.is_some())
    }

    pub fn max_rank(&self) -> u32 {
        self.edges.iter().filter_map(|e| e.rank).max().unwrap_or(0)
    }

    pub fn edge_between(&self, student: usize, school: usize) -> Option<usize> {
        self.student_edges
            .get(student)?
            .iter()
            .copied()
            .find(|&e| self.edges[e].school == school)
    }

    /// Same graph and groups with different capacities.
    pub fn with_capacities(&self, capacities: Vec<u64>) -> Result<Self> {
        Instance::new(
            self.n_students,
            self.n_schools,
            capacities,
            self.edges.clone(),
            self.groups.clone(),
        )
    }

    /// Same instance with a replaced group list.
    pub fn with_groups(&self, groups: Vec<Vec<usize>>) -> Result<Self> {
        Instance::new(
            self.n_students,
            self.n_schools,
            self.capacities.clone(),
            self.edges.clone(),
            groups,
        )
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let raw: RawInstance = serde_json::from_slice(bytes)?;
        raw.into_instance()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&RawInstance::from(self)).expect("instance serializes")
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    n_students: usize,
    n_schools: usize,
    capacities: Vec<i64>,
    edges: Vec<RawEdge>,
    groups: Vec<Vec<i64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEdge {
    s: i64,
    t: i64,
    u: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rank: Option<i64>,
}

fn nonneg(field: &str, v: i64) -> Result<usize> {
    usize::try_from(v).map_err(|_| Error::invalid(field, format!("negative value {v}")))
}

impl RawInstance {
    fn into_instance(self) -> Result<Instance> {
        let capacities = self
            .capacities
            .iter()
            .map(|&c| nonneg("capacities", c).map(|c| c as u64))
            .collect::<Result<Vec<_>>>()?;
        let edges = self
            .edges
            .iter()
            .map(|e| {
                Ok(Edge {
                    student: nonneg("edges", e.s)?,
                    school: nonneg("edges", e.t)?,
                    utility: e.u,
                    rank: e
                        .rank
                        .map(|r| {
                            u32::try_from(r).map_err(|_| Error::invalid("edges", "rank out of range"))
                        })
                        .transpose()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let groups = self
            .groups
            .iter()
            .map(|g| g.iter().map(|&i| nonneg("groups", i)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Instance::new(self.n_students, self.n_schools, capacities, edges, groups)
    }
}

impl From<&Instance> for RawInstance {
    fn from(inst: &Instance) -> Self {
        RawInstance {
            n_students: inst.n_students,
            n_schools: inst.n_schools,
            capacities: inst.capacities.iter().map(|&c| c as i64).collect(),
            edges: inst
                .edges
                .iter()
                .map(|e| RawEdge {
                    s: e.student as i64,
                    t: e.school as i64,
                    u: e.utility,
                    rank: e.rank.map(i64::from),
                })
                .collect(),
            groups: inst
                .groups
                .iter()
                .map(|g| g.iter().map(|&i| i as i64).collect())
                .collect(),
        }
    }
}

/// Per-edge fractional assignment values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionalAssignment {
    pub values: Vec<f64>,
    /// Set when school capacities are not meant to hold.
    #[serde(default)]
    pub relaxed: bool,
}

impl FractionalAssignment {
    pub fn new(values: Vec<f64>) -> Self {
        FractionalAssignment {
            values,
            relaxed: false,
        }
    }

    /// Checks membership in the assignment polytope within [`TOL`].
    pub fn validate(&self, inst: &Instance) -> Result<()> {
        if self.values.len() != inst.n_edges() {
            return Err(Error::DimensionMismatch {
                what: "fractional assignment",
                expected: inst.n_edges(),
                found: self.values.len(),
            });
        }
        if let Some(e) = self
            .values
            .iter()
            .position(|&v| !(-TOL..=1.0 + TOL).contains(&v))
        {
            return Err(Error::invalid("values", format!("edge {e} outside [0,1]")));
        }
        for i in 0..inst.n_students() {
            let s: f64 = inst.student_edges(i).iter().map(|&e| self.values[e]).sum();
            if (s - 1.0).abs() > TOL {
                return Err(Error::invalid("values", format!("student {i} sums to {s}")));
            }
        }
        if !self.relaxed {
            for j in 0..inst.n_schools() {
                let s: f64 = inst.school_edges(j).iter().map(|&e| self.values[e]).sum();
                if s > inst.capacities()[j] as f64 + TOL {
                    return Err(Error::invalid(
                        "values",
                        format!("school {j} load {s} exceeds capacity"),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// One school per student, always along an existing edge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegralAssignment {
    pub school_of: Vec<usize>,
}

impl IntegralAssignment {
    pub fn new(inst: &Instance, school_of: Vec<usize>) -> Result<Self> {
        let a = IntegralAssignment { school_of };
        a.validate(inst)?;
        Ok(a)
    }

    pub fn validate(&self, inst: &Instance) -> Result<()> {
        if self.school_of.len() != inst.n_students() {
            return Err(Error::DimensionMismatch {
                what: "integral assignment",
                expected: inst.n_students(),
                found: self.school_of.len(),
            });
        }
        for (i, &j) in self.school_of.iter().enumerate() {
            if inst.edge_between(i, j).is_none() {
                return Err(Error::invalid(
                    "school_of",
                    format!("student {i} assigned to non-adjacent school {j}"),
                ));
            }
        }
        Ok(())
    }

    pub fn loads(&self, inst: &Instance) -> Vec<u64> {
        let mut loads = vec![0u64; inst.n_schools()];
        for &j in &self.school_of {
            loads[j] += 1;
        }
        loads
    }

    /// Edge id used by each student.
    pub fn edge_ids(&self, inst: &Instance) -> Vec<usize> {
        self.school_of
            .iter()
            .enumerate()
            .map(|(i, &j)| inst.edge_between(i, j).expect("validated assignment"))
            .collect()
    }

    pub fn to_fractional(&self, inst: &Instance) -> FractionalAssignment {
        let mut values = vec![0.0; inst.n_edges()];
        for e in self.edge_ids(inst) {
            values[e] = 1.0;
        }
        FractionalAssignment {
            values,
            relaxed: true,
        }
    }

    pub fn from_json(inst: &Instance, bytes: &[u8]) -> Result<Self> {
        let a: IntegralAssignment = serde_json::from_slice(bytes)?;
        a.validate(inst)?;
        Ok(a)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("assignment serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupUtilities(pub Vec<f64>);

impl GroupUtilities {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True when every entry is at least `other`'s minus `tol`.
    pub fn dominates(&self, other: &GroupUtilities, tol: f64) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| *a >= *b - tol)
    }
}

#[derive(Debug, Clone, Copy)]
pub enum AssignmentRef<'a> {
    Fractional(&'a FractionalAssignment),
    Integral(&'a IntegralAssignment),
}

impl<'a> From<&'a FractionalAssignment> for AssignmentRef<'a> {
    fn from(a: &'a FractionalAssignment) -> Self {
        AssignmentRef::Fractional(a)
    }
}

impl<'a> From<&'a IntegralAssignment> for AssignmentRef<'a> {
    fn from(a: &'a IntegralAssignment) -> Self {
        AssignmentRef::Integral(a)
    }
}

/// `U_k = sum over members i of S_k of sum_j u_ij y_ij`.
pub fn group_utilities<'a>(
    inst: &Instance,
    a: impl Into<AssignmentRef<'a>>,
) -> Result<GroupUtilities> {
    let mut per_student = vec![0.0; inst.n_students()];
    match a.into() {
        AssignmentRef::Fractional(f) => {
            if f.values.len() != inst.n_edges() {
                return Err(Error::DimensionMismatch {
                    what: "fractional assignment",
                    expected: inst.n_edges(),
                    found: f.values.len(),
                });
            }
            for (e, edge) in inst.edges().iter().enumerate() {
                per_student[edge.student] += edge.utility * f.values[e];
            }
        }
        AssignmentRef::Integral(a) => {
            a.validate(inst)?;
            for (i, e) in a.edge_ids(inst).into_iter().enumerate() {
                per_student[i] = inst.edge(e).utility;
            }
        }
    }
    Ok(GroupUtilities(
        inst.groups()
            .iter()
            .map(|g| g.iter().map(|&i| per_student[i]).sum())
            .collect(),
    ))
}

/// Capacity overflow per school, and overflow beyond one extra seat.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub overflow: Vec<u64>,
    pub total_overflow: u64,
    pub overflow_beyond_one: Vec<u64>,
    pub total_overflow_beyond_one: u64,
}

pub fn violation_report(inst: &Instance, a: &IntegralAssignment) -> Result<ViolationReport> {
    a.validate(inst)?;
    Ok(violation_from_loads(inst.capacities(), &a.loads(inst)))
}

pub(crate) fn violation_from_loads(capacities: &[u64], loads: &[u64]) -> ViolationReport {
    let overflow: Vec<u64> = loads
        .iter()
        .zip(capacities)
        .map(|(&l, &c)| l.saturating_sub(c))
        .collect();
    let overflow_beyond_one: Vec<u64> = overflow.iter().map(|&o| o.saturating_sub(1)).collect();
    ViolationReport {
        total_overflow: overflow.iter().sum(),
        total_overflow_beyond_one: overflow_beyond_one.iter().sum(),
        overflow,
        overflow_beyond_one,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge(s: usize, t: usize, u: f64) -> Edge {
        Edge {
            student: s,
            school: t,
            utility: u,
            rank: None,
        }
    }

    fn small() -> Instance {
        Instance::new(
            3,
            2,
            vec![2, 1],
            vec![
                edge(0, 0, 1.0),
                edge(0, 1, 2.0),
                edge(1, 0, 0.5),
                edge(2, 1, 3.0),
                edge(2, 0, 0.25),
            ],
            vec![vec![0, 1], vec![2, 1]],
        )
        .unwrap()
    }

    #[test]
    fn single_edge_counted_in_every_group() {
        let inst = Instance::new(1, 1, vec![1], vec![edge(0, 0, 5.0)], vec![vec![0], vec![0]]).unwrap();
        let a = IntegralAssignment::new(&inst, vec![0]).unwrap();
        assert_eq!(group_utilities(&inst, &a).unwrap().0, vec![5.0, 5.0]);
    }

    #[test]
    fn zero_utilities_give_zero_vector() {
        let inst = Instance::new(
            2,
            1,
            vec![2],
            vec![edge(0, 0, 0.0), edge(1, 0, 0.0)],
            vec![vec![0], vec![0, 1]],
        )
        .unwrap();
        let a = FractionalAssignment::new(vec![1.0, 1.0]);
        assert_eq!(group_utilities(&inst, &a).unwrap().0, vec![0.0, 0.0]);
    }

    #[test]
    fn group_utilities_match_direct_summation() {
        let inst = small();
        let y = FractionalAssignment::new(vec![0.25, 0.75, 1.0, 0.5, 0.5]);
        let got = group_utilities(&inst, &y).unwrap();
        // group {0,1}: 0.25*1 + 0.75*2 + 1*0.5 ; group {1,2}: 0.5 + 0.5*3 + 0.5*0.25
        let mut oracle = vec![0.0; 2];
        for (k, g) in inst.groups().iter().enumerate() {
            for (e, ed) in inst.edges().iter().enumerate() {
                if g.contains(&ed.student) {
                    oracle[k] += ed.utility * y.values[e];
                }
            }
        }
        assert!((got.0[0] - 2.25).abs() < 1e-12);
        assert!((got.0[1] - 2.125).abs() < 1e-12);
        assert_eq!(got.0, oracle);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let inst = small();
        let y = FractionalAssignment::new(vec![1.0]);
        assert!(matches!(
            group_utilities(&inst, &y),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn violation_arithmetic() {
        let inst = Instance::new(
            4,
            1,
            vec![2],
            (0..4).map(|i| edge(i, 0, 1.0)).collect(),
            vec![],
        )
        .unwrap();
        let a = IntegralAssignment::new(&inst, vec![0; 4]).unwrap();
        let r = violation_report(&inst, &a).unwrap();
        assert_eq!(r.overflow, vec![2]);
        assert_eq!(r.overflow_beyond_one, vec![1]);
        assert_eq!((r.total_overflow, r.total_overflow_beyond_one), (2, 1));
    }

    #[test]
    fn feasible_assignment_has_no_violation() {
        let inst = small();
        let a = IntegralAssignment::new(&inst, vec![0, 0, 1]).unwrap();
        assert_eq!(violation_report(&inst, &a).unwrap().total_overflow, 0);
    }

    #[test]
    fn rejects_non_adjacent_assignment() {
        let inst = small();
        assert!(IntegralAssignment::new(&inst, vec![0, 1, 1]).is_err());
    }

    #[test]
    fn json_rejects_duplicate_edge() {
        let text = br#"{"n_students":1,"n_schools":1,"capacities":[1],"edges":[{"s":0,"t":0,"u":1.0},{"s":0,"t":0,"u":2.0}],"groups":[]}"#;
        let err = Instance::from_json(text).unwrap_err();
        assert!(err.to_string().contains("edges"), "{err}");
    }

    #[test]
    fn json_rejects_negative_capacity() {
        let text = br#"{"n_students":1,"n_schools":1,"capacities":[-1],"edges":[{"s":0,"t":0,"u":1.0}],"groups":[]}"#;
        let err = Instance::from_json(text).unwrap_err();
        assert!(err.to_string().contains("capacities"), "{err}");
    }

    #[test]
    fn json_rejects_unknown_fields() {
        let text = br#"{"n_students":1,"n_schools":1,"capacities":[1],"edges":[{"s":0,"t":0,"u":1.0}],"groups":[],"extra":1}"#;
        assert!(Instance::from_json(text).is_err());
    }

    #[test]
    fn student_without_edges_is_an_error() {
        let err = Instance::new(2, 1, vec![1], vec![edge(0, 0, 1.0)], vec![]).unwrap_err();
        assert!(err.to_string().contains("student 1"));
    }

    #[test]
    fn json_round_trip() {
        let inst = small();
        let back = Instance::from_json(inst.to_json().as_bytes()).unwrap();
        assert_eq!(back, inst);
        assert_eq!(back.to_json(), inst.to_json());
    }

    #[test]
    fn rank_field_only_on_ranked_instances() {
        assert!(!small().to_json().contains("rank"));
    }
}
