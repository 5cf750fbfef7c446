//! Assignments under arbitrary linear side rows `sum_e q_e y_e >= Q`,
//! the monotone special case, and signature dominance on ranked instances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frosting::{frost_core, FrostStats};
use crate::gap_round::{iterate_to_fractional_core, ResidualState, Rounded};
use crate::instance::{Instance, IntegralAssignment};
use crate::model::{assignment_lp, ChoiceRule, RowKind, SideRow};
use crate::transport::max_weight_assignment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Fast,
    Frost,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(Mode::Fast),
            "frost" => Ok(Mode::Frost),
            _ => Err(Error::invalid("mode", format!("unknown mode `{s}`"))),
        }
    }
}

/// `r` covering rows over the instance's edges.
#[derive(Debug, Clone, PartialEq)]
pub struct SideConstraints {
    pub rows: Vec<SideRow>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRows {
    rows: Vec<RawRow>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRow {
    rhs: f64,
    coeffs: Vec<RawCoeff>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoeff {
    s: usize,
    t: usize,
    v: f64,
}

impl SideConstraints {
    pub fn new(inst: &Instance, rows: Vec<SideRow>) -> Result<Self> {
        for (l, row) in rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(Error::invalid("rhs", format!("row {l} rhs is not finite")));
            }
            for &(e, v) in &row.coeffs {
                if e >= inst.n_edges() || !v.is_finite() {
                    return Err(Error::invalid("coeffs", format!("row {l} has a bad entry")));
                }
            }
        }
        Ok(SideConstraints { rows })
    }

    pub fn r(&self) -> usize {
        self.rows.len()
    }

    pub fn q_max(&self) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| r.coeffs.iter().map(|&(_, v)| v.abs()))
            .fold(0.0, f64::max)
    }

    pub fn from_json(inst: &Instance, bytes: &[u8]) -> Result<Self> {
        let raw: RawRows = serde_json::from_slice(bytes)?;
        let mut rows = Vec::with_capacity(raw.rows.len());
        for (l, row) in raw.rows.into_iter().enumerate() {
            let mut coeffs = Vec::with_capacity(row.coeffs.len());
            for c in row.coeffs {
                let e = inst
                    .edge_between(c.s, c.t)
                    .ok_or_else(|| Error::invalid("coeffs", format!("row {l}: no edge ({}, {})", c.s, c.t)))?;
                coeffs.push((e, c.v));
            }
            rows.push(SideRow { coeffs, rhs: row.rhs });
        }
        Self::new(inst, rows)
    }

    pub fn to_json(&self, inst: &Instance) -> String {
        let raw = RawRows {
            rows: self
                .rows
                .iter()
                .map(|r| RawRow {
                    rhs: r.rhs,
                    coeffs: r
                        .coeffs
                        .iter()
                        .map(|&(e, v)| RawCoeff { s: inst.edge(e).student, t: inst.edge(e).school, v })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string(&raw).expect("rows serialize")
    }

    /// `row value - rhs` per row for an integral assignment (negative is a shortfall).
    pub fn slack(&self, inst: &Instance, a: &IntegralAssignment) -> Vec<f64> {
        let chosen = a.edge_ids(inst);
        self.rows.iter().map(|r| r.value_on_edges(inst.n_edges(), &chosen) - r.rhs).collect()
    }
}

/// Per-student total order over adjacent schools, most preferred first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreferenceOrders {
    orders: Vec<Vec<usize>>,
}

impl PreferenceOrders {
    pub fn new(inst: &Instance, orders: Vec<Vec<usize>>) -> Result<Self> {
        if orders.len() != inst.n_students() {
            return Err(Error::DimensionMismatch {
                what: "preference orders",
                expected: inst.n_students(),
                found: orders.len(),
            });
        }
        for (i, order) in orders.iter().enumerate() {
            let mut a: Vec<usize> = order.clone();
            let mut b: Vec<usize> = inst.student_edges(i).iter().map(|&e| inst.edge(e).school).collect();
            a.sort_unstable();
            b.sort_unstable();
            if a != b {
                return Err(Error::invalid("orders", format!("student {i}: not a permutation of its schools")));
            }
        }
        Ok(PreferenceOrders { orders })
    }

    /// Orders by rank, ties to the lowest school id.
    pub fn from_ranks(inst: &Instance) -> Result<Self> {
        if !inst.is_ranked() {
            return Err(Error::invalid("rank", "instance has no ranks"));
        }
        let orders = (0..inst.n_students())
            .map(|i| {
                let mut es: Vec<usize> = inst.student_edges(i).to_vec();
                es.sort_by_key(|&e| (inst.edge(e).rank, inst.edge(e).school));
                es.into_iter().map(|e| inst.edge(e).school).collect()
            })
            .collect();
        Ok(PreferenceOrders { orders })
    }

    pub fn order(&self, student: usize) -> &[usize] {
        &self.orders[student]
    }

    /// 0 for the most preferred school; `usize::MAX` if not adjacent.
    pub fn position(&self, student: usize, school: usize) -> usize {
        self.orders[student].iter().position(|&j| j == school).unwrap_or(usize::MAX)
    }
}

/// True iff every row is nonincreasing along every student's order.
pub fn is_monotone(inst: &Instance, q: &SideConstraints, orders: &PreferenceOrders) -> bool {
    let coeffs = crate::frosting::dense_rows(&q.rows, inst.n_edges());
    (0..inst.n_students()).all(|i| {
        let edges: Vec<usize> = orders
            .order(i)
            .iter()
            .map(|&j| inst.edge_between(i, j).expect("orders follow edges"))
            .collect();
        coeffs.iter().all(|row| edges.windows(2).all(|w| row[w[0]] >= row[w[1]]))
    })
}

/// Counts of rank-1, rank-2, ... edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RankSignature(pub Vec<u64>);

impl RankSignature {
    pub fn prefix_sums(&self) -> Vec<u64> {
        self.0
            .iter()
            .scan(0u64, |acc, &x| {
                *acc += x;
                Some(*acc)
            })
            .collect()
    }

    /// Weak dominance: every prefix sum of `self` is at least that of `other`.
    /// Missing trailing entries count as zero.
    pub fn dominates(&self, other: &RankSignature) -> bool {
        let len = self.0.len().max(other.0.len());
        let (mut a, mut b) = (0u64, 0u64);
        for t in 0..len {
            a += self.0.get(t).copied().unwrap_or(0);
            b += other.0.get(t).copied().unwrap_or(0);
            if a < b {
                return false;
            }
        }
        true
    }

    pub fn parse(s: &str) -> Result<Self> {
        s.split(',')
            .map(|x| {
                x.trim()
                    .parse::<u64>()
                    .map_err(|_| Error::invalid("signature", format!("bad entry `{x}`")))
            })
            .collect::<Result<Vec<_>>>()
            .map(RankSignature)
    }
}

pub fn signature_of(inst: &Instance, a: &IntegralAssignment) -> Result<RankSignature> {
    if !inst.is_ranked() {
        return Err(Error::invalid("rank", "instance has no ranks"));
    }
    let mut sig = vec![0u64; inst.max_rank() as usize];
    for e in a.edge_ids(inst) {
        let rank = inst.edge(e).rank.expect("ranked instance");
        sig[rank as usize - 1] += 1;
    }
    Ok(RankSignature(sig))
}

/// Rows `#{edges of rank <= t} >= rho_1 + ... + rho_t`.
pub fn rank_rows(inst: &Instance, rho: &RankSignature) -> Result<SideConstraints> {
    if !inst.is_ranked() {
        return Err(Error::invalid("rank", "instance has no ranks"));
    }
    let prefix = rho.prefix_sums();
    let rows = prefix
        .iter()
        .enumerate()
        .map(|(t, &rhs)| SideRow {
            coeffs: inst
                .edges()
                .iter()
                .enumerate()
                .filter(|(_, e)| e.rank.expect("ranked") as usize <= t + 1)
                .map(|(id, _)| (id, 1.0))
                .collect(),
            rhs: rhs as f64,
        })
        .collect();
    SideConstraints::new(inst, rows)
}

/// Result of rounding under side rows.
#[derive(Debug, Clone, Serialize)]
pub struct SideRounded {
    pub rounded: Rounded,
    /// `row value - rhs` per row.
    pub slack: Vec<f64>,
    /// Students left to the final arbitrary choice (fast mode).
    pub residual_students: usize,
    pub frost: Option<FrostStats>,
}

/// Capacity-feasible start that favours high row coefficients.
fn crash_hint(inst: &Instance, q: &SideConstraints) -> Option<Vec<f64>> {
    let mut w = vec![0.0; inst.n_edges()];
    for row in &q.rows {
        for &(e, c) in &row.coeffs {
            w[e] += c;
        }
    }
    let chosen = max_weight_assignment(inst, &w).ok()?;
    let mut y = vec![0.0; inst.n_edges()];
    for e in chosen {
        y[e] = 1.0;
    }
    Some(y)
}

fn core(inst: &Instance, q: &SideConstraints) -> Result<ResidualState> {
    let (mut lp, layout) = assignment_lp(inst, &q.rows, true);
    lp.set_hint(crash_hint(inst, q));
    iterate_to_fractional_core(inst, lp, layout, &q.rows)
}

fn finish(
    inst: &Instance,
    q: &SideConstraints,
    assignment: IntegralAssignment,
    support: usize,
    residual_students: usize,
    frost: Option<FrostStats>,
) -> Result<SideRounded> {
    Ok(SideRounded {
        slack: q.slack(inst, &assignment),
        rounded: Rounded::new(inst, assignment, support)?,
        residual_students,
        frost,
    })
}

/// Rounding with additive slack: at most `r * q_max` per row in fast mode,
/// `(2r + 4r^2) * q_max` in frost mode.
pub fn round_general(inst: &Instance, q: &SideConstraints, mode: Mode) -> Result<SideRounded> {
    let state = core(inst, q)?;
    let rule = ChoiceRule::LowestSchool;
    match mode {
        Mode::Fast => {
            let support = state.support_size();
            // Drop the capacity rows and keep eliminating integral variables.
            let layout = state.layout;
            let mut lp = state
                .lp
                .retain_rows(|o| !matches!(layout.kind(o), RowKind::School(_)));
            lp.set_hint(Some(state.values.clone()));
            let second = if lp.n_vars() == 0 {
                state.clone()
            } else {
                iterate_to_fractional_core(inst, lp, layout, &q.rows)?
            };
            let mut merged = second.clone();
            for i in 0..inst.n_students() {
                if merged.fixed[i].is_none() {
                    merged.fixed[i] = state.fixed[i];
                }
            }
            let remaining = merged.remaining_students.len();
            if remaining > q.r() {
                return Err(Error::Internal(format!("{remaining} residual students for {} rows", q.r())));
            }
            let a = merged.complete_with(inst, &rule)?;
            finish(inst, q, a, support, remaining, None)
        }
        Mode::Frost => {
            let (a, stats) = frost_core(inst, &state, &q.rows, &rule, None)?;
            finish(inst, q, a, state.support_size(), 0, Some(stats))
        }
    }
}

/// Rounding that preserves monotone rows exactly.
pub fn round_monotone(
    inst: &Instance,
    q: &SideConstraints,
    orders: &PreferenceOrders,
    mode: Mode,
) -> Result<SideRounded> {
    if !is_monotone(inst, q, orders) {
        return Err(Error::invalid("q", "rows are not monotone under the given orders"));
    }
    let state = core(inst, q)?;
    let rule = ChoiceRule::Preference(orders);
    match mode {
        Mode::Fast => {
            let a = state.complete_with(inst, &rule)?;
            finish(inst, q, a, state.support_size(), state.remaining_students.len(), None)
        }
        Mode::Frost => {
            let (a, stats) = frost_core(inst, &state, &q.rows, &rule, None)?;
            finish(inst, q, a, state.support_size(), 0, Some(stats))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RankSolved {
    pub result: SideRounded,
    pub signature: RankSignature,
    /// The relaxation's vertex had fractional variables.
    pub fractional: bool,
}

/// Finds a matching whose signature weakly dominates `rho`, or reports
/// [`Error::Infeasible`] when the relaxation has no solution.
pub fn rank_solve(inst: &Instance, rho: &RankSignature, mode: Mode) -> Result<RankSolved> {
    let q = rank_rows(inst, rho)?;
    let orders = PreferenceOrders::from_ranks(inst)?;
    let result = round_monotone(inst, &q, &orders, mode)?;
    let signature = signature_of(inst, &result.rounded.assignment)?;
    if !signature.dominates(rho) {
        return Err(Error::Internal("rounded signature does not dominate the target".into()));
    }
    Ok(RankSolved { fractional: result.rounded.fractional_vars > 0, result, signature })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::Edge;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dominance_examples() {
        let s = |v: &[u64]| RankSignature(v.to_vec());
        assert!(s(&[3, 1]).dominates(&s(&[2, 2])));
        assert!(s(&[2, 2]).dominates(&s(&[2, 2])));
        assert!(!s(&[1, 3]).dominates(&s(&[2, 2])));
        assert_eq!(RankSignature::parse("3,1,0").unwrap(), s(&[3, 1, 0]));
        assert!(RankSignature::parse("3,x").is_err());
    }

    fn ranked(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Instance {
        let mut edges = Vec::new();
        for i in 0..n {
            let mut schools: Vec<usize> = (0..m).filter(|_| rng.gen_bool(0.6)).collect();
            if schools.is_empty() {
                schools.push(rng.gen_range(0..m));
            }
            for (k, &j) in schools.iter().enumerate() {
                edges.push(Edge { student: i, school: j, utility: 0.0, rank: Some(k as u32 + 1) });
            }
        }
        let caps = vec![(n as u64).div_ceil(m as u64) + 2; m];
        Instance::new(n, m, caps, edges, vec![]).unwrap()
    }

    #[test]
    fn rank_rows_are_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inst = ranked(&mut rng, 10, 3);
        let q = rank_rows(&inst, &RankSignature(vec![1, 1, 1])).unwrap();
        let orders = PreferenceOrders::from_ranks(&inst).unwrap();
        assert!(is_monotone(&inst, &q, &orders));
        let mut bad = q.clone();
        let e = inst.student_edges(0)[0];
        bad.rows[0].coeffs.push((e, -5.0));
        if inst.student_edges(0).len() > 1 {
            assert!(!is_monotone(&inst, &bad, &orders));
        }
    }

    #[test]
    fn zero_rows_round_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let inst = ranked(&mut rng, 12, 3);
        let q = SideConstraints::new(&inst, vec![]).unwrap();
        for mode in [Mode::Fast, Mode::Frost] {
            let out = round_general(&inst, &q, mode).unwrap();
            assert_eq!(out.rounded.report.total_overflow, 0);
        }
    }

    #[test]
    fn rank_solve_dominates() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let inst = ranked(&mut rng, 12, 3);
            let rho = RankSignature(vec![rng.gen_range(0..6), rng.gen_range(0..3), 0]);
            for mode in [Mode::Fast, Mode::Frost] {
                match rank_solve(&inst, &rho, mode) {
                    Ok(s) => assert!(s.signature.dominates(&rho)),
                    Err(Error::Infeasible(_)) => {}
                    Err(e) => panic!("{e}"),
                }
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let inst = ranked(&mut rng, 5, 2);
        let q = rank_rows(&inst, &RankSignature(vec![2, 1])).unwrap();
        let back = SideConstraints::from_json(&inst, q.to_json(&inst).as_bytes()).unwrap();
        assert_eq!(back, q);
        assert!(SideConstraints::from_json(&inst, br#"{"rows":[{"rhs":1,"coeffs":[{"s":0,"t":9,"v":1}]}]}"#).is_err());
    }
}
