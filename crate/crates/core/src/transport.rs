//! Linear oracle over the assignment polytope: maximize a per-edge weight
//! subject to one school per student and school capacities.
//!
//! Students start at their best school; overloaded schools then push single
//! students along shortest reassignment paths in the school graph until every
//! capacity holds (successive shortest paths on a graph with one node per
//! school). The result is an optimal integral vertex.

use crate::error::{Error, Result};
use crate::instance::Instance;

/// Returns the edge chosen for each student.
pub fn max_weight_assignment(inst: &Instance, weights: &[f64]) -> Result<Vec<usize>> {
    if weights.len() != inst.n_edges() {
        return Err(Error::DimensionMismatch {
            what: "edge weights",
            expected: inst.n_edges(),
            found: weights.len(),
        });
    }
    let n = inst.n_students();
    let m = inst.n_schools();
    let caps = inst.capacities();
    if caps.iter().sum::<u64>() < n as u64 {
        return Err(Error::Infeasible("total capacity below student count".into()));
    }
    let mut chosen: Vec<usize> = (0..n)
        .map(|i| {
            let edges = inst.student_edges(i);
            *edges
                .iter()
                .max_by(|&&a, &&b| {
                    weights[a]
                        .partial_cmp(&weights[b])
                        .unwrap()
                        .then(inst.edge(b).school.cmp(&inst.edge(a).school))
                })
                .expect("every student has an edge")
        })
        .collect();
    let mut load = vec![0u64; m];
    for &e in &chosen {
        load[inst.edge(e).school] += 1;
    }

    let mut arc_cost = vec![f64::INFINITY; m * m];
    let mut arc_student = vec![usize::MAX; m * m];
    let mut dist = vec![0.0; m];
    let mut pred = vec![usize::MAX; m];
    while (0..m).any(|j| load[j] > caps[j]) {
        arc_cost.fill(f64::INFINITY);
        for i in 0..n {
            let cur = chosen[i];
            let a = inst.edge(cur).school;
            for &e in inst.student_edges(i) {
                let b = inst.edge(e).school;
                if b == a {
                    continue;
                }
                let c = weights[cur] - weights[e];
                let k = a * m + b;
                if c < arc_cost[k] {
                    arc_cost[k] = c;
                    arc_student[k] = i;
                }
            }
        }
        // Bellman-Ford from all overloaded schools.
        for j in 0..m {
            dist[j] = if load[j] > caps[j] { 0.0 } else { f64::INFINITY };
            pred[j] = usize::MAX;
        }
        for _ in 0..m {
            let mut changed = false;
            for a in 0..m {
                if dist[a] == f64::INFINITY {
                    continue;
                }
                for b in 0..m {
                    let c = arc_cost[a * m + b];
                    if c < f64::INFINITY && dist[a] + c < dist[b] - 1e-12 {
                        dist[b] = dist[a] + c;
                        pred[b] = a;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let Some(target) = (0..m)
            .filter(|&j| load[j] < caps[j] && dist[j] < f64::INFINITY)
            .min_by(|&a, &b| dist[a].partial_cmp(&dist[b]).unwrap().then(a.cmp(&b)))
        else {
            return Err(Error::Infeasible("no capacity-respecting assignment".into()));
        };
        let mut b = target;
        let mut steps = 0;
        while pred[b] != usize::MAX {
            let a = pred[b];
            let i = arc_student[a * m + b];
            chosen[i] = inst.edge_between(i, b).expect("arc follows an edge");
            b = a;
            steps += 1;
            if steps > m {
                return Err(Error::Internal("cycle in reassignment path".into()));
            }
        }
        load[b] -= 1;
        load[target] += 1;
    }
    Ok(chosen)
}

/// Objective value of a chosen edge set.
pub fn assignment_weight(chosen: &[usize], weights: &[f64]) -> f64 {
    chosen.iter().map(|&e| weights[e]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::Edge;
    use crate::simplex::{solve_vertex, LpProblem, Relation, Sense};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Instance {
        let mut edges = Vec::new();
        for i in 0..n {
            let mut any = false;
            for j in 0..m {
                if rng.gen_bool(0.5) {
                    edges.push(Edge { student: i, school: j, utility: rng.gen_range(0.0..1.0), rank: None });
                    any = true;
                }
            }
            if !any {
                let j = rng.gen_range(0..m);
                edges.push(Edge { student: i, school: j, utility: rng.gen_range(0.0..1.0), rank: None });
            }
        }
        let caps = (0..m).map(|_| rng.gen_range(0..=(n as u64 / 2 + 1))).collect();
        Instance::new(n, m, caps, edges, vec![]).unwrap()
    }

    #[test]
    fn agrees_with_simplex_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut feasible = 0;
        for _ in 0..200 {
            let (n, m) = (rng.gen_range(1..15), rng.gen_range(1..5));
            let inst = random_instance(&mut rng, n, m);
            let w: Vec<f64> = (0..inst.n_edges()).map(|_| rng.gen_range(-1.0..2.0)).collect();
            let mut lp = LpProblem::new(inst.n_edges(), Sense::Maximize);
            for (e, &we) in w.iter().enumerate() {
                lp.set_cost(e, we);
            }
            for i in 0..inst.n_students() {
                lp.add_row(inst.student_edges(i).iter().map(|&e| (e, 1.0)).collect(), Relation::Eq, 1.0);
            }
            for j in 0..inst.n_schools() {
                lp.add_row(
                    inst.school_edges(j).iter().map(|&e| (e, 1.0)).collect(),
                    Relation::Le,
                    inst.capacities()[j] as f64,
                );
            }
            let lp_out = solve_vertex(&lp).unwrap();
            match (max_weight_assignment(&inst, &w), lp_out) {
                (Ok(chosen), crate::simplex::LpOutcome::Optimal(s)) => {
                    feasible += 1;
                    assert!((assignment_weight(&chosen, &w) - s.objective).abs() < 1e-7);
                    let mut load = vec![0; inst.n_schools()];
                    for (i, &e) in chosen.iter().enumerate() {
                        assert_eq!(inst.edge(e).student, i);
                        load[inst.edge(e).school] += 1;
                    }
                    for j in 0..inst.n_schools() {
                        assert!(load[j] <= inst.capacities()[j]);
                    }
                }
                (Err(Error::Infeasible(_)), crate::simplex::LpOutcome::Infeasible) => {}
                (a, b) => panic!("{a:?} vs {b:?}"),
            }
        }
        assert!(feasible > 50);
    }
}
