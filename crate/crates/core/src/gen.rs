//! Seeded random instances. All randomness comes from `ChaCha8Rng` seeded
//! with the given `u64`, so output is identical across platforms.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::constraints::RankSignature;
use crate::error::{Error, Result};
use crate::instance::{Edge, Instance};
use crate::matching::max_b_matching_size;
use crate::transport::max_weight_assignment;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FairnessParams {
    pub n: usize,
    pub m: usize,
    pub g: usize,
    /// Edge probability; `None` means `3 / m`.
    pub p: Option<f64>,
}

impl Default for FairnessParams {
    fn default() -> Self {
        FairnessParams { n: 1000, m: 10, g: 7, p: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankParams {
    pub n: usize,
    pub m: usize,
    pub r: usize,
}

impl Default for RankParams {
    fn default() -> Self {
        RankParams { n: 1000, m: 10, r: 8 }
    }
}

fn check_positive(n: usize, m: usize) -> Result<()> {
    if n == 0 || m == 0 {
        return Err(Error::invalid("n/m", "student and school counts must be positive"));
    }
    Ok(())
}

/// Random bipartite graph: each pair with probability `p`, then one uniform
/// school for every student left without an edge.
fn random_graph(rng: &mut ChaCha8Rng, n: usize, m: usize, p: f64) -> Vec<Vec<usize>> {
    (0..n)
        .map(|_| {
            let mut adj: Vec<usize> = (0..m).filter(|_| rng.gen_bool(p)).collect();
            if adj.is_empty() {
                adj.push(rng.gen_range(0..m));
            }
            adj
        })
        .collect()
}

pub fn gen_fairness_instance(seed: u64, params: FairnessParams) -> Result<Instance> {
    let FairnessParams { n, m, g, p } = params;
    check_positive(n, m)?;
    let p = p.unwrap_or(3.0 / m as f64);
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::invalid("p", format!("{p} outside (0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let popularity: Vec<f64> = (0..m).map(|_| rng.gen::<f64>()).collect();
    let beta: Vec<f64> = (0..g).map(|_| rng.gen::<f64>()).collect();
    let adj = random_graph(&mut rng, n, m, p);
    let mut edges = Vec::new();
    for (i, schools) in adj.iter().enumerate() {
        for &j in schools {
            let u_hat: f64 = rng.gen();
            edges.push(Edge { student: i, school: j, utility: u_hat * popularity[j], rank: None });
        }
    }
    let groups: Vec<Vec<usize>> = beta.iter().map(|&b| (0..n).filter(|_| rng.gen_bool(b)).collect()).collect();
    let draft = Instance::new(n, m, vec![n as u64; m], edges, groups)?;
    let caps = calibrate_capacities(&draft)?;
    draft.with_capacities(caps)
}

/// Smallest total capacity that admits every student, spread as evenly as
/// possible: the loads of a feasible assignment whose largest school load
/// is minimal.
pub fn calibrate_capacities(inst: &Instance) -> Result<Vec<u64>> {
    let n = inst.n_students() as u64;
    let m = inst.n_schools() as u64;
    let zero = vec![0.0; inst.n_edges()];
    let feasible = |t: u64| -> Option<Vec<usize>> {
        let flat = inst.with_capacities(vec![t; m as usize]).ok()?;
        max_weight_assignment(&flat, &zero).ok()
    };
    let (mut lo, mut hi) = (n.div_ceil(m), n.max(1));
    let mut best = feasible(hi).ok_or_else(|| Error::Infeasible("no assignment at full capacity".into()))?;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        match feasible(mid) {
            Some(chosen) => {
                hi = mid;
                best = chosen;
            }
            None => lo = mid + 1,
        }
    }
    if hi != lo || feasible(lo).is_none() {
        return Err(Error::Internal("capacity search did not converge".into()));
    }
    let mut caps = vec![0u64; m as usize];
    for e in best {
        caps[inst.edge(e).school] += 1;
    }
    Ok(caps)
}

/// Ranked instance with its target signature.
pub fn gen_rank_instance(seed: u64, params: RankParams) -> Result<(Instance, RankSignature)> {
    let RankParams { n, m, r } = params;
    check_positive(n, m)?;
    if r == 0 {
        return Err(Error::invalid("r", "maximum rank must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adj = random_graph(&mut rng, n, m, (3.0 / m as f64).min(1.0));
    let mut edges = Vec::new();
    for (i, schools) in adj.iter_mut().enumerate() {
        schools.shuffle(&mut rng);
        for (k, &j) in schools.iter().enumerate() {
            edges.push(Edge { student: i, school: j, utility: 0.0, rank: Some(k as u32 + 1) });
        }
    }
    let draft = Instance::new(n, m, vec![n as u64; m], edges, Vec::new())?;
    let caps = calibrate_capacities(&draft)?;
    let inst = draft.with_capacities(caps)?;
    let sizes = rank_matching_sizes(&inst, r);
    let mut rho = Vec::with_capacity(r);
    let lo = (0.9 * sizes[0] as f64).ceil() as u64;
    rho.push(rng.gen_range(lo.min(sizes[0] as u64)..=sizes[0] as u64));
    for t in 1..r {
        let used: u64 = rho.iter().sum();
        rho.push(rng.gen_range(0..=(sizes[t] as u64).saturating_sub(used)));
    }
    Ok((inst, RankSignature(rho)))
}

/// `|M_t|` for `t = 1..=r`: maximum matchings on edges of rank at most `t`.
pub fn rank_matching_sizes(inst: &Instance, r: usize) -> Vec<usize> {
    (1..=r)
        .map(|t| {
            let adj: Vec<Vec<usize>> = (0..inst.n_students())
                .map(|i| {
                    inst.student_edges(i)
                        .iter()
                        .filter(|&&e| inst.edge(e).rank.is_some_and(|k| k as usize <= t))
                        .map(|&e| inst.edge(e).school)
                        .collect()
                })
                .collect();
            max_b_matching_size(&adj, inst.capacities())
        })
        .collect()
}
