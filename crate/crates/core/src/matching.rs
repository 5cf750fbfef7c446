//! Maximum bipartite matching where each school can take up to its capacity.

/// Returns the matched school per student (`None` if unmatched).
///
/// `adj[i]` lists the schools student `i` may use.
pub fn max_b_matching(adj: &[Vec<usize>], capacities: &[u64]) -> Vec<Option<usize>> {
    let m = capacities.len();
    let mut match_of: Vec<Option<usize>> = vec![None; adj.len()];
    let mut holders: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut seen = vec![usize::MAX; m];
    for i in 0..adj.len() {
        augment(i, i, adj, capacities, &mut match_of, &mut holders, &mut seen);
    }
    match_of
}

/// Size of a maximum matching.
pub fn max_b_matching_size(adj: &[Vec<usize>], capacities: &[u64]) -> usize {
    max_b_matching(adj, capacities).iter().flatten().count()
}

fn augment(
    i: usize,
    stamp: usize,
    adj: &[Vec<usize>],
    caps: &[u64],
    match_of: &mut [Option<usize>],
    holders: &mut [Vec<usize>],
    seen: &mut [usize],
) -> bool {
    for &j in &adj[i] {
        if seen[j] == stamp {
            continue;
        }
        seen[j] = stamp;
        if (holders[j].len() as u64) < caps[j] {
            holders[j].push(i);
            match_of[i] = Some(j);
            return true;
        }
        for h in 0..holders[j].len() {
            let other = holders[j][h];
            if augment(other, stamp, adj, caps, match_of, holders, seen) {
                holders[j][h] = i;
                match_of[i] = Some(j);
                return true;
            }
        }
    }
    false
}
