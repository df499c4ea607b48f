use rand::Rng;

use crate::engine::{sample_ladder_row, sample_weighted, PowerLadder};

/// The sequential truncated filling: midpoints are inserted level by level
/// in chronological order, and the partial walk is cut at the first
/// occurrence of its `rho`-th distinct vertex as soon as one appears.
///
/// Uses the same rounded ladder as the distributed walker but no simulator.
/// Returns the walk (local indices) and whether `rho` distinct vertices were
/// reached.
pub fn sequential_truncated<R: Rng + ?Sized>(
    ladder: &PowerLadder,
    start: usize,
    rho: usize,
    rng: &mut R,
) -> (Vec<usize>, bool) {
    let k = ladder.size();
    let top = ladder.levels() - 1;
    let end = sample_ladder_row(ladder, top, start, rng);
    let mut walk = vec![start, end];
    cut(&mut walk, rho, k);
    let mut weights = vec![0.0; k];
    for level in (0..top).rev() {
        let m = ladder.matrix(level);
        let mut seen = vec![false; k];
        let mut distinct = 0;
        let mut next = Vec::with_capacity(walk.len() * 2);
        let mut push = |v: usize, next: &mut Vec<usize>| {
            next.push(v);
            if !std::mem::replace(&mut seen[v], true) {
                distinct += 1;
            }
            distinct == rho
        };
        for g in 0..walk.len() {
            if push(walk[g], &mut next) || g + 1 == walk.len() {
                break;
            }
            let (p, q) = (walk[g], walk[g + 1]);
            for (j, w) in weights.iter_mut().enumerate() {
                *w = m.get(p, j) * m.get(j, q);
            }
            let mid = sample_weighted(&weights, rng).expect("no midpoint has positive weight");
            if push(mid, &mut next) {
                break;
            }
        }
        walk = next;
    }
    let reached = distinct_count(&walk, k) >= rho;
    (walk, reached)
}

fn cut(walk: &mut Vec<usize>, rho: usize, k: usize) {
    let mut seen = vec![false; k];
    let mut distinct = 0;
    for i in 0..walk.len() {
        if !seen[walk[i]] {
            seen[walk[i]] = true;
            distinct += 1;
            if distinct == rho {
                walk.truncate(i + 1);
                return;
            }
        }
    }
}

fn distinct_count(walk: &[usize], k: usize) -> usize {
    let mut seen = vec![false; k];
    walk.iter().filter(|&&v| !std::mem::replace(&mut seen[v], true)).count()
}
