//! Distances between empirical and target distributions.

use std::collections::{BTreeMap, BTreeSet};

/// Half the L1 distance between the empirical law of `counts` and `target`.
/// Outcomes missing from either side count with probability zero.
pub fn tv_to_target<K: Ord>(counts: &BTreeMap<K, u64>, target: &BTreeMap<K, f64>) -> f64 {
    let total: u64 = counts.values().sum();
    let keys: BTreeSet<&K> = counts.keys().chain(target.keys()).collect();
    let mut sum = 0.0;
    for k in keys {
        let p = counts.get(k).map_or(0.0, |&c| c as f64 / total as f64);
        let q = target.get(k).copied().unwrap_or(0.0);
        sum += (p - q).abs();
    }
    sum / 2.0
}

/// Total variation distance between two empirical laws.
pub fn tv_between<K: Ord>(a: &BTreeMap<K, u64>, b: &BTreeMap<K, u64>) -> f64 {
    let ta: u64 = a.values().sum();
    let tb: u64 = b.values().sum();
    let keys: BTreeSet<&K> = a.keys().chain(b.keys()).collect();
    let mut sum = 0.0;
    for k in keys {
        let p = a.get(k).map_or(0.0, |&c| c as f64 / ta as f64);
        let q = b.get(k).map_or(0.0, |&c| c as f64 / tb as f64);
        sum += (p - q).abs();
    }
    sum / 2.0
}

/// Pearson chi-square statistic of `counts` against `target`, with the
/// degrees of freedom (support size minus one). Outcomes observed outside the
/// target support make the statistic infinite.
pub fn chi_square<K: Ord>(counts: &BTreeMap<K, u64>, target: &BTreeMap<K, f64>) -> (f64, usize) {
    let total: u64 = counts.values().sum();
    let mut stat = 0.0;
    for (k, &q) in target {
        let expected = q * total as f64;
        let observed = counts.get(k).copied().unwrap_or(0) as f64;
        if expected > 0.0 {
            stat += (observed - expected).powi(2) / expected;
        }
    }
    if counts.keys().any(|k| target.get(k).is_none_or(|&q| q == 0.0)) {
        stat = f64::INFINITY;
    }
    (stat, target.values().filter(|&&q| q > 0.0).count().saturating_sub(1))
}

/// Counts occurrences of each item.
pub fn tally<K: Ord, I: IntoIterator<Item = K>>(items: I) -> BTreeMap<K, u64> {
    let mut out = BTreeMap::new();
    for k in items {
        *out.entry(k).or_insert(0) += 1;
    }
    out
}

/// The expected TV distance of an `n`-sample empirical law from its source is
/// roughly `sum_k sqrt(p_k (1 - p_k) / (2 pi n))`; handy for picking sample
/// sizes.
pub fn expected_tv(target: impl IntoIterator<Item = f64>, n: u64) -> f64 {
    target
        .into_iter()
        .map(|p| (p * (1.0 - p) / (2.0 * std::f64::consts::PI * n as f64)).sqrt())
        .sum()
}
