//! Brute-force reference implementations for the test suites. These evaluate
//! the L1 objective directly and never share code with the fast paths they
//! check.

use super::{PathObservation, PathRegistry};
use crate::net::ComponentId;
use std::collections::BTreeMap;

/// Reference minimizer of Σ T·|D/T − x|: evaluate the objective at every
/// breakpoint plus the domain ends and take the lowest-x argmin.
pub fn best_rate_grid_oracle(terms: &[(f64, f64)]) -> f64 {
    let objective = |x: f64| -> f64 { terms.iter().map(|&(t, d)| (d - t * x).abs()).sum() };
    let mut candidates: Vec<f64> = terms
        .iter()
        .filter(|&&(t, _)| t > 0.0)
        .map(|&(t, d)| (d / t).clamp(0.0, 1.0))
        .collect();
    candidates.push(0.0);
    candidates.push(1.0);
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut best_x = 0.0;
    let mut best = f64::INFINITY;
    for &x in &candidates {
        let v = objective(x);
        if v + 1e-12 < best {
            best = v;
            best_x = x;
        }
    }
    best_x
}

/// Direct evaluation of the loss objective for a full rate assignment.
pub fn objective_value(
    rates: &BTreeMap<ComponentId, f64>,
    observations: &[PathObservation],
    registry: &PathRegistry,
) -> f64 {
    observations
        .iter()
        .map(|o| {
            let along: f64 = registry.components[o.forward as usize]
                .iter()
                .filter_map(|c| rates.get(c))
                .sum();
            (o.dropped - o.transmitted * along).abs()
        })
        .sum()
}

/// Exhaustive minimization of the objective over supports of at most
/// `max_support` components drawn from `candidates`, with per-component
/// rates on a grid of the given step. Returns (support with rates, value).
/// Exponential; intended for ≤ 12 candidates and support ≤ 3.
pub fn brute_force_support(
    candidates: &[ComponentId],
    max_support: usize,
    step: f64,
    observations: &[PathObservation],
    registry: &PathRegistry,
) -> (BTreeMap<ComponentId, f64>, f64) {
    let levels: Vec<f64> = {
        let n = (1.0 / step).round() as usize;
        (0..=n).map(|i| i as f64 * step).collect()
    };
    let mut best: (BTreeMap<ComponentId, f64>, f64) =
        (BTreeMap::new(), objective_value(&BTreeMap::new(), observations, registry));

    let mut supports: Vec<Vec<ComponentId>> = vec![vec![]];
    for k in 1..=max_support.min(candidates.len()) {
        supports.extend(combinations(candidates, k));
    }
    for support in supports {
        let mut assign = vec![0usize; support.len()];
        loop {
            let rates: BTreeMap<ComponentId, f64> = support
                .iter()
                .zip(&assign)
                .filter(|&(_, &l)| l > 0)
                .map(|(&c, &l)| (c, levels[l]))
                .collect();
            let v = objective_value(&rates, observations, registry);
            // Prefer strictly better values; on ties prefer smaller support
            // then lexicographically smaller assignment (first found wins).
            if v + 1e-9 < best.1 {
                best = (rates, v);
            }
            // Odometer increment.
            let mut i = 0;
            loop {
                if i == assign.len() {
                    break;
                }
                assign[i] += 1;
                if assign[i] < levels.len() {
                    break;
                }
                assign[i] = 0;
                i += 1;
            }
            if i == assign.len() {
                break;
            }
        }
    }
    best
}

fn combinations(items: &[ComponentId], k: usize) -> Vec<Vec<ComponentId>> {
    let n = items.len();
    let mut out = Vec::new();
    if k > n || k == 0 {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.iter().map(|&i| items[i]).collect());
        // Rightmost position that can still advance.
        let Some(i) = (0..k).rev().find(|&i| idx[i] < i + n - k) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}
