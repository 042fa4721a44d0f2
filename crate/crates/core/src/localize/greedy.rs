//! Greedy coordinate descent over component loss rates.
//!
//! Candidates are evaluated on forward paths only; once a component is
//! fixed, its explained drops are removed from every observation crossing it
//! in either direction. Candidate evaluation runs in parallel with the
//! `parallel` feature; the winner reduction is a total-order max, so the
//! result is identical either way.

use super::median::best_rate_for_component;
use super::{PathObservation, PathRegistry};
use crate::net::ComponentId;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizerConfig {
    /// Loss rate above which a component is flagged.
    pub threshold: f64,
    pub max_iterations: u32,
    /// Weight of explanation removal on reverse-crossing observations.
    pub reverse_discount: f64,
    pub aggregation_period_ns: u64,
}

impl Default for LocalizerConfig {
    fn default() -> Self {
        LocalizerConfig {
            threshold: 0.002,
            max_iterations: 20,
            reverse_discount: 1.0,
            aggregation_period_ns: 10_000_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentRate {
    pub component: ComponentId,
    pub rate: f64,
    pub flagged: bool,
}

/// Eq-style objective: Σ over observations of |D − T·Σ_{j∈path} x_j|.
pub fn loss_objective(
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

struct Incidence {
    component: ComponentId,
    fwd: Vec<u32>,
    rvs: Vec<u32>,
}

fn build_incidence(observations: &[PathObservation], registry: &PathRegistry) -> Vec<Incidence> {
    let mut map: BTreeMap<ComponentId, (Vec<u32>, Vec<u32>)> = BTreeMap::new();
    for (i, o) in observations.iter().enumerate() {
        for &c in &registry.components[o.forward as usize] {
            map.entry(c).or_default().0.push(i as u32);
        }
        if let Some(r) = o.reverse {
            for &c in &registry.components[r as usize] {
                map.entry(c).or_default().1.push(i as u32);
            }
        }
    }
    map.into_iter()
        .map(|(component, (fwd, rvs))| Incidence {
            component,
            fwd,
            rvs,
        })
        .collect()
}

/// Run the greedy loop and return fixed components sorted by rate
/// (descending, component id on ties). Degenerate input yields an empty
/// list.
pub fn localize(
    observations: &[PathObservation],
    registry: &PathRegistry,
    cfg: &LocalizerConfig,
) -> Vec<ComponentRate> {
    let incidence = build_incidence(observations, registry);
    let mut residual_d: Vec<f64> = observations.iter().map(|o| o.dropped.max(0.0)).collect();
    let t: Vec<f64> = observations.iter().map(|o| o.transmitted).collect();
    let mut active: Vec<bool> = incidence.iter().map(|inc| !inc.fwd.is_empty()).collect();
    let mut out: Vec<ComponentRate> = Vec::new();

    for _ in 0..cfg.max_iterations {
        // Stop when every path's unexplained drop rate is at or below the
        // threshold.
        let worst = residual_d
            .iter()
            .zip(&t)
            .filter(|&(_, &ti)| ti > 0.0)
            .map(|(&di, &ti)| di / ti)
            .fold(0.0f64, f64::max);
        if worst <= cfg.threshold {
            break;
        }

        // Candidate rate and objective reduction per active component.
        let eval = |idx: usize| -> Option<(f64, f64, usize)> {
            if !active[idx] {
                return None;
            }
            let inc = &incidence[idx];
            let terms: Vec<(f64, f64)> = inc
                .fwd
                .iter()
                .map(|&i| (t[i as usize], residual_d[i as usize]))
                .collect();
            let rate = best_rate_for_component(&terms);
            if rate <= 0.0 {
                return None;
            }
            let reduction: f64 = terms
                .iter()
                .map(|&(ti, di)| di.abs() - (di - ti * rate).abs())
                .sum();
            (reduction > 0.0).then_some((reduction, rate, idx))
        };

        #[cfg(feature = "parallel")]
        let winner = (0..incidence.len())
            .into_par_iter()
            .filter_map(eval)
            .max_by(|a, b| {
                a.0.partial_cmp(&b.0)
                    .unwrap()
                    // Larger reduction wins; ties to the lowest component id.
                    .then_with(|| b.2.cmp(&a.2))
            });
        #[cfg(not(feature = "parallel"))]
        let winner = (0..incidence.len()).filter_map(eval).max_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap()
                .then_with(|| b.2.cmp(&a.2))
        });

        let Some((_, rate, idx)) = winner else {
            break;
        };
        let inc = &incidence[idx];
        active[idx] = false;
        out.push(ComponentRate {
            component: inc.component,
            rate,
            flagged: rate > cfg.threshold,
        });
        // Remove explained drops from observations crossing the winner in
        // either direction, clamping at zero.
        for &i in &inc.fwd {
            let i = i as usize;
            residual_d[i] = (residual_d[i] - t[i] * rate).max(0.0);
        }
        for &i in &inc.rvs {
            if inc.fwd.contains(&i) {
                continue;
            }
            let i = i as usize;
            residual_d[i] = (residual_d[i] - t[i] * rate * cfg.reverse_discount).max(0.0);
        }
    }

    out.sort_by(|a, b| {
        b.rate
            .partial_cmp(&a.rate)
            .unwrap()
            .then_with(|| a.component.cmp(&b.component))
    });
    out
}
