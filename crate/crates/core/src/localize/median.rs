//! The per-component rate subproblem: minimize Σ_i |D_i − T_i·x| over x in
//! [0, 1]. The objective is convex piecewise-linear with breakpoints at
//! D_i/T_i, so the minimizer is the T-weighted median of those breakpoints.

/// Minimize Σ T·|D − T·x| over x ∈ [0, 1] for the given (T, D) terms, where
/// D may already have other components' contributions subtracted (and may
/// therefore be negative). Returns the lowest minimizer, clamped.
pub fn best_rate_for_component(terms: &[(f64, f64)]) -> f64 {
    let mut breaks: Vec<(f64, f64)> = terms
        .iter()
        .filter(|&&(t, _)| t > 0.0)
        .map(|&(t, d)| (d / t, t))
        .collect();
    if breaks.is_empty() {
        return 0.0;
    }
    breaks.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite rates"));
    let total: f64 = breaks.iter().map(|&(_, w)| w).sum();
    let mut acc = 0.0;
    let mut median = breaks[breaks.len() - 1].0;
    for &(r, w) in &breaks {
        acc += w;
        // First breakpoint where cumulative weight reaches half: the lowest
        // point of the argmin plateau.
        if acc * 2.0 >= total {
            median = r;
            break;
        }
    }
    median.clamp(0.0, 1.0)
}
