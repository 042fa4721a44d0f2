//! Crafting a header that maps onto a target path: invert the switch with
//! the largest ECMP group, then forward-verify the whole chain and retry
//! with fresh steering bits until it lands or the budget runs out.

use super::invert::{invert_switch_choice, MutableBitsSpec};
use super::{host_header, predict_path, PredictError};
use crate::net::{HostId, Path, Topology};
use crate::pipeline::{PacketHeader, RouteAction};
use crate::state::NetworkStateVersion;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const DEFAULT_CRAFT_BUDGET: u32 = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct CraftOutcome {
    pub header: PacketHeader,
    /// Full-path verification attempts consumed (≥ 1).
    pub attempts: u32,
}

/// Find a header for `(src, dst)` whose predicted path equals `target_path`.
/// Every success is forward-verified through the predictor before being
/// returned; failures report the exhausted budget.
pub fn craft_header(
    state: &NetworkStateVersion,
    topo: &Topology,
    src: HostId,
    dst: HostId,
    target_path: &Path,
    bits: &MutableBitsSpec,
    rng_seed: u64,
) -> Result<CraftOutcome, PredictError> {
    craft_header_budgeted(
        state,
        topo,
        src,
        dst,
        target_path,
        bits,
        rng_seed,
        DEFAULT_CRAFT_BUDGET,
    )
}

#[allow(clippy::too_many_arguments)]
pub fn craft_header_budgeted(
    state: &NetworkStateVersion,
    topo: &Topology,
    src: HostId,
    dst: HostId,
    target_path: &Path,
    bits: &MutableBitsSpec,
    rng_seed: u64,
    budget: u32,
) -> Result<CraftOutcome, PredictError> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let base = host_header(topo, src, dst, 10_000, 80);

    // ECMP decision points on the target path, largest group first.
    let mut decisions: Vec<(usize, u32, usize)> = Vec::new(); // (hop idx, group, size)
    for (i, hop) in target_path.hops.iter().enumerate() {
        let sw = &state.states[hop.switch.0 as usize];
        let Some(entry) = sw.lpm(base.dst_lpm_key()) else {
            continue;
        };
        if let RouteAction::Group(g) = entry.action {
            if let Some(group) = sw.group(g) {
                if group.members.len() > 1 {
                    decisions.push((i, g, group.members.len()));
                }
            }
        }
    }
    decisions.sort_by(|a, b| b.2.cmp(&a.2).then(a.0.cmp(&b.0)));

    let n_paths = decisions.iter().map(|&(_, _, s)| s as u64).product::<u64>();
    let need_bits = 64 - n_paths.saturating_sub(1).leading_zeros();
    let have_bits = bits.usable_bits(&base);
    if n_paths > 1 && have_bits < need_bits {
        return Err(PredictError::InsufficientBits {
            have: have_bits,
            need: need_bits,
        });
    }

    let pivot = decisions.first().copied();
    let target_key = target_path.key();
    let mut candidate = base;
    let mut attempts = 0u32;
    while attempts < budget.max(1) {
        attempts += 1;
        // Steer the pivot switch analytically or by local search, then check
        // the remaining switches by full-path prediction.
        let steered = match pivot {
            Some((hop_idx, gid, _)) => {
                let hop = &target_path.hops[hop_idx];
                let sw = &state.states[hop.switch.0 as usize];
                let group = sw.group(gid).expect("group with decision");
                match invert_switch_choice(
                    sw,
                    group,
                    hop.egress,
                    &candidate,
                    bits,
                    rng_seed ^ attempts as u64,
                    256,
                ) {
                    Ok(h) => h,
                    Err(PredictError::TargetNotInGroup) => {
                        return Err(PredictError::TargetNotInGroup)
                    }
                    Err(_) => {
                        candidate = bits.randomize(&base, &mut rng);
                        continue;
                    }
                }
            }
            None => candidate,
        };
        if let Ok(p) = predict_path(state, topo, &steered, src) {
            if p.key() == target_key {
                return Ok(CraftOutcome {
                    header: steered,
                    attempts,
                });
            }
        }
        candidate = bits.randomize(&base, &mut rng);
    }
    Err(PredictError::NotFound { attempts })
}
