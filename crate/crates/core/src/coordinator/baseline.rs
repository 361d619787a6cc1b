use rand::seq::index::sample;

use super::AllocationPlan;
use crate::init::{stream_rng, STREAM_BASELINE};

/// Grants `min(budget, N·Q·C)` blocks chosen uniformly at random, without
/// replacement, over `(agent, patch, channel)` triples.
pub fn random_allocation(
    round_id: u32,
    agent_ids: &[u16],
    patches: usize,
    channels: usize,
    budget: u64,
    seed: u64,
) -> AllocationPlan {
    let mut plan = AllocationPlan::empty(round_id, agent_ids.to_vec(), patches);
    let triples = agent_ids.len() * patches * channels;
    let amount = (budget as usize).min(triples);
    if amount == 0 {
        return plan;
    }
    let mut rng = stream_rng(seed ^ u64::from(round_id).rotate_left(32), STREAM_BASELINE);
    for t in sample(&mut rng, triples, amount) {
        plan.grants[t / channels] += 1;
    }
    plan
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_budget_is_empty() {
        assert_eq!(random_allocation(0, &[1, 2], 4, 3, 0, 1).total(), 0);
    }

    #[test]
    fn full_budget_fills_every_cell() {
        let plan = random_allocation(0, &[1, 2], 4, 3, 24, 1);
        assert!(plan.grants.iter().all(|&g| g == 3));
        let plan = random_allocation(0, &[1, 2], 4, 3, 1_000, 1);
        assert_eq!(plan.total(), 24);
    }

    proptest! {
        #[test]
        fn total_is_min_of_budget_and_capacity(n in 1usize..5, q in 1usize..20, c in 1usize..10, b in 0u64..600, seed in any::<u64>()) {
            let ids: Vec<u16> = (1..=n as u16).collect();
            let plan = random_allocation(3, &ids, q, c, b, seed);
            prop_assert_eq!(plan.total(), b.min((n * q * c) as u64));
            prop_assert!(plan.grants.iter().all(|&g| g as usize <= c));
            prop_assert_eq!(plan, random_allocation(3, &ids, q, c, b, seed));
        }
    }
}
