//! Shared fixtures for the integration tests.
#![allow(dead_code)]

pub mod curve;
pub mod reference;

use poison_core::scenario::{ChainData, GroupSpec, ScenarioSpec};
use poison_core::{PriceTable, TokenRegistry};

pub fn tables(chain: &ChainData) -> (TokenRegistry, PriceTable) {
    (
        TokenRegistry::from_entries(chain.registry.iter().cloned()).unwrap(),
        PriceTable::from_rows(chain.prices.iter().cloned()).unwrap(),
    )
}

/// A scenario whose features rotate with `seed`: the three poisoning kinds,
/// bundles with stale members, delays at and just past the window edge,
/// several accounts per group, and typos.
pub fn oracle_spec(seed: u64) -> ScenarioSpec {
    let m = 100;
    let edge = match seed % 3 {
        0 => Vec::new(),
        1 => vec![1, m, m + 1],
        _ => vec![m + 1, m + 2, m / 2],
    };
    let weights = match seed % 4 {
        0 => (1.0, 0.0, 0.0),
        1 => (0.0, 1.0, 0.0),
        2 => (0.0, 0.0, 1.0),
        _ => (1.0, 1.0, 1.0),
    };
    let bundled = GroupSpec {
        attacks: 12,
        tiny: weights.0,
        zero: weights.1,
        counterfeit: weights.2,
        bundle_size: 2 + (seed % 5) as u32,
        stale_fraction: 0.4,
        offsets: edge.clone(),
        shapes: vec![(3, 4), (4, 5), (6, 6)],
        payoff_probability: 0.3,
        ..GroupSpec::default()
    };
    let spread = GroupSpec {
        attacks: 10,
        accounts: 2,
        poisons_per_attack: 2,
        offsets: edge,
        shapes: vec![(3, 4), (3, 3), (2, 12), (5, 4)],
        use_contract: seed % 2 == 0,
        payoff_probability: 0.5,
        ..GroupSpec::default()
    };
    ScenarioSpec {
        seed,
        n_blocks: 1_500,
        benign_per_block: 3,
        typo_rate: 0.05,
        groups: vec![bundled, spread],
        ..ScenarioSpec::default()
    }
}

pub fn run(chain: &ChainData) -> poison_core::detector::DetectionReport {
    let (registry, prices) = tables(chain);
    poison_core::detector::analyze(&chain.events, &chain.config, &registry, &prices)
        .unwrap()
        .0
}
