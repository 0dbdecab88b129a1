use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::generate::{lookalike, typo};
use super::*;
use crate::clustering::{attack_ratio, cluster, transfer_sets, ClusterOptions};
use crate::detector::{analyze, DetectionReport, TransferLabel};
use crate::prices::PriceTable;
use crate::similarity::{address_edit_distance, positional_match_count, prefix_suffix_score};
use crate::token::TokenRegistry;

fn run(chain: &ChainData) -> DetectionReport {
    let registry = TokenRegistry::from_entries(chain.registry.iter().cloned()).unwrap();
    let prices = PriceTable::from_rows(chain.prices.iter().cloned()).unwrap();
    analyze(&chain.events, &chain.config, &registry, &prices).unwrap().0
}

fn universe(chain: &ChainData) -> BTreeSet<EventId> {
    chain.events.iter().map(|e| e.id()).collect()
}

fn assert_recovers(chain: &ChainData) -> GroundTruth {
    let truth = ground_truth(chain, &chain.config).unwrap();
    let report = run(chain);
    let predicted = report.event_labels();
    let expected = truth.labels();
    for (id, l) in &expected {
        assert_eq!(predicted.get(id), Some(l), "event {id}");
    }
    for (id, l) in &predicted {
        assert_eq!(expected.get(id), Some(l), "event {id}");
    }
    let s = score_labels(&expected, &predicted, &universe(chain)).unwrap();
    assert_eq!((s.precision, s.recall), (1.0, 1.0));
    truth
}

fn one_group(g: GroupSpec) -> ScenarioSpec {
    ScenarioSpec {
        n_blocks: 1_500,
        groups: vec![g],
        ..ScenarioSpec::default()
    }
}

#[test]
fn lookalikes_hit_the_requested_shape() {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    for (a, b) in [(0, 0), (3, 4), (5, 5), (20, 19), (39, 0), (0, 39), (10, 29)] {
        for _ in 0..50 {
            let r = Address::from_bytes(rand::Rng::gen(&mut rng));
            let l = lookalike(&mut rng, &r, a, b);
            let s = prefix_suffix_score(&r, &l);
            assert_eq!((s.prefix, s.suffix, s.identical), (a, b, false));
        }
    }
}

#[test]
fn typos_are_single_edits_in_the_middle() {
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    for _ in 0..200 {
        let r = Address::from_bytes(rand::Rng::gen(&mut rng));
        let d = typo(&mut rng, &r);
        assert_eq!(address_edit_distance(&r, &d), 1);
        assert!(positional_match_count(&r, &d) >= 38);
        let s = prefix_suffix_score(&r, &d);
        assert!(s.prefix >= 8 && s.suffix >= 8);
    }
}

#[test]
fn invalid_specs_are_rejected() {
    let shape = one_group(GroupSpec {
        shapes: vec![(20, 20)],
        ..GroupSpec::default()
    });
    assert_eq!(generate(&shape).unwrap_err(), ScenarioError::Shape { a: 20, b: 20 });
    let prob = ScenarioSpec {
        typo_rate: 1.5,
        ..ScenarioSpec::default()
    };
    assert_eq!(generate(&prob).unwrap_err(), ScenarioError::Probability("typo_rate"));
    let none = ScenarioSpec {
        groups: Vec::new(),
        contests: vec![ContestSpec {
            groups: vec![0, 1],
            winners: vec![0],
        }],
        ..ScenarioSpec::default()
    };
    assert_eq!(generate(&none).unwrap_err(), ScenarioError::NoGroups);
    let bot = ScenarioSpec {
        bots: vec![BotSpec {
            copies: vec![3],
            ..BotSpec::default()
        }],
        ..ScenarioSpec::default()
    };
    assert!(matches!(generate(&bot), Err(ScenarioError::Invalid(_))));
    let disconnected = one_group(GroupSpec {
        accounts: 3,
        ..GroupSpec::default()
    });
    assert!(matches!(generate(&disconnected), Err(ScenarioError::Invalid(_))));
}

#[test]
fn generation_is_deterministic() {
    let spec = ScenarioSpec {
        typo_rate: 0.05,
        ..ScenarioSpec::default()
    };
    let a = generate(&spec).unwrap();
    let b = generate(&spec).unwrap();
    assert_eq!(a.chains[0].events, b.chains[0].events);
    assert_eq!(a.chains[0].planted, b.chains[0].planted);
    let c = generate(&ScenarioSpec { seed: 2, ..spec }).unwrap();
    assert_ne!(a.chains[0].events, c.chains[0].events);
}

#[test]
fn minimal_tiny_attack_with_payoff() {
    let spec = ScenarioSpec {
        n_blocks: 300,
        benign_per_block: 0,
        groups: vec![GroupSpec {
            attacks: 1,
            tiny: 1.0,
            zero: 0.0,
            counterfeit: 0.0,
            payoff_probability: 1.0,
            ..GroupSpec::default()
        }],
        ..ScenarioSpec::default()
    };
    let s = generate(&spec).unwrap();
    let truth = assert_recovers(&s.chains[0]);
    let labels: Vec<TransferLabel> = truth.labels().into_values().collect();
    assert_eq!(
        labels,
        vec![TransferLabel::Intended, TransferLabel::TinyPoison, TransferLabel::PayoffConfirmed]
    );
}

#[test]
fn mixed_scenario_is_recovered_exactly() {
    let spec = ScenarioSpec {
        typo_rate: 0.05,
        groups: vec![
            GroupSpec::default(),
            GroupSpec {
                attacks: 20,
                shapes: vec![(4, 4), (5, 6), (3, 8)],
                accounts: 3,
                poisons_per_attack: 3,
                use_contract: false,
                payoff_probability: 0.4,
                ..GroupSpec::default()
            },
        ],
        ..ScenarioSpec::default()
    };
    let s = generate(&spec).unwrap();
    let truth = assert_recovers(&s.chains[0]);
    assert!(truth.count(TransferLabel::PayoffConfirmed) > 0);
    assert!(truth.count(TransferLabel::TinyPoison) > 0);
    assert!(truth.count(TransferLabel::CounterfeitPoison) > 0);
}

#[test]
fn stale_bundle_members_are_found_as_siblings() {
    let spec = one_group(GroupSpec {
        attacks: 40,
        bundle_size: 8,
        stale_fraction: 0.5,
        ..GroupSpec::default()
    });
    let s = generate(&spec).unwrap();
    let chain = &s.chains[0];
    assert_recovers(chain);
    let report = run(chain);
    assert!(report.findings.iter().any(|f| f.via_sibling));
    let poisons = report.poison_events().len();
    assert_eq!(poisons, 40);
}

#[test]
fn accidental_transfers_match_planted_typos() {
    let spec = ScenarioSpec {
        typo_rate: 0.2,
        ..ScenarioSpec::default()
    };
    let s = generate(&spec).unwrap();
    let chain = &s.chains[0];
    let truth = assert_recovers(chain);
    let typos: BTreeSet<EventId> = chain
        .planted
        .iter()
        .filter(|(_, p)| matches!(p, Planted::Typo { .. }))
        .map(|(id, _)| *id)
        .collect();
    assert!(!typos.is_empty());
    assert_eq!(truth.accidental, typos);
    let registry = TokenRegistry::from_entries(chain.registry.iter().cloned()).unwrap();
    let prices = PriceTable::from_rows(chain.prices.iter().cloned()).unwrap();
    let (_, found) = analyze(&chain.events, &chain.config, &registry, &prices).unwrap();
    let found: BTreeSet<EventId> = found.iter().map(|a| a.event).collect();
    assert_eq!(found, typos);
}

#[test]
fn deterministic_spec_gives_exact_counts() {
    let spec = one_group(GroupSpec {
        attacks: 12,
        tiny: 0.0,
        zero: 1.0,
        counterfeit: 0.0,
        offsets: vec![1, 50, 101],
        poisons_per_attack: 2,
        payoff_probability: 1.0,
        ..GroupSpec::default()
    });
    let s = generate(&spec).unwrap();
    let truth = assert_recovers(&s.chains[0]);
    assert_eq!(truth.count(TransferLabel::ZeroValuePoison), 24);
    assert_eq!(truth.count(TransferLabel::PayoffConfirmed), 12);
    assert_eq!(truth.count(TransferLabel::TinyPoison), 0);
}

#[test]
fn late_poisonings_stay_benign() {
    let spec = one_group(GroupSpec {
        attacks: 5,
        offsets: vec![102, 150],
        payoff_probability: 0.0,
        ..GroupSpec::default()
    });
    let s = generate(&spec).unwrap();
    let truth = assert_recovers(&s.chains[0]);
    assert!(truth.labels().is_empty());
    assert_eq!(truth.events.values().filter(|t| t.planted).count(), 5);
}

#[test]
fn copy_bots_split_at_threshold() {
    let spec = ScenarioSpec {
        groups: vec![
            GroupSpec {
                attacks: 15,
                tiny: 0.0,
                ..GroupSpec::default()
            },
            GroupSpec {
                attacks: 15,
                tiny: 0.0,
                ..GroupSpec::default()
            },
        ],
        bots: vec![BotSpec {
            copies: vec![0, 1],
            delay_blocks: 0,
            ..BotSpec::default()
        }],
        ..ScenarioSpec::default()
    };
    let s = generate(&spec).unwrap();
    let chain = &s.chains[0];
    let truth = assert_recovers(chain);
    let report = run(chain);
    let sets = transfer_sets(&report, &chain.txs).unwrap();
    let profiles = attack_ratio(&sets, &chain.history).unwrap();
    let bot = *truth.bots.iter().next().unwrap();
    assert!(profiles[&bot].attack_ratio < 0.5);

    let strict = cluster(&sets, &profiles, &ClusterOptions::default());
    assert_eq!(strict.len(), 2);
    let owners = truth.poison_owners();
    let predicted: BTreeMap<EventId, usize> = strict
        .iter()
        .enumerate()
        .flat_map(|(i, g)| g.members.iter().map(move |m| (*m, i)))
        .collect();
    let groups_only: BTreeMap<EventId, Owner> = owners
        .iter()
        .filter(|(_, o)| matches!(o, Owner::Group(_)))
        .map(|(k, v)| (*k, *v))
        .collect();
    assert_eq!(rand_index(&groups_only, &predicted).unwrap(), 1.0);

    let loose = ClusterOptions {
        bot_threshold: 0.0,
        ..ClusterOptions::default()
    };
    assert_eq!(cluster(&sets, &profiles, &loose).len(), 1);

    // same-block copies sit right after their original
    let bot_tx: BTreeSet<_> = chain.txs.values().filter(|t| t.initiator == bot).map(|t| t.tx_hash).collect();
    let copy = chain.events.iter().position(|e| bot_tx.contains(&e.tx_hash)).unwrap();
    assert_eq!(chain.events[copy - 1].block_number, chain.events[copy].block_number);
}

#[test]
fn contests_name_their_winner() {
    let spec = ScenarioSpec {
        groups: vec![GroupSpec::default(), GroupSpec::default()],
        contests: vec![ContestSpec {
            groups: vec![0, 1],
            winners: vec![0, 0, 1],
        }],
        ..ScenarioSpec::default()
    };
    let s = generate(&spec).unwrap();
    let truth = assert_recovers(&s.chains[0]);
    let winners: Vec<u32> = truth.contests.iter().map(|c| c.winner).collect();
    assert_eq!(winners.len(), 3);
    assert_eq!(winners.iter().filter(|w| **w == 0).count(), 2);
}

#[test]
fn cross_chain_replays_share_lookalikes() {
    let spec = ScenarioSpec {
        chains: vec![
            ChainSpec {
                chain_id: 1,
                block_time_secs: 12,
            },
            ChainSpec {
                chain_id: 56,
                block_time_secs: 3,
            },
        ],
        cross_chain_reuse: true,
        ..ScenarioSpec::default()
    };
    let s = generate(&spec).unwrap();
    assert_eq!(s.chains[1].config.window_blocks, 400);
    assert_eq!(s.chains[1].config.native_asset, "BNB");
    let truths: Vec<GroundTruth> = s.chains.iter().map(assert_recovers).collect();
    let (ls, _) = shared_addresses(&truths);
    assert!(!ls.is_empty());
    let no_reuse = generate(&ScenarioSpec {
        cross_chain_reuse: false,
        ..spec
    })
    .unwrap();
    let truths: Vec<GroundTruth> = no_reuse.chains.iter().map(assert_recovers).collect();
    assert!(shared_addresses(&truths).0.is_empty());
}

#[test]
fn label_scores() {
    let ids: Vec<EventId> = (0..200).map(|i| EventId { block: i, log_index: 0 }).collect();
    let universe: BTreeSet<EventId> = ids.iter().copied().collect();
    let truth: BTreeMap<EventId, TransferLabel> = ids[..100].iter().map(|i| (*i, TransferLabel::TinyPoison)).collect();

    let perfect = score_labels(&truth, &truth, &universe).unwrap();
    assert_eq!((perfect.precision, perfect.recall, perfect.f1), (1.0, 1.0, 1.0));

    let empty = score_labels(&truth, &BTreeMap::new(), &universe).unwrap();
    assert_eq!(empty.recall, 0.0);

    let mut one_off = truth.clone();
    one_off.insert(ids[0], TransferLabel::ZeroValuePoison);
    let s = score_labels(&truth, &one_off, &universe).unwrap();
    assert_eq!(s.recall, 0.99);
    assert_eq!(s.precision, 0.99);

    let mut stray = truth.clone();
    stray.insert(EventId { block: 999, log_index: 0 }, TransferLabel::TinyPoison);
    assert!(matches!(
        score_labels(&truth, &stray, &universe),
        Err(ScenarioError::Mismatch(_))
    ));
}

#[test]
fn rand_index_counts_pair_agreement() {
    let truth: BTreeMap<u32, u32> = [(1, 0), (2, 0), (3, 1), (4, 1)].into_iter().collect();
    let same: BTreeMap<u32, &str> = [(1, "x"), (2, "x"), (3, "y"), (4, "y")].into_iter().collect();
    assert_eq!(rand_index(&truth, &same).unwrap(), 1.0);
    // one cluster: agrees only on the 2 within-group pairs out of 6
    let merged: BTreeMap<u32, &str> = [(1, "x"), (2, "x"), (3, "x"), (4, "x")].into_iter().collect();
    assert!((rand_index(&truth, &merged).unwrap() - 2.0 / 6.0).abs() < 1e-12);
    // missing predictions are singletons: agrees on the 4 cross pairs
    let none: BTreeMap<u32, &str> = BTreeMap::new();
    assert!((rand_index(&truth, &none).unwrap() - 4.0 / 6.0).abs() < 1e-12);
    let stray: BTreeMap<u32, &str> = [(9, "x")].into_iter().collect();
    assert!(rand_index(&truth, &stray).is_err());
}
