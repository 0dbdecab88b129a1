mod support;

use std::collections::BTreeSet;
use std::time::Duration;

use poison_core::Address;
use poisonscan::error::RpcError;
use poisonscan::rpc::{Backoff, RpcClient, RpcOptions};
use proptest::prelude::*;
use serde_json::Value;
use support::{log, serve, State, APPROVAL, TRANSFER};

fn opts(max_range: u64, parallel: usize) -> RpcOptions {
    RpcOptions {
        max_range,
        parallel,
        backoff: Backoff {
            base: Duration::from_millis(1),
            ..Backoff::default()
        },
        timeout: Duration::from_secs(10),
        ..RpcOptions::default()
    }
}

fn fixture() -> Vec<Value> {
    vec![
        log(3, 0, 1, TRANSFER, 0x01, 0x02, 1_000_000),
        log(3, 1, 1, APPROVAL, 0x01, 0x03, 5),
        log(4, 0, 2, TRANSFER, 0x02, 0x04, 0),
    ]
}

#[test]
fn transfer_logs_decode_and_other_topics_are_dropped() {
    let node = serve(State {
        logs: fixture(),
        ..State::default()
    });
    let client = RpcClient::new(&node.url, 1, opts(100, 2));
    let batch = client.fetch_logs(0, 10).unwrap();
    assert_eq!(batch.events.len(), 2);
    let (a, b) = (&batch.events[0], &batch.events[1]);
    assert_eq!((a.block_number, a.log_index), (3, 0));
    assert_eq!((b.block_number, b.log_index), (4, 0));
    assert_eq!(a.from, Address::parse(&support::addr(0x01)).unwrap());
    assert_eq!(a.to, Address::parse(&support::addr(0x02)).unwrap());
    assert_eq!(a.token, Address::parse(&support::addr(0xaa)).unwrap());
    assert_eq!(a.value.to_string(), "1000000");
    assert!(b.value.is_zero());
    assert_eq!(a.timestamp, 1_700_000_036);
    assert_eq!(a.chain_id, 1);

    let hashes: BTreeSet<_> = batch.events.iter().map(|e| e.tx_hash).collect();
    let txs = client.fetch_transactions(&hashes).unwrap();
    assert_eq!(txs.len(), 2);
    let t = &txs[&a.tx_hash];
    assert_eq!((t.block_number, t.gas_used, t.gas_price), (3, 50_000, 1_000_000_000));
}

#[test]
fn token_id_transfers_and_removed_logs_are_dropped() {
    let mut nft = log(5, 0, 3, TRANSFER, 0x01, 0x02, 0);
    nft["topics"].as_array_mut().unwrap().push(Value::String(support::word(7)));
    let mut removed = log(5, 1, 4, TRANSFER, 0x01, 0x02, 9);
    removed["removed"] = Value::Bool(true);
    let node = serve(State {
        logs: vec![nft, removed, log(6, 0, 5, TRANSFER, 0x01, 0x02, 9)],
        ..State::default()
    });
    let batch = RpcClient::new(&node.url, 1, opts(100, 1)).fetch_logs(0, 10).unwrap();
    assert_eq!(batch.events.len(), 1);
    assert_eq!(batch.events[0].block_number, 6);
}

#[test]
fn sub_ranges_tile_the_request() {
    let node = serve(State {
        logs: fixture(),
        ..State::default()
    });
    let client = RpcClient::new(&node.url, 1, opts(4, 3));
    client.fetch_logs(2, 20).unwrap();
    let mut ranges = node.state.ranges.lock().unwrap().clone();
    ranges.sort();
    assert_eq!(ranges.first().unwrap().0, 2);
    assert_eq!(ranges.last().unwrap().1, 20);
    for w in ranges.windows(2) {
        assert_eq!(w[0].1 + 1, w[1].0);
    }
    assert!(ranges.iter().all(|(a, b)| b - a < 4));
}

#[test]
fn empty_and_inverted_ranges() {
    let node = serve(State::default());
    let client = RpcClient::new(&node.url, 1, opts(10, 2));
    assert!(client.fetch_logs(0, 50).unwrap().events.is_empty());
    assert!(matches!(client.fetch_logs(9, 3), Err(RpcError::Range { .. })));
    assert!(matches!(client.fetch_range(0, 10), Err(RpcError::Range { .. })));
}

#[test]
fn rate_limits_are_retried() {
    let node = serve(State {
        logs: fixture(),
        fail_first: 3,
        ..State::default()
    });
    let client = RpcClient::new(&node.url, 1, opts(100, 1));
    assert_eq!(client.fetch_logs(0, 10).unwrap().events.len(), 2);
}

#[test]
fn persistent_failures_stop_after_five_attempts() {
    let node = serve(State {
        always_fail: true,
        ..State::default()
    });
    let client = RpcClient::new(&node.url, 1, opts(100, 1));
    match client.fetch_logs(0, 10) {
        Err(RpcError::Fetch { attempts, .. }) => assert_eq!(attempts, 5),
        other => panic!("expected a fetch error, got {other:?}"),
    }
    assert_eq!(node.state.requests.load(std::sync::atomic::Ordering::SeqCst), 5);
}

fn logs_in(blocks: &[(u64, u8)]) -> Vec<Value> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, (b, n)) in blocks.iter().enumerate() {
        if !seen.insert(*b) {
            continue;
        }
        for j in 0..*n {
            let t = if j % 3 == 2 { APPROVAL } else { TRANSFER };
            out.push(log(*b, j as u64, (i as u64) << 8 | j as u64, t, j + 1, j + 2, *b as u128 * 10 + j as u128));
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn split_fetches_concatenate(
        blocks in prop::collection::vec((0u64..60, 1u8..4), 0..25),
        lo in 0u64..30,
        span in 1u64..30,
        cut in 0u64..30,
        max_range in 1u64..9,
        parallel in 1usize..4,
    ) {
        let hi = lo + span;
        let mid = lo + cut % span;
        let node = serve(State { logs: logs_in(&blocks), ..State::default() });
        let client = RpcClient::new(&node.url, 1, opts(max_range, parallel));
        let whole = client.fetch_logs(lo, hi).unwrap().events;
        let mut parts = client.fetch_logs(lo, mid).unwrap().events;
        parts.extend(client.fetch_logs(mid + 1, hi).unwrap().events);
        prop_assert_eq!(&whole, &parts);
        let expected = logs_in(&blocks)
            .iter()
            .filter(|l| l["topics"][0] == TRANSFER)
            .filter(|l| {
                let b = u64::from_str_radix(l["blockNumber"].as_str().unwrap().trim_start_matches("0x"), 16).unwrap();
                (lo..=hi).contains(&b)
            })
            .count();
        prop_assert_eq!(whole.len(), expected);
    }
}
