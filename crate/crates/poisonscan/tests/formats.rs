use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use poison_core::{Address, ChainConfig, TokenAmount, TransactionRecord, TransferEvent, TxHash};
use poisonscan::error::FormatError;
use poisonscan::formats::{
    load_events, load_history, load_prices, load_registry, load_truth, read_events, save_events, save_history,
    save_prices, save_registry, save_truth, ChainFile, EventReader,
};
use proptest::prelude::*;

fn address(b: u8) -> Address {
    Address::from_bytes([b; 20])
}

fn tx_hash(n: u64) -> TxHash {
    let mut b = [0u8; 32];
    b[24..].copy_from_slice(&n.to_be_bytes());
    TxHash::from_bytes(b)
}

/// Transactions of one to three transfers, each in the same block as or
/// a later block than the previous transaction.
fn stream() -> impl Strategy<Value = (Vec<TransferEvent>, BTreeMap<TxHash, TransactionRecord>)> {
    let tx = (0u64..3, 1usize..4, any::<u128>(), any::<[u8; 3]>(), any::<bool>(), any::<u64>());
    prop::collection::vec(tx, 0..30).prop_map(|txs| {
        let mut events = Vec::new();
        let mut meta = BTreeMap::new();
        let (mut block, mut index) = (1u64, 0u32);
        for (n, (step, len, value, addrs, with_meta, gas)) in txs.into_iter().enumerate() {
            if step > 0 {
                block += step;
                index = 0;
            }
            let h = tx_hash(n as u64);
            for k in 0..len {
                events.push(TransferEvent {
                    chain_id: 1,
                    block_number: block,
                    timestamp: 1_700_000_000 + block * 12,
                    tx_hash: h,
                    log_index: index,
                    token: address(addrs[0]),
                    from: address(addrs[1]),
                    to: address(addrs[2].wrapping_add(k as u8)),
                    value: TokenAmount::from(value >> (k * 7)),
                });
                index += 1;
            }
            if with_meta {
                meta.insert(
                    h,
                    TransactionRecord {
                        tx_hash: h,
                        block_number: block,
                        initiator: address(addrs[1]),
                        target: (gas % 2 == 0).then(|| address(addrs[0])),
                        gas_used: gas >> 40,
                        gas_price: gas as u128 * 3,
                        native_value: 0,
                    },
                );
            }
        }
        (events, meta)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn events_round_trip((events, txs) in stream(), batch in 1usize..20) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("events.jsonl");
        save_events(&p, &events, &txs).unwrap();
        let (e2, t2) = load_events(&p, &ChainConfig::ethereum()).unwrap();
        prop_assert_eq!(&e2, &events);
        prop_assert_eq!(&t2, &txs);

        // batches end at block boundaries and cover the stream
        let mut all = Vec::new();
        let mut last_hi = 0;
        for b in EventReader::open(&p, 1, batch).unwrap() {
            let b = b.unwrap();
            prop_assert!(b.lo > last_hi || all.is_empty());
            prop_assert!(b.events.iter().all(|e| (b.lo..=b.hi).contains(&e.block_number)));
            last_hi = b.hi;
            all.extend(b.events);
        }
        prop_assert_eq!(all, events);
    }
}

fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn line(block: u64, index: u32, value: &str) -> String {
    format!(
        r#"{{"chain_id":1,"block_number":{block},"timestamp":{},"tx_hash":"{}","log_index":{index},"token":"{}","from":"{}","to":"{}","value":"{value}"}}"#,
        1_700_000_000 + block,
        tx_hash(block * 100 + index as u64),
        address(1),
        address(2),
        address(3),
    )
}

#[test]
fn empty_file_is_an_empty_stream() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "e.jsonl", "");
    assert_eq!(read_events(&p, &ChainConfig::ethereum()).unwrap().count(), 0);
}

#[test]
fn batch_spans_whole_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let body = [line(5, 0, "1"), line(5, 1, "2"), line(7, 0, "3")].join("\n");
    let p = write(dir.path(), "e.jsonl", &body);
    let batches: Vec<_> = EventReader::open(&p, 1, 1000).unwrap().map(Result::unwrap).collect();
    assert_eq!(batches.len(), 1);
    assert_eq!((batches[0].lo, batches[0].hi, batches[0].events.len()), (5, 7, 3));
}

#[test]
fn negative_value_is_a_schema_error_at_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let body = [line(5, 0, "1"), line(5, 1, "-2")].join("\n");
    let p = write(dir.path(), "e.jsonl", &body);
    match load_events(&p, &ChainConfig::ethereum()) {
        Err(FormatError::Schema { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
}

#[test]
fn out_of_order_and_wrong_chain_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "e.jsonl", &[line(5, 1, "1"), line(5, 0, "2")].join("\n"));
    match load_events(&p, &ChainConfig::ethereum()) {
        Err(FormatError::Order { line, block, log_index, .. }) => assert_eq!((line, block, log_index), (2, 5, 0)),
        other => panic!("{other:?}"),
    }
    let p = write(dir.path(), "f.jsonl", &line(5, 0, "1"));
    assert!(load_events(&p, &ChainConfig::bsc()).is_err());
    let p = write(dir.path(), "g.jsonl", &line(5, 0, "1").replace("\"value\"", "\"extra\":1,\"value\""));
    assert!(matches!(load_events(&p, &ChainConfig::ethereum()), Err(FormatError::Schema { line: 1, .. })));
}

#[test]
fn reference_tables_round_trip() {
    use poison_core::scenario::generate;
    let s = generate(&poison_core::scenario::ScenarioSpec {
        n_blocks: 300,
        ..Default::default()
    })
    .unwrap();
    let chain = &s.chains[0];
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    save_registry(&d.join("r.jsonl"), &chain.registry).unwrap();
    let reg = load_registry(&d.join("r.jsonl")).unwrap();
    assert_eq!(reg.len(), chain.registry.len());

    save_prices(&d.join("p.csv"), &chain.prices).unwrap();
    let prices = load_prices(&d.join("p.csv")).unwrap();
    let mut want = chain.prices.clone();
    want.sort_by(|a, b| (a.asset.to_string(), a.date).cmp(&(b.asset.to_string(), b.date)));
    let mut got = prices.rows();
    got.sort_by(|a, b| (a.asset.to_string(), a.date).cmp(&(b.asset.to_string(), b.date)));
    assert_eq!(got, want);

    save_history(&d.join("h.csv"), &chain.history).unwrap();
    assert_eq!(load_history(&d.join("h.csv")).unwrap(), chain.history);

    let truth = poison_core::scenario::ground_truth(chain, &chain.config).unwrap();
    save_truth(&d.join("t.jsonl"), &truth).unwrap();
    assert_eq!(load_truth(&d.join("t.jsonl")).unwrap(), truth);
}

#[test]
fn table_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let p = write(d, "p.csv", "asset,date,usd_price\nETH,2024-01-01,2000\nETH,2024-01-01,2001\n");
    assert!(matches!(load_prices(&p), Err(FormatError::Schema { line: 3, .. })));
    let p = write(d, "q.csv", "asset,day,usd_price\n");
    assert!(load_prices(&p).is_err());
    let p = write(d, "r.csv", "asset,date,usd_price\nETH,2024-13-01,1\n");
    assert!(matches!(load_prices(&p), Err(FormatError::Schema { line: 2, .. })));
    let p = write(d, "h.csv", &format!("account,total_txs\n{},x\n", address(1)));
    assert!(matches!(load_history(&p), Err(FormatError::Schema { line: 2, .. })));
}

#[test]
fn config_paths_resolve_against_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let sub = dir.path().join("chain");
    fs::create_dir(&sub).unwrap();
    let mut f = ChainFile::new(ChainConfig::bsc());
    f.registry = Some("registry.jsonl".into());
    f.prices = Some("/abs/prices.csv".into());
    poisonscan::formats::write_json(&sub.join("config.json"), &f).unwrap();
    let loaded = ChainFile::load(&sub.join("config.json")).unwrap();
    assert_eq!(loaded.chain, ChainConfig::bsc());
    assert_eq!(loaded.registry.unwrap(), sub.join("registry.jsonl"));
    assert_eq!(loaded.prices.unwrap(), Path::new("/abs/prices.csv"));

    let bad = write(dir.path(), "bad.json", r#"{"chain_id":1,"window_blocks":0,"tiny_threshold_usd":"10","a_min":3,"b_min":4,"birthday_threshold":0.999,"typo_digit_bound":20,"native_asset":"ETH","assume_stablecoin_par":false}"#);
    assert!(matches!(ChainFile::load(&bad), Err(FormatError::Invalid { .. })));
}
