//! Readers and writers for the on-disk formats.
//!
//! Line-oriented files report errors with 1-based line numbers. Every
//! writer emits its records in a fixed order so that identical inputs give
//! identical bytes.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use poison_core::address::{Address, TxHash};
use poison_core::amount::TokenAmount;
use poison_core::config::ChainConfig;
use poison_core::event::{TransactionRecord, TransferEvent};
use poison_core::money::UsdPrice;
use poison_core::prices::{parse_date, AssetId, PriceRow, PriceTable};
use poison_core::scenario::{Contest, GroundTruth, TruthEvent};
use poison_core::token::{TokenEntry, TokenRegistry};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::FormatError;

/// Events of consecutive blocks `lo..=hi` in stream order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventBatch {
    pub chain_id: u64,
    pub lo: u64,
    pub hi: u64,
    pub events: Vec<TransferEvent>,
    pub txs: BTreeMap<TxHash, TransactionRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EventLine {
    chain_id: u64,
    block_number: u64,
    timestamp: u64,
    tx_hash: TxHash,
    log_index: u32,
    token: Address,
    from: Address,
    to: Address,
    value: TokenAmount,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tx: Option<TxLine>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TxLine {
    initiator: Address,
    #[serde(default)]
    target: Option<Address>,
    gas_used: u64,
    gas_price: u128,
    #[serde(default, skip_serializing_if = "is_zero")]
    native_value: u128,
}

fn is_zero(v: &u128) -> bool {
    *v == 0
}

fn open(path: &Path) -> Result<BufReader<File>, FormatError> {
    File::open(path).map(BufReader::new).map_err(|e| FormatError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, FormatError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| FormatError::io(dir, e))?;
        }
    }
    File::create(path).map(BufWriter::new).map_err(|e| FormatError::io(path, e))
}

/// Streaming reader over an events file. Batches end at block boundaries
/// and hold at least `batch_events` events unless the file ends first.
pub struct EventReader {
    path: PathBuf,
    lines: std::io::Lines<BufReader<File>>,
    line_no: usize,
    chain_id: u64,
    batch_events: usize,
    pending: Option<(TransferEvent, Option<TransactionRecord>, usize)>,
    prev: Option<(u64, u32)>,
    current_tx: Option<TxHash>,
    closed: HashSet<TxHash>,
    done: bool,
}

impl EventReader {
    pub fn open(path: &Path, chain_id: u64, batch_events: usize) -> Result<Self, FormatError> {
        Ok(EventReader {
            path: path.to_path_buf(),
            lines: open(path)?.lines(),
            line_no: 0,
            chain_id,
            batch_events: batch_events.max(1),
            pending: None,
            prev: None,
            current_tx: None,
            closed: HashSet::new(),
            done: false,
        })
    }

    fn next_event(&mut self) -> Result<Option<(TransferEvent, Option<TransactionRecord>, usize)>, FormatError> {
        if let Some(p) = self.pending.take() {
            return Ok(Some(p));
        }
        loop {
            let Some(line) = self.lines.next() else {
                return Ok(None);
            };
            self.line_no += 1;
            let line = line.map_err(|e| FormatError::io(&self.path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let n = self.line_no;
            let rec: EventLine = serde_json::from_str(&line).map_err(|e| FormatError::schema(&self.path, n, e))?;
            if rec.chain_id != self.chain_id {
                return Err(FormatError::schema(
                    &self.path,
                    n,
                    format!("chain_id {} but the configuration is for chain {}", rec.chain_id, self.chain_id),
                ));
            }
            let key = (rec.block_number, rec.log_index);
            if let Some(prev) = self.prev {
                if key <= prev {
                    return Err(FormatError::Order {
                        path: self.path.clone(),
                        line: n,
                        prev_block: prev.0,
                        prev_log_index: prev.1,
                        block: key.0,
                        log_index: key.1,
                    });
                }
            }
            self.prev = Some(key);
            if self.current_tx != Some(rec.tx_hash) {
                if let Some(t) = self.current_tx {
                    self.closed.insert(t);
                }
                if self.closed.contains(&rec.tx_hash) {
                    return Err(FormatError::schema(
                        &self.path,
                        n,
                        format!("transaction {} is not contiguous", rec.tx_hash),
                    ));
                }
                self.current_tx = Some(rec.tx_hash);
            }
            let tx = rec.tx.map(|t| TransactionRecord {
                tx_hash: rec.tx_hash,
                block_number: rec.block_number,
                initiator: t.initiator,
                target: t.target,
                gas_used: t.gas_used,
                gas_price: t.gas_price,
                native_value: t.native_value,
            });
            let event = TransferEvent {
                chain_id: rec.chain_id,
                block_number: rec.block_number,
                timestamp: rec.timestamp,
                tx_hash: rec.tx_hash,
                log_index: rec.log_index,
                token: rec.token,
                from: rec.from,
                to: rec.to,
                value: rec.value,
            };
            return Ok(Some((event, tx, n)));
        }
    }

    fn next_batch(&mut self) -> Result<Option<EventBatch>, FormatError> {
        let mut events: Vec<TransferEvent> = Vec::new();
        let mut txs = BTreeMap::new();
        while let Some((e, tx, line)) = self.next_event()? {
            if let Some(last) = events.last() {
                if events.len() >= self.batch_events && e.block_number != last.block_number {
                    self.pending = Some((e, tx, line));
                    break;
                }
            }
            if let Some(t) = tx {
                if let Some(old) = txs.get(&t.tx_hash) {
                    if *old != t {
                        return Err(FormatError::schema(
                            &self.path,
                            line,
                            format!("conflicting metadata for transaction {}", t.tx_hash),
                        ));
                    }
                }
                txs.insert(t.tx_hash, t);
            }
            events.push(e);
        }
        let (Some(first), Some(last)) = (events.first(), events.last()) else {
            return Ok(None);
        };
        Ok(Some(EventBatch {
            chain_id: self.chain_id,
            lo: first.block_number,
            hi: last.block_number,
            events,
            txs,
        }))
    }
}

impl Iterator for EventReader {
    type Item = Result<EventBatch, FormatError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.next_batch() {
            Ok(Some(b)) => Some(Ok(b)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Stream an events file in batches.
pub fn read_events(path: &Path, config: &ChainConfig) -> Result<EventReader, FormatError> {
    EventReader::open(path, config.chain_id, 50_000)
}

/// Read a whole events file. Transaction metadata is optional per
/// transaction; clustering reports poisoning transactions without it.
pub fn load_events(
    path: &Path,
    config: &ChainConfig,
) -> Result<(Vec<TransferEvent>, BTreeMap<TxHash, TransactionRecord>), FormatError> {
    let mut events = Vec::new();
    let mut txs = BTreeMap::new();
    for batch in read_events(path, config)? {
        let batch = batch?;
        events.extend(batch.events);
        txs.extend(batch.txs);
    }
    Ok((events, txs))
}

/// Write events in stream order. Transaction metadata rides on the first
/// event of each transaction.
pub fn write_events<W: Write>(
    mut w: W,
    events: &[TransferEvent],
    txs: &BTreeMap<TxHash, TransactionRecord>,
) -> std::io::Result<()> {
    let mut prev: Option<TxHash> = None;
    for e in events {
        let tx = (prev != Some(e.tx_hash))
            .then(|| txs.get(&e.tx_hash))
            .flatten()
            .map(|t| TxLine {
                initiator: t.initiator,
                target: t.target,
                gas_used: t.gas_used,
                gas_price: t.gas_price,
                native_value: t.native_value,
            });
        prev = Some(e.tx_hash);
        let line = EventLine {
            chain_id: e.chain_id,
            block_number: e.block_number,
            timestamp: e.timestamp,
            tx_hash: e.tx_hash,
            log_index: e.log_index,
            token: e.token,
            from: e.from,
            to: e.to,
            value: e.value,
            tx,
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn save_events(
    path: &Path,
    events: &[TransferEvent],
    txs: &BTreeMap<TxHash, TransactionRecord>,
) -> Result<(), FormatError> {
    write_events(create(path)?, events, txs).map_err(|e| FormatError::io(path, e))
}

/// Parse one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| FormatError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| FormatError::schema(path, i + 1, e))?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), FormatError> {
    let mut w = create(path)?;
    let io = |e: std::io::Error| FormatError::io(path, e);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| FormatError::invalid(path, e))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, FormatError> {
    serde_json::from_reader(open(path)?).map_err(|e| FormatError::schema(path, e.line(), e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| FormatError::invalid(path, e))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| FormatError::io(path, e))
}

pub fn load_registry(path: &Path) -> Result<TokenRegistry, FormatError> {
    let mut reg = TokenRegistry::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| FormatError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: TokenEntry = serde_json::from_str(&line).map_err(|e| FormatError::schema(path, i + 1, e))?;
        reg.insert(entry).map_err(|e| FormatError::schema(path, i + 1, e))?;
    }
    Ok(reg)
}

pub fn save_registry(path: &Path, entries: &[TokenEntry]) -> Result<(), FormatError> {
    let mut sorted = entries.to_vec();
    sorted.sort_by_key(|e| (e.chain_id, e.address));
    write_jsonl(path, &sorted)
}

#[derive(Debug, Serialize, Deserialize)]
struct PriceCsv {
    asset: String,
    date: String,
    usd_price: String,
}

fn csv_reader(path: &Path) -> Result<csv::Reader<BufReader<File>>, FormatError> {
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?))
}

/// Line number of a CSV record, counting the header as line 1.
fn csv_line(rec: &csv::StringRecord, fallback: usize) -> usize {
    rec.position().map_or(fallback, |p| p.line() as usize)
}

fn expect_headers(path: &Path, r: &mut csv::Reader<BufReader<File>>, want: &[&str]) -> Result<(), FormatError> {
    let got = r.headers().map_err(|e| FormatError::schema(path, 1, e))?;
    if got.iter().ne(want.iter().copied()) {
        return Err(FormatError::schema(
            path,
            1,
            format!("expected header `{}`", want.join(",")),
        ));
    }
    Ok(())
}

pub fn load_prices(path: &Path) -> Result<PriceTable, FormatError> {
    let mut r = csv_reader(path)?;
    expect_headers(path, &mut r, &["asset", "date", "usd_price"])?;
    let mut table = PriceTable::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| FormatError::schema(path, i + 2, e))?;
        let line = csv_line(&rec, i + 2);
        let row: PriceCsv = rec.deserialize(None).map_err(|e| FormatError::schema(path, line, e))?;
        let date = parse_date(&row.date).map_err(|e| FormatError::schema(path, line, e))?;
        let price = UsdPrice::parse(&row.usd_price).map_err(|e| FormatError::schema(path, line, e))?;
        table
            .insert(AssetId::parse(&row.asset), date, price)
            .map_err(|e| FormatError::schema(path, line, e))?;
    }
    Ok(table)
}

pub fn save_prices(path: &Path, rows: &[PriceRow]) -> Result<(), FormatError> {
    let mut sorted = rows.to_vec();
    sorted.sort_by(|a, b| (a.asset.to_string(), a.date).cmp(&(b.asset.to_string(), b.date)));
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in sorted {
        w.serialize(PriceCsv {
            asset: r.asset.to_string(),
            date: r.date.format("%Y-%m-%d").to_string(),
            usd_price: r.usd_price.to_string(),
        })
        .map_err(|e| FormatError::invalid(path, e))?;
    }
    w.flush().map_err(|e| FormatError::io(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
struct HistoryCsv {
    account: Address,
    total_txs: u64,
}

/// Total transactions per account.
pub fn load_history(path: &Path) -> Result<BTreeMap<Address, u64>, FormatError> {
    let mut r = csv_reader(path)?;
    expect_headers(path, &mut r, &["account", "total_txs"])?;
    let mut out = BTreeMap::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| FormatError::schema(path, i + 2, e))?;
        let line = csv_line(&rec, i + 2);
        let row: HistoryCsv = rec.deserialize(None).map_err(|e| FormatError::schema(path, line, e))?;
        if out.insert(row.account, row.total_txs).is_some() {
            return Err(FormatError::schema(path, line, format!("duplicate account {}", row.account)));
        }
    }
    Ok(out)
}

pub fn save_history(path: &Path, history: &BTreeMap<Address, u64>) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for (account, total) in history {
        w.serialize(HistoryCsv {
            account: *account,
            total_txs: *total,
        })
        .map_err(|e| FormatError::invalid(path, e))?;
    }
    w.flush().map_err(|e| FormatError::io(path, e))
}

/// One address per line; blank lines and `#` comments are skipped.
pub fn load_addresses(path: &Path) -> Result<Vec<Address>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| FormatError::io(path, e))?;
        let text = line.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        out.push(Address::parse(text).map_err(|e| FormatError::schema(path, i + 1, e))?);
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct BytecodeCsv {
    contract: Address,
    code_hash: String,
}

/// Attack-contract code fingerprints, CSV `contract,code_hash`.
pub fn load_bytecode(path: &Path) -> Result<BTreeMap<Address, String>, FormatError> {
    let mut r = csv_reader(path)?;
    expect_headers(path, &mut r, &["contract", "code_hash"])?;
    let mut out = BTreeMap::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| FormatError::schema(path, i + 2, e))?;
        let line = csv_line(&rec, i + 2);
        let row: BytecodeCsv = rec.deserialize(None).map_err(|e| FormatError::schema(path, line, e))?;
        out.insert(row.contract, row.code_hash);
    }
    Ok(out)
}

/// One record of `ground_truth.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TruthLine {
    Header { chain_id: u64, config: ChainConfig },
    Event(TruthEvent),
    Bot { address: Address },
    Accidental { event: poison_core::EventId },
    Contest(Contest),
}

pub fn save_truth(path: &Path, truth: &GroundTruth) -> Result<(), FormatError> {
    let mut lines = vec![TruthLine::Header {
        chain_id: truth.chain_id,
        config: truth.config.clone(),
    }];
    lines.extend(truth.events.values().cloned().map(TruthLine::Event));
    lines.extend(truth.bots.iter().map(|a| TruthLine::Bot { address: *a }));
    lines.extend(truth.accidental.iter().map(|e| TruthLine::Accidental { event: *e }));
    lines.extend(truth.contests.iter().cloned().map(TruthLine::Contest));
    write_jsonl(path, &lines)
}

pub fn load_truth(path: &Path) -> Result<GroundTruth, FormatError> {
    let lines: Vec<TruthLine> = read_jsonl(path)?;
    let mut it = lines.into_iter();
    let Some(TruthLine::Header { chain_id, config }) = it.next() else {
        return Err(FormatError::schema(path, 1, "missing header line"));
    };
    let mut truth = GroundTruth {
        chain_id,
        config,
        events: BTreeMap::new(),
        bots: BTreeSet::new(),
        accidental: BTreeSet::new(),
        contests: Vec::new(),
    };
    for (i, line) in it.enumerate() {
        match line {
            TruthLine::Header { .. } => return Err(FormatError::schema(path, i + 2, "second header line")),
            TruthLine::Event(e) => {
                truth.events.insert(e.event, e);
            }
            TruthLine::Bot { address } => {
                truth.bots.insert(address);
            }
            TruthLine::Accidental { event } => {
                truth.accidental.insert(event);
            }
            TruthLine::Contest(c) => truth.contests.push(c),
        }
    }
    Ok(truth)
}

/// Per-chain configuration file: detection parameters plus the paths of
/// the chain's reference files, relative to the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainFile {
    #[serde(flatten)]
    pub chain: ChainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub registry: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prices: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bytecode: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verified_contracts: Option<PathBuf>,
}

impl ChainFile {
    pub fn new(chain: ChainConfig) -> Self {
        ChainFile {
            chain,
            registry: None,
            prices: None,
            history: None,
            bytecode: None,
            verified_contracts: None,
        }
    }

    /// Read a configuration file and resolve its paths against its directory.
    pub fn load(path: &Path) -> Result<Self, FormatError> {
        let mut f: ChainFile = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut f.registry,
            &mut f.prices,
            &mut f.history,
            &mut f.bytecode,
            &mut f.verified_contracts,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        f.chain.validate().map_err(|e| FormatError::invalid(path, e))?;
        Ok(f)
    }
}
