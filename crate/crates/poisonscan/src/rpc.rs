//! `eth_getLogs` ingest over JSON-RPC.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use poison_core::address::{Address, TxHash};
use poison_core::amount::TokenAmount;
use poison_core::event::{validate_order, TransactionRecord, TransferEvent};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::RpcError;
use crate::formats::EventBatch;

/// `keccak256("Transfer(address,address,uint256)")`.
pub const TRANSFER_TOPIC: &str = "0xddf252ad1be2c89b69c2b068fc378daa952ba7f163c4a11628f55a4df523b3ef";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Backoff {
    pub base: Duration,
    pub factor: u32,
    pub max_attempts: u32,
}

impl Default for Backoff {
    fn default() -> Self {
        Backoff {
            base: Duration::from_millis(500),
            factor: 2,
            max_attempts: 5,
        }
    }
}

impl Backoff {
    /// Pause after failed attempt number `attempt` (1-based).
    pub fn delay(&self, attempt: u32) -> Duration {
        self.base * self.factor.saturating_pow(attempt.saturating_sub(1))
    }
}

#[derive(Debug, Clone)]
pub struct RpcOptions {
    pub topic: TxHash,
    /// Largest block span of one request.
    pub max_range: u64,
    /// Concurrent sub-range requests.
    pub parallel: usize,
    pub backoff: Backoff,
    pub timeout: Duration,
}

impl Default for RpcOptions {
    fn default() -> Self {
        RpcOptions {
            topic: TxHash::parse(TRANSFER_TOPIC).expect("valid topic constant"),
            max_range: 2_000,
            parallel: 8,
            backoff: Backoff::default(),
            timeout: Duration::from_secs(60),
        }
    }
}

#[derive(Debug)]
struct CallError {
    transient: bool,
    message: String,
}

impl CallError {
    fn permanent(message: impl ToString) -> Self {
        CallError {
            transient: false,
            message: message.to_string(),
        }
    }
}

/// JSON-RPC error codes that are worth retrying: rate limits, missing
/// headers on lagging nodes, internal errors.
fn retryable_code(code: i64) -> bool {
    matches!(code, -32000 | -32005 | -32603 | 429)
}

#[derive(Debug, Deserialize)]
struct RpcLog {
    address: Address,
    topics: Vec<String>,
    data: String,
    #[serde(rename = "blockNumber")]
    block_number: String,
    #[serde(rename = "transactionHash")]
    transaction_hash: String,
    #[serde(rename = "logIndex")]
    log_index: String,
    #[serde(default, rename = "blockTimestamp")]
    block_timestamp: Option<String>,
    #[serde(default)]
    removed: bool,
}

pub fn parse_quantity(text: &str) -> Option<u64> {
    let digits = text.strip_prefix("0x").or_else(|| text.strip_prefix("0X"))?;
    if digits.is_empty() {
        return None;
    }
    u64::from_str_radix(digits, 16).ok()
}

fn parse_quantity_u128(text: &str) -> Option<u128> {
    let digits = text.strip_prefix("0x")?;
    if digits.is_empty() {
        return None;
    }
    u128::from_str_radix(digits, 16).ok()
}

pub fn quantity(n: u64) -> String {
    format!("{n:#x}")
}

fn decode_hex(text: &str) -> Option<Vec<u8>> {
    let digits = text.strip_prefix("0x")?;
    if digits.len() % 2 != 0 {
        return None;
    }
    (0..digits.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&digits[i..i + 2], 16).ok())
        .collect()
}

/// Address from a 32-byte indexed topic.
fn topic_address(topic: &str) -> Option<Address> {
    let bytes = decode_hex(topic)?;
    let arr: [u8; 32] = bytes.try_into().ok()?;
    let mut out = [0u8; 20];
    out.copy_from_slice(&arr[12..]);
    Some(Address::from_bytes(out))
}

pub struct RpcClient {
    endpoint: String,
    chain_id: u64,
    agent: ureq::Agent,
    opts: RpcOptions,
    next_id: AtomicU64,
}

impl RpcClient {
    pub fn new(endpoint: &str, chain_id: u64, opts: RpcOptions) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(opts.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        RpcClient {
            endpoint: endpoint.to_string(),
            chain_id,
            agent,
            opts,
            next_id: AtomicU64::new(1),
        }
    }

    fn call_once(&self, method: &str, params: &Value) -> Result<Value, CallError> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let body = json!({"jsonrpc": "2.0", "id": id, "method": method, "params": params});
        let mut resp = self.agent.post(&self.endpoint).send_json(&body).map_err(|e| CallError {
            transient: true,
            message: e.to_string(),
        })?;
        let status = resp.status().as_u16();
        if status != 200 {
            return Err(CallError {
                transient: status == 429 || status >= 500,
                message: format!("http status {status}"),
            });
        }
        let v: Value = resp.body_mut().read_json().map_err(|e| CallError {
            transient: true,
            message: format!("bad response body: {e}"),
        })?;
        if let Some(err) = v.get("error") {
            let code = err.get("code").and_then(Value::as_i64).unwrap_or(0);
            let msg = err.get("message").and_then(Value::as_str).unwrap_or("");
            return Err(CallError {
                transient: retryable_code(code),
                message: format!("rpc error {code}: {msg}"),
            });
        }
        v.get("result")
            .cloned()
            .ok_or_else(|| CallError::permanent("response has neither result nor error"))
    }

    fn call(&self, method: &str, params: Value, lo: u64, hi: u64) -> Result<Value, RpcError> {
        let b = self.opts.backoff;
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.call_once(method, &params) {
                Ok(v) => return Ok(v),
                Err(e) if e.transient && attempt < b.max_attempts => std::thread::sleep(b.delay(attempt)),
                Err(e) => {
                    return Err(RpcError::Fetch {
                        lo,
                        hi,
                        attempts: attempt,
                        message: e.message,
                    })
                }
            }
        }
    }

    fn block_timestamp(&self, block: u64) -> Result<u64, RpcError> {
        let v = self.call("eth_getBlockByNumber", json!([quantity(block), false]), block, block)?;
        v.get("timestamp")
            .and_then(Value::as_str)
            .and_then(parse_quantity)
            .ok_or_else(|| RpcError::Fetch {
                lo: block,
                hi: block,
                attempts: 1,
                message: "block has no timestamp".into(),
            })
    }

    /// One `eth_getLogs` request. Logs with another first topic, without
    /// exactly three topics (token-id transfers index a third argument) or
    /// flagged as removed are left out.
    pub fn fetch_range(&self, lo: u64, hi: u64) -> Result<EventBatch, RpcError> {
        if lo > hi || hi - lo >= self.opts.max_range {
            return Err(RpcError::Range { lo, hi });
        }
        let filter = json!([{
            "fromBlock": quantity(lo),
            "toBlock": quantity(hi),
            "topics": [self.opts.topic.to_string()],
        }]);
        let v = self.call("eth_getLogs", filter, lo, hi)?;
        let logs: Vec<RpcLog> = serde_json::from_value(v).map_err(|e| RpcError::Fetch {
            lo,
            hi,
            attempts: 1,
            message: format!("bad log list: {e}"),
        })?;
        let topic = self.opts.topic.to_string();
        let mut times: HashMap<u64, u64> = HashMap::new();
        let mut events = Vec::new();
        for log in logs {
            if log.removed || log.topics.first().map(|t| t.to_lowercase()) != Some(topic.clone()) || log.topics.len() != 3 {
                continue;
            }
            let bad = |message: &str| RpcError::Decode {
                tx_hash: log.transaction_hash.clone(),
                log_index: log.log_index.clone(),
                message: message.to_string(),
            };
            let block = parse_quantity(&log.block_number).ok_or_else(|| bad("bad blockNumber"))?;
            let log_index = parse_quantity(&log.log_index)
                .and_then(|i| u32::try_from(i).ok())
                .ok_or_else(|| bad("bad logIndex"))?;
            let tx_hash = TxHash::parse(&log.transaction_hash).map_err(|_| bad("bad transactionHash"))?;
            let from = topic_address(&log.topics[1]).ok_or_else(|| bad("bad from topic"))?;
            let to = topic_address(&log.topics[2]).ok_or_else(|| bad("bad to topic"))?;
            let data: [u8; 32] = decode_hex(&log.data)
                .and_then(|d| d.try_into().ok())
                .ok_or_else(|| bad("data is not one 32-byte word"))?;
            if block < lo || block > hi {
                return Err(bad("block outside the requested range"));
            }
            let timestamp = match log.block_timestamp.as_deref() {
                Some(t) => parse_quantity(t).ok_or_else(|| bad("bad blockTimestamp"))?,
                None => match times.get(&block) {
                    Some(t) => *t,
                    None => {
                        let t = self.block_timestamp(block)?;
                        times.insert(block, t);
                        t
                    }
                },
            };
            events.push(TransferEvent {
                chain_id: self.chain_id,
                block_number: block,
                timestamp,
                tx_hash,
                log_index,
                token: log.address,
                from,
                to,
                value: TokenAmount::from_be_bytes(data),
            });
        }
        events.sort_by_key(|e| e.id());
        validate_order(&events).map_err(|source| RpcError::Order { lo, hi, source })?;
        Ok(EventBatch {
            chain_id: self.chain_id,
            lo,
            hi,
            events,
            txs: BTreeMap::new(),
        })
    }

    /// Fetch `lo..=hi` as sub-ranges of at most `max_range` blocks, up to
    /// `parallel` at a time, merged in block order.
    pub fn fetch_logs(&self, lo: u64, hi: u64) -> Result<EventBatch, RpcError> {
        if lo > hi {
            return Err(RpcError::Range { lo, hi });
        }
        let step = self.opts.max_range.max(1);
        let mut ranges = Vec::new();
        let mut start = lo;
        loop {
            let end = start.saturating_add(step - 1).min(hi);
            ranges.push((start, end));
            if end == hi {
                break;
            }
            start = end + 1;
        }
        let results: Mutex<Vec<Option<Result<EventBatch, RpcError>>>> =
            Mutex::new((0..ranges.len()).map(|_| None).collect());
        let next = AtomicUsize::new(0);
        let workers = self.opts.parallel.clamp(1, ranges.len());
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(&(a, b)) = ranges.get(i) else { break };
                    let r = self.fetch_range(a, b);
                    let failed = r.is_err();
                    results.lock().expect("result slots")[i] = Some(r);
                    if failed {
                        // let the other workers drain quickly
                        next.store(ranges.len(), Ordering::Relaxed);
                    }
                });
            }
        });
        let mut events = Vec::new();
        for r in results.into_inner().expect("result slots").into_iter().flatten() {
            events.extend(r?.events);
        }
        validate_order(&events).map_err(|source| RpcError::Order { lo, hi, source })?;
        Ok(EventBatch {
            chain_id: self.chain_id,
            lo,
            hi,
            events,
            txs: BTreeMap::new(),
        })
    }

    /// Sender, callee and gas of each transaction, from its receipt.
    pub fn fetch_transactions(&self, hashes: &BTreeSet<TxHash>) -> Result<BTreeMap<TxHash, TransactionRecord>, RpcError> {
        let mut out = BTreeMap::new();
        for h in hashes {
            let v = self.call("eth_getTransactionReceipt", json!([h.to_string()]), 0, 0)?;
            let bad = |message: &str| RpcError::Decode {
                tx_hash: h.to_string(),
                log_index: "-".into(),
                message: message.to_string(),
            };
            let field = |name: &str| v.get(name).and_then(Value::as_str);
            let initiator = field("from")
                .and_then(|s| Address::parse(s).ok())
                .ok_or_else(|| bad("receipt without sender"))?;
            let target = field("to").and_then(|s| Address::parse(s).ok());
            let block_number = field("blockNumber")
                .and_then(parse_quantity)
                .ok_or_else(|| bad("receipt without block"))?;
            let gas_used = field("gasUsed").and_then(parse_quantity).ok_or_else(|| bad("receipt without gasUsed"))?;
            let gas_price = field("effectiveGasPrice")
                .and_then(parse_quantity_u128)
                .ok_or_else(|| bad("receipt without effectiveGasPrice"))?;
            out.insert(
                *h,
                TransactionRecord {
                    tx_hash: *h,
                    block_number,
                    initiator,
                    target,
                    gas_used,
                    gas_price,
                    native_value: 0,
                },
            );
        }
        Ok(out)
    }
}
