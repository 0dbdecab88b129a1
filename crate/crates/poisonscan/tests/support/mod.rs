//! A loopback JSON-RPC node serving a fixed set of logs.
#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde_json::{json, Value};

pub const TRANSFER: &str = "0xddf252ad1be2c89b69c2b068fc378daa952ba7f163c4a11628f55a4df523b3ef";
pub const APPROVAL: &str = "0x8c5be1e5ebec7d5bd14f71427d1e84f3dd0314c0f7b2291e5b200ac8c7c3b925";

pub fn word(n: u128) -> String {
    format!("0x{n:064x}")
}

pub fn topic(addr_byte: u8) -> String {
    format!("0x{}{}", "0".repeat(24), format!("{addr_byte:02x}").repeat(20))
}

pub fn addr(addr_byte: u8) -> String {
    format!("0x{}", format!("{addr_byte:02x}").repeat(20))
}

pub fn hash(n: u64) -> String {
    format!("0x{n:064x}")
}

/// A log as a node returns it.
pub fn log(block: u64, index: u64, tx: u64, first_topic: &str, from: u8, to: u8, value: u128) -> Value {
    json!({
        "address": addr(0xaa),
        "topics": [first_topic, topic(from), topic(to)],
        "data": word(value),
        "blockNumber": format!("{block:#x}"),
        "transactionHash": hash(tx),
        "logIndex": format!("{index:#x}"),
        "removed": false,
    })
}

#[derive(Default)]
pub struct State {
    pub logs: Vec<Value>,
    /// Answer this many requests with HTTP 429 first.
    pub fail_first: usize,
    /// Answer every request with HTTP 500.
    pub always_fail: bool,
    pub requests: AtomicUsize,
    /// `(fromBlock, toBlock)` of each `eth_getLogs` call.
    pub ranges: Mutex<Vec<(u64, u64)>>,
}

pub struct Node {
    pub url: String,
    pub state: Arc<State>,
}

pub fn serve(state: State) -> Node {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let state = Arc::new(state);
    let shared = state.clone();
    std::thread::spawn(move || {
        for conn in listener.incoming() {
            let Ok(conn) = conn else { continue };
            let st = shared.clone();
            std::thread::spawn(move || {
                let _ = handle(conn, &st);
            });
        }
    });
    Node { url, state }
}

fn quantity(v: &Value) -> u64 {
    u64::from_str_radix(v.as_str().unwrap().trim_start_matches("0x"), 16).unwrap()
}

fn handle(conn: TcpStream, st: &State) -> std::io::Result<()> {
    let mut reader = BufReader::new(conn.try_clone()?);
    let mut len = 0usize;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                len = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body)?;
    let n = st.requests.fetch_add(1, Ordering::SeqCst);
    let (status, reply) = if st.always_fail {
        (500, "{}".to_string())
    } else if n < st.fail_first {
        (429, "{}".to_string())
    } else {
        (200, answer(serde_json::from_slice(&body).unwrap(), st).to_string())
    };
    let mut out = conn;
    write!(
        out,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
        reply.len()
    )?;
    out.flush()
}

fn answer(req: Value, st: &State) -> Value {
    let id = req["id"].clone();
    let params = &req["params"];
    let result = match req["method"].as_str().unwrap() {
        "eth_getLogs" => {
            let (lo, hi) = (quantity(&params[0]["fromBlock"]), quantity(&params[0]["toBlock"]));
            st.ranges.lock().unwrap().push((lo, hi));
            // the topic filter is left to the client
            let logs: Vec<Value> = st
                .logs
                .iter()
                .filter(|l| (lo..=hi).contains(&quantity(&l["blockNumber"])))
                .cloned()
                .collect();
            json!(logs)
        }
        "eth_getBlockByNumber" => {
            let b = quantity(&params[0]);
            json!({"number": format!("{b:#x}"), "timestamp": format!("{:#x}", 1_700_000_000 + 12 * b)})
        }
        "eth_getTransactionReceipt" => {
            let h = params[0].as_str().unwrap();
            let l = st.logs.iter().find(|l| l["transactionHash"] == h).unwrap();
            json!({
                "from": addr(0x11),
                "to": addr(0xaa),
                "blockNumber": l["blockNumber"],
                "gasUsed": "0xc350",
                "effectiveGasPrice": "0x3b9aca00",
            })
        }
        m => return json!({"jsonrpc": "2.0", "id": id, "error": {"code": -32601, "message": format!("no method {m}")}}),
    };
    json!({"jsonrpc": "2.0", "id": id, "result": result})
}
