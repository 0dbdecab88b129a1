//! File formats, JSON-RPC ingestion and the `poisonscan` command line on
//! top of `poison-core`.

pub mod bench;
pub mod bundle;
pub mod cli;
pub mod error;
pub mod formats;
pub mod pipeline;
pub mod rpc;
