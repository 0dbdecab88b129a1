use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{confirm_payoffs, scan, TransferLabel};
use crate::config::ChainConfig;
use crate::error::OrderError;
use crate::event::TransferEvent;
use crate::prices::PriceTable;
use crate::token::TokenRegistry;

/// Detection counts under one parameter set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub window_blocks: u64,
    pub a_min: u8,
    pub b_min: u8,
    pub tiny: u64,
    pub zero_value: u64,
    pub counterfeit: u64,
    pub lookalikes: u64,
    pub payoffs: u64,
}

/// Rerun detection over the same stream once per config.
pub fn sensitivity_run(
    events: &[TransferEvent],
    configs: &[ChainConfig],
    registry: &TokenRegistry,
    prices: &PriceTable,
) -> Result<Vec<SensitivityRow>, OrderError> {
    let mut rows = Vec::with_capacity(configs.len());
    for cfg in configs {
        let report = confirm_payoffs(scan(events, cfg, registry, prices)?, None);
        let s = report.poisoning_summary();
        let payoffs = report
            .findings
            .iter()
            .filter(|f| f.label == TransferLabel::PayoffConfirmed)
            .map(|f| f.event)
            .collect::<alloc::collections::BTreeSet<_>>()
            .len() as u64;
        rows.push(SensitivityRow {
            window_blocks: cfg.window_blocks,
            a_min: cfg.a_min,
            b_min: cfg.b_min,
            tiny: s.tiny,
            zero_value: s.zero_value,
            counterfeit: s.counterfeit,
            lookalikes: s.lookalikes,
            payoffs,
        });
    }
    Ok(rows)
}

/// Fixed-width text table, one row per config.
pub fn format_sensitivity_table(rows: &[SensitivityRow]) -> String {
    let mut out = String::from("window  (a,b)   tiny      zero      counterfeit  lookalikes  payoffs\n");
    for r in rows {
        out.push_str(&format!(
            "{:<7} ({},{})   {:<9} {:<9} {:<12} {:<11} {}\n",
            r.window_blocks, r.a_min, r.b_min, r.tiny, r.zero_value, r.counterfeit, r.lookalikes, r.payoffs
        ));
    }
    out
}
