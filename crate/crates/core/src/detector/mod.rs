//! Windowed poisoning detection.
//!
//! For every stablecoin payment `V -> R` in block `n`, transfers touching
//! `V` in blocks `n+1 ..= n+m+1` are compared against `R`; counterparties
//! whose prefix/suffix score passes `(a_min, b_min)` are lookalikes `L`, and
//! the transfer is classified as a tiny, zero-value or counterfeit
//! poisoning. Sibling transfers in a poisoning transaction are classified
//! without the window. Authentic-token payments `V -> L` with a positive
//! value are payoff candidates at any distance; [`confirm_payoffs`] checks
//! that a poisoning binding `(V, L)` happened in between.

mod payoff;
mod pricing;
mod report;
mod scan;
mod sensitivity;

pub use payoff::{birthday_filter, confirm_payoffs, detect_accidental, AccidentalTransfer, FullHistory};
pub use pricing::Pricer;
pub use report::{
    DetectionReport, Diagnostics, Finding, PayoffEvidence, PayoffSummary, PoisoningSummary, Quarantine,
    UnpricedEvent, VictimInfo,
};
pub use scan::{scan, sibling_expansion, Scanner};
pub use sensitivity::{format_sensitivity_table, sensitivity_run, SensitivityRow};

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::config::ChainConfig;
use crate::error::OrderError;
use crate::event::TransferEvent;
use crate::prices::PriceTable;
use crate::token::TokenRegistry;

/// Classification of one transfer within one `(V, R, L)` context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferLabel {
    Benign,
    Intended,
    TinyPoison,
    ZeroValuePoison,
    CounterfeitPoison,
    PayoffUnconfirmed,
    PayoffConfirmed,
    Accidental,
}

impl TransferLabel {
    /// Resolution order when one event carries several contexts:
    /// payoff > poison > intended > benign.
    pub fn precedence(self) -> u8 {
        match self {
            TransferLabel::Benign => 0,
            TransferLabel::Intended => 1,
            TransferLabel::TinyPoison | TransferLabel::ZeroValuePoison | TransferLabel::CounterfeitPoison => 2,
            TransferLabel::PayoffUnconfirmed | TransferLabel::PayoffConfirmed | TransferLabel::Accidental => 3,
        }
    }

    pub fn is_poison(self) -> bool {
        matches!(
            self,
            TransferLabel::TinyPoison | TransferLabel::ZeroValuePoison | TransferLabel::CounterfeitPoison
        )
    }

    pub fn is_payoff(self) -> bool {
        matches!(self, TransferLabel::PayoffUnconfirmed | TransferLabel::PayoffConfirmed)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TransferLabel::Benign => "benign",
            TransferLabel::Intended => "intended",
            TransferLabel::TinyPoison => "tiny_poison",
            TransferLabel::ZeroValuePoison => "zero_value_poison",
            TransferLabel::CounterfeitPoison => "counterfeit_poison",
            TransferLabel::PayoffUnconfirmed => "payoff_unconfirmed",
            TransferLabel::PayoffConfirmed => "payoff_confirmed",
            TransferLabel::Accidental => "accidental",
        }
    }
}

impl fmt::Display for TransferLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Scan, confirm payoffs against the full history, flag accidental
/// transfers and quarantine victims failing the birthday bound.
pub fn analyze(
    events: &[TransferEvent],
    config: &ChainConfig,
    registry: &TokenRegistry,
    prices: &PriceTable,
) -> Result<(DetectionReport, Vec<AccidentalTransfer>), OrderError> {
    let report = scan(events, config, registry, prices)?;
    let history = FullHistory {
        events,
        registry,
        prices,
        config,
    };
    let mut report = confirm_payoffs(report, Some(&history));
    let accidental = detect_accidental(&mut report, events, registry);
    Ok((birthday_filter(report, config), accidental))
}
