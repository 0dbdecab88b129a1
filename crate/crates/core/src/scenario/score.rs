use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;

use serde::{Deserialize, Serialize};

use crate::detector::TransferLabel;
use crate::error::ScenarioError;
use crate::event::EventId;

/// Agreement of predicted event labels with the truth. An event counts
/// as positive when its label is not benign; a true positive needs the
/// exact label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    /// Share of all events whose label matches, benign included.
    pub accuracy: f64,
    /// 1.0 when nothing is predicted.
    pub precision: f64,
    /// 1.0 when the truth has no positives.
    pub recall: f64,
    pub f1: f64,
}

/// Score `predicted` against `truth` over the `universe` of event ids.
/// Labels for ids outside the universe are an error.
pub fn score_labels(
    truth: &BTreeMap<EventId, TransferLabel>,
    predicted: &BTreeMap<EventId, TransferLabel>,
    universe: &BTreeSet<EventId>,
) -> Result<LabelScore, ScenarioError> {
    for id in truth.keys().chain(predicted.keys()) {
        if !universe.contains(id) {
            return Err(ScenarioError::Mismatch(format!("{id}")));
        }
    }
    let label = |m: &BTreeMap<EventId, TransferLabel>, id: &EventId| m.get(id).copied().unwrap_or(TransferLabel::Benign);
    let (mut tp, mut fp, mut fn_, mut agree) = (0u64, 0u64, 0u64, 0u64);
    for id in universe {
        let (t, p) = (label(truth, id), label(predicted, id));
        if t == p {
            agree += 1;
        }
        let (tpos, ppos) = (t != TransferLabel::Benign, p != TransferLabel::Benign);
        if ppos && t == p {
            tp += 1;
        } else {
            if ppos {
                fp += 1;
            }
            if tpos {
                fn_ += 1;
            }
        }
    }
    let ratio = |num: u64, den: u64| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(LabelScore {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        accuracy: ratio(agree, universe.len() as u64),
        precision,
        recall,
        f1,
    })
}

fn pairs(n: u64) -> f64 {
    (n * n.saturating_sub(1) / 2) as f64
}

/// Pairwise Rand index between a true and a predicted partition of the
/// truth's items. Items missing from `predicted` are singletons; items
/// only in `predicted` are an error.
pub fn rand_index<K: Ord + core::fmt::Debug, A: Ord, B: Ord>(
    truth: &BTreeMap<K, A>,
    predicted: &BTreeMap<K, B>,
) -> Result<f64, ScenarioError> {
    if let Some(k) = predicted.keys().find(|k| !truth.contains_key(k)) {
        return Err(ScenarioError::Mismatch(format!("{k:?}")));
    }
    let n = truth.len() as u64;
    if n < 2 {
        return Ok(1.0);
    }
    let mut cells: BTreeMap<(&A, Option<&B>, usize), u64> = BTreeMap::new();
    let mut rows: BTreeMap<&A, u64> = BTreeMap::new();
    let mut cols: BTreeMap<(Option<&B>, usize), u64> = BTreeMap::new();
    for (i, (k, a)) in truth.iter().enumerate() {
        let b = predicted.get(k);
        // a missing prediction is its own cluster
        let col = (b, if b.is_none() { i } else { 0 });
        *cells.entry((a, col.0, col.1)).or_default() += 1;
        *rows.entry(a).or_default() += 1;
        *cols.entry(col).or_default() += 1;
    }
    let same_both: f64 = cells.values().map(|&c| pairs(c)).sum();
    let same_truth: f64 = rows.values().map(|&c| pairs(c)).sum();
    let same_pred: f64 = cols.values().map(|&c| pairs(c)).sum();
    let total = pairs(n);
    Ok((total + 2.0 * same_both - same_truth - same_pred) / total)
}
