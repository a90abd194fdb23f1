//! Coinbase outputs referenced by small transactions.
//!
//! Miners consolidate block rewards in transactions with many inputs, so
//! a coinbase output referenced by a small transaction is usually a
//! decoy picked by the selection algorithm. The pass is gated to
//! transactions at or after the decentralized-pool era, where coinbase
//! outputs became numerous enough for the assumption to hold.

use chrono::{DateTime, NaiveDate};

use crate::chain::ChainStore;
use crate::ingest::GroundTruth;
use crate::labels::{HeuristicId, LabelSet, Labeler};
use crate::metrics::{labelset_as_truth, precision_report};

/// Transactions with more inputs than this look like miner
/// consolidations and are left alone.
pub const DEFAULT_MAX_INPUTS: u32 = 90;

/// Default era gate: the month the decentralized pool launched.
pub fn default_since() -> NaiveDate {
    NaiveDate::from_ymd_opt(2021, 10, 1).expect("valid date")
}

fn utc_date(ts: i64) -> Option<NaiveDate> {
    DateTime::from_timestamp(ts, 0).map(|dt| dt.date_naive())
}

/// Labels every coinbase-created ring member as a decoy, in every
/// transaction with at most `max_inputs` inputs whose UTC calendar date
/// is on or after `since` (no date gate when `None`).
pub fn coinbase_decoys(
    chain: &ChainStore,
    max_inputs: u32,
    since: Option<NaiveDate>,
) -> LabelSet {
    let mut out = Labeler::new(HeuristicId::Coinbase, chain);
    for tx in chain.transactions() {
        if tx.inputs.is_empty() || tx.inputs.len() > max_inputs as usize {
            continue;
        }
        if let Some(gate) = since {
            match utc_date(tx.timestamp) {
                Some(date) if date >= gate => {}
                _ => continue,
            }
        }
        for ring in &tx.inputs {
            for &m in &ring.members {
                let output = chain
                    .output(m)
                    .expect("chain store has no dangling references");
                if output.is_coinbase {
                    out.decoy(&ring.ring_id, m);
                }
            }
        }
    }
    out.finish()
}

/// One threshold's worth of sweep results.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct SweepRow {
    pub threshold: u32,
    pub decoys_marked: u64,
    pub tp: u64,
    pub fp: u64,
}

/// Runs [`coinbase_decoys`] once per threshold and scores each run
/// against a reference label set (e.g. the high-confidence union of
/// zero-mixin, chain-reaction and ten-block results). `decoys_marked`
/// counts all labels; tp/fp count only labels on rings the reference
/// resolves.
pub fn coinbase_threshold_sweep(
    chain: &ChainStore,
    reference: &LabelSet,
    thresholds: &[u32],
    since: Option<NaiveDate>,
) -> Vec<SweepRow> {
    let truth: GroundTruth = labelset_as_truth([reference]).truth;
    thresholds
        .iter()
        .map(|&threshold| {
            let labels = coinbase_decoys(chain, threshold, since);
            let report = precision_report(&labels, &truth);
            SweepRow {
                threshold,
                decoys_marked: labels.len() as u64,
                tp: report.tp,
                fp: report.fp,
            }
        })
        .collect()
}
