//! The ten-block decoy selection bug.
//!
//! A long-lived off-by-one in a widely used wallet library made it
//! unable to pick decoys that were exactly ten blocks old — the earliest
//! spendable age. Inside the affected time window, a ring with exactly
//! one ten-block-old member therefore very likely spends that member.

use chrono::{TimeZone, Utc};

use crate::chain::{ChainStore, Timestamp};
use crate::labels::{HeuristicId, LabelSet, Labeler};

/// The output unlock span exploited by the bug, in blocks.
pub const TEN_BLOCK_AGE: u64 = 10;

/// Inclusive timestamp window in which a heuristic applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeWindow {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl TimeWindow {
    pub fn new(start: Timestamp, end: Timestamp) -> Self {
        TimeWindow { start, end }
    }

    /// The widest window the bug is believed to span: from the release
    /// that may have introduced it (2018-10-11) through the day of the
    /// fix (2023-04-10), end-of-day inclusive.
    pub fn default_bug_window() -> Self {
        TimeWindow {
            start: Utc
                .with_ymd_and_hms(2018, 10, 11, 0, 0, 0)
                .unwrap()
                .timestamp(),
            end: Utc
                .with_ymd_and_hms(2023, 4, 10, 23, 59, 59)
                .unwrap()
                .timestamp(),
        }
    }

    pub fn contains(&self, ts: Timestamp) -> bool {
        self.start <= ts && ts <= self.end
    }
}

impl Default for TimeWindow {
    fn default() -> Self {
        TimeWindow::default_bug_window()
    }
}

/// For every ring whose transaction falls inside `window` and which has
/// exactly one member aged [`TEN_BLOCK_AGE`] blocks, labels that member
/// as the true spend and all other members of the ring as decoys.
pub fn ten_block_decoy_bug(chain: &ChainStore, window: &TimeWindow) -> LabelSet {
    let mut out = Labeler::new(HeuristicId::TenBlockDecoyBug, chain);
    for (ring, tx) in chain.rings() {
        if !window.contains(tx.timestamp) {
            continue;
        }
        let mut ten_old = None;
        let mut unique = true;
        for &m in &ring.members {
            let created = chain
                .output(m)
                .expect("chain store has no dangling references")
                .creation_height;
            if tx.block_height - created == TEN_BLOCK_AGE {
                if ten_old.is_some() {
                    unique = false;
                    break;
                }
                ten_old = Some(m);
            }
        }
        if let (Some(spend), true) = (ten_old, unique) {
            out.true_spend(&ring.ring_id, spend);
            for &m in &ring.members {
                if m != spend {
                    out.decoy(&ring.ring_id, m);
                }
            }
        }
    }
    out.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{BurnKeys, RingId, TransactionRecord};
    use crate::labels::Claim;

    const IN_WINDOW: Timestamp = 1_600_000_000; // 2020-09-13
    const OUT_WINDOW: Timestamp = 1_500_000_000; // 2017-07-14

    /// Outputs 0..4 created at heights chosen so that a spend at height
    /// 300 sees ages 4, 10, 212, 10, 50 for members 0..=4.
    fn chain(spend_ts: Timestamp, members: Vec<u64>) -> ChainStore {
        let burn = BurnKeys::default();
        let heights = [296u64, 290, 88, 290, 250];
        let mut txs: Vec<TransactionRecord> = heights
            .iter()
            .enumerate()
            .map(|(g, &h)| {
                TransactionRecord::new(
                    format!("cb{g}"),
                    h,
                    100 + h as i64,
                    true,
                    vec![],
                    vec![],
                    vec![(g as u64, format!("pk{g}"))],
                    &burn,
                )
            })
            .collect();
        txs.sort_by_key(|t| t.block_height);
        txs.push(TransactionRecord::new(
            "spend",
            300,
            spend_ts,
            false,
            vec![],
            vec![members],
            vec![],
            &burn,
        ));
        ChainStore::build(txs).unwrap()
    }

    #[test]
    fn unique_ten_old_member_is_true_spend() {
        let set = ten_block_decoy_bug(
            &chain(IN_WINDOW, vec![0, 1, 2]),
            &TimeWindow::default_bug_window(),
        );
        let ring = RingId::new("spend", 0);
        assert_eq!(
            set.get(&ring, 1, HeuristicId::TenBlockDecoyBug).unwrap().claim,
            Claim::TrueSpend
        );
        assert_eq!(
            set.get(&ring, 0, HeuristicId::TenBlockDecoyBug).unwrap().claim,
            Claim::Decoy
        );
        assert_eq!(
            set.get(&ring, 2, HeuristicId::TenBlockDecoyBug).unwrap().claim,
            Claim::Decoy
        );
        assert_eq!(set.len(), 3);
    }

    #[test]
    fn two_ten_old_members_yield_nothing() {
        let set = ten_block_decoy_bug(
            &chain(IN_WINDOW, vec![0, 1, 3]),
            &TimeWindow::default_bug_window(),
        );
        assert!(set.is_empty());
    }

    #[test]
    fn window_gate_excludes_transaction() {
        let set = ten_block_decoy_bug(
            &chain(OUT_WINDOW, vec![0, 1, 2]),
            &TimeWindow::default_bug_window(),
        );
        assert!(set.is_empty());
    }
}
