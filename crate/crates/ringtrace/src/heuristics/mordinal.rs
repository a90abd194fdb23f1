//! Decoys from NFT-style mint/transfer transactions.
//!
//! Transactions tagged "10" (mint) or "11" (transfer) in the extra field
//! form the set MT. The first output of an MT transaction carries the
//! NFT and is expected to be spent only inside MT; referenced from any
//! other transaction it is almost certainly a decoy. Burn-key outputs
//! are unspendable and are decoys wherever a non-MT ring references
//! them. Rings inside MT transactions are never labeled.

use std::collections::HashSet;
use std::sync::Arc;

use crate::chain::{ChainStore, GlobalIndex};
use crate::labels::{HeuristicId, LabelSet, Labeler};

pub const MORDINAL_MINT_TAG: &str = "10";
pub const MORDINAL_TRANSFER_TAG: &str = "11";

/// The set MT: ids of transactions whose extra tags mark a mint or a
/// transfer.
pub fn mordinal_transactions(chain: &ChainStore) -> HashSet<Arc<str>> {
    chain
        .transactions()
        .iter()
        .filter(|tx| {
            tx.extra_tags
                .iter()
                .any(|t| t == MORDINAL_MINT_TAG || t == MORDINAL_TRANSFER_TAG)
        })
        .map(|tx| Arc::clone(&tx.tx_id))
        .collect()
}

/// Labels as decoys, in every ring of every transaction outside MT:
/// members that are the first output of an MT transaction, and members
/// whose key is burned.
pub fn mordinal_decoys(chain: &ChainStore) -> LabelSet {
    let mt = mordinal_transactions(chain);
    let first_outputs: HashSet<GlobalIndex> = chain
        .transactions()
        .iter()
        .filter(|tx| mt.contains(&tx.tx_id))
        .filter_map(|tx| tx.outputs.first())
        .map(|o| o.global_index)
        .collect();

    let mut out = Labeler::new(HeuristicId::Mordinal, chain);
    for (ring, tx) in chain.rings() {
        if mt.contains(&tx.tx_id) {
            continue;
        }
        for &m in &ring.members {
            let output = chain
                .output(m)
                .expect("chain store has no dangling references");
            if first_outputs.contains(&m) || output.burned_key {
                out.decoy(&ring.ring_id, m);
            }
        }
    }
    out.finish()
}
