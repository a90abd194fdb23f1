//! Output merging over published pool payouts.
//!
//! Decentralized pools publish which coinbase outputs belong to which
//! miner. A transaction in which *every* input ring references at least
//! one output of the same miner looks like that miner consolidating
//! payouts, so the miner's outputs in those rings are labeled true
//! spends. When several such transactions reference the same owned
//! output, only the one referencing the most owned outputs is kept
//! (ties: earliest block, then lexicographic tx id).

use std::collections::{BTreeMap, BTreeSet, HashSet};

use thiserror::Error;

use crate::chain::{ChainStore, GlobalIndex};
use crate::ingest::PayoutRecord;
use crate::labels::{Claim, HeuristicId, LabelSet, Labeler};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HeuristicError {
    #[error("payout references output {index} which does not exist in the chain")]
    UnknownOutputIndex { index: GlobalIndex },
}

pub fn p2pool_output_merging(
    chain: &ChainStore,
    payouts: &[PayoutRecord],
) -> Result<LabelSet, HeuristicError> {
    // miner -> owned output set; deterministic iteration order.
    let mut owned: BTreeMap<&str, HashSet<GlobalIndex>> = BTreeMap::new();
    for payout in payouts {
        if chain.output(payout.output_global_index).is_none() {
            return Err(HeuristicError::UnknownOutputIndex {
                index: payout.output_global_index,
            });
        }
        owned
            .entry(payout.miner_id.as_str())
            .or_default()
            .insert(payout.output_global_index);
    }

    // The same (ring, member) can be an owned true spend for one miner
    // and an unowned ring-mate for another; true-spend claims win, so
    // they are all collected before any decoy is inserted.
    let mut out = Labeler::new(HeuristicId::P2PoolMerge, chain);
    let mut decoy_rings: Vec<(crate::chain::RingId, Vec<GlobalIndex>, HashSet<GlobalIndex>)> =
        Vec::new();

    for outputs in owned.values() {
        // Candidate transactions: reachable from any owned output and
        // with every ring intersecting the owned set.
        let mut candidate_txs: BTreeSet<&str> = BTreeSet::new();
        let mut sorted_outputs: Vec<GlobalIndex> = outputs.iter().copied().collect();
        sorted_outputs.sort_unstable();
        for &o in &sorted_outputs {
            for ring_id in chain.referencing_rings(o) {
                candidate_txs.insert(&ring_id.tx_id);
            }
        }
        struct Candidate<'a> {
            tx_id: &'a str,
            height: u64,
            owned_refs: Vec<GlobalIndex>,
        }
        let mut candidates: Vec<Candidate> = Vec::new();
        'tx: for tx_id in candidate_txs {
            let tx = chain.tx(tx_id).expect("candidate ids come from the chain");
            if tx.inputs.is_empty() {
                continue;
            }
            let mut refs: BTreeSet<GlobalIndex> = BTreeSet::new();
            for ring in &tx.inputs {
                let mut hit = false;
                for &m in &ring.members {
                    if outputs.contains(&m) {
                        refs.insert(m);
                        hit = true;
                    }
                }
                if !hit {
                    continue 'tx;
                }
            }
            candidates.push(Candidate {
                tx_id,
                height: tx.block_height,
                owned_refs: refs.into_iter().collect(),
            });
        }

        // Per owned output, keep the best candidate referencing it.
        let mut kept: BTreeSet<&str> = BTreeSet::new();
        for &o in &sorted_outputs {
            let winner = candidates
                .iter()
                .filter(|c| c.owned_refs.binary_search(&o).is_ok())
                .max_by(|a, b| {
                    a.owned_refs
                        .len()
                        .cmp(&b.owned_refs.len())
                        .then(b.height.cmp(&a.height)) // prefer earlier blocks
                        .then(b.tx_id.cmp(a.tx_id)) // then lexicographically first id
                });
            if let Some(w) = winner {
                kept.insert(w.tx_id);
            }
        }

        for tx_id in kept {
            let tx = chain.tx(tx_id).expect("kept ids come from the chain");
            for ring in &tx.inputs {
                let mut ring_owned: HashSet<GlobalIndex> = HashSet::new();
                for &m in &ring.members {
                    if outputs.contains(&m) {
                        out.true_spend(&ring.ring_id, m);
                        ring_owned.insert(m);
                    }
                }
                decoy_rings.push((ring.ring_id.clone(), ring.members.clone(), ring_owned));
            }
        }
    }

    let mut out = out.finish();
    for (ring_id, members, ring_owned) in decoy_rings {
        for m in members {
            if ring_owned.contains(&m) {
                continue;
            }
            // Skipped automatically when another miner claimed it.
            out.insert(crate::labels::Label {
                ring: ring_id.clone(),
                member: m,
                claim: Claim::Decoy,
                heuristic: HeuristicId::P2PoolMerge,
                derived: false,
            });
        }
    }
    Ok(out)
}
