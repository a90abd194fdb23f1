//! Shared test support: an independent naive fixpoint oracle and a
//! random small-ring chain builder for cascade tests. Nothing here
//! touches the engine's internals; the oracle recomputes everything from
//! claims alone.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::rngs::StdRng;
use rand::Rng;

use ringtrace::chain::{BurnKeys, ChainStore, GlobalIndex, RingId, TransactionRecord};
use ringtrace::ingest::GroundTruth;
use ringtrace::labels::{Claim, LabelSet};

pub type Pair = (RingId, GlobalIndex);

#[derive(Debug, PartialEq, Eq)]
pub struct NaiveFixpoint {
    pub true_spends: BTreeSet<Pair>,
    pub eliminated: BTreeSet<Pair>,
    pub contradicted: BTreeSet<RingId>,
}

/// Repeat-until-stable closure over the claim rules, recomputed from
/// scratch each iteration. Promotions are batched per iteration from the
/// frozen state, so the result is schedule-free by construction.
pub fn naive_fixpoint(chain: &ChainStore, seed: &LabelSet) -> NaiveFixpoint {
    let mut ts: BTreeSet<Pair> = BTreeSet::new();
    let mut elim: BTreeSet<Pair> = BTreeSet::new();
    for label in seed.iter() {
        match label.claim {
            Claim::TrueSpend => {
                ts.insert((label.ring.clone(), label.member));
            }
            Claim::Decoy => {
                elim.insert((label.ring.clone(), label.member));
            }
        }
    }

    loop {
        let mut changed = false;

        // One application of the consequence rules. They do not chain
        // among themselves, so a single pass per iteration suffices.
        let mut next = elim.clone();
        for (ring_id, member) in &ts {
            for other in chain.referencing_rings(*member) {
                if other != ring_id {
                    next.insert((other.clone(), *member));
                }
            }
            if let Some(ring) = chain.ring(ring_id) {
                for &m in &ring.members {
                    if m != *member {
                        next.insert((ring_id.clone(), m));
                    }
                }
            }
        }
        if next != elim {
            changed = true;
            elim = next;
        }

        // Batched promotions from the frozen elimination state.
        let claimed: BTreeSet<&RingId> = ts.iter().map(|(r, _)| r).collect();
        let mut promoted: Vec<Pair> = Vec::new();
        for (ring, _tx) in chain.rings() {
            if ring.members.len() < 2 || claimed.contains(&ring.ring_id) {
                continue;
            }
            let live: Vec<GlobalIndex> = ring
                .members
                .iter()
                .copied()
                .filter(|&m| !elim.contains(&(ring.ring_id.clone(), m)))
                .collect();
            if live.len() == 1 {
                promoted.push((ring.ring_id.clone(), live[0]));
            }
        }
        for pair in promoted {
            if ts.insert(pair) {
                changed = true;
            }
        }

        if !changed {
            break;
        }
    }

    let contradicted: BTreeSet<RingId> = chain
        .rings()
        .filter(|(ring, _)| {
            ring.members
                .iter()
                .all(|&m| elim.contains(&(ring.ring_id.clone(), m)))
        })
        .map(|(ring, _)| ring.ring_id.clone())
        .collect();

    NaiveFixpoint {
        true_spends: ts,
        eliminated: elim,
        contradicted,
    }
}

pub fn true_spend_pairs(labels: &LabelSet) -> BTreeSet<Pair> {
    labels
        .iter()
        .filter(|l| l.claim == Claim::TrueSpend)
        .map(|l| (l.ring.clone(), l.member))
        .collect()
}

pub fn decoy_pairs(labels: &LabelSet) -> BTreeSet<Pair> {
    labels
        .iter()
        .filter(|l| l.claim == Claim::Decoy)
        .map(|l| (l.ring.clone(), l.member))
        .collect()
}

/// A random chain of small rings with planted spends, independent of the
/// library's generator. Every transaction spends one fresh output
/// through a ring of 1..=4 members; decoys may themselves be spent
/// outputs, which is exactly what makes cascades fire.
pub fn random_cascade_chain(rng: &mut StdRng, ring_count: usize) -> (ChainStore, GroundTruth) {
    let burn = BurnKeys::default();
    let base_outputs = (ring_count / 2).max(4) as u64;
    let mut txs = vec![TransactionRecord::new(
        "genesis",
        0,
        1_000,
        true,
        vec![],
        vec![],
        (0..base_outputs).map(|g| (g, format!("pk{g}"))).collect(),
        &burn,
    )];
    let mut truth = GroundTruth::new();
    let mut unspent: Vec<GlobalIndex> = (0..base_outputs).collect();

    for i in 0..ring_count {
        let height = i as u64 + 1;
        if unspent.is_empty() {
            break;
        }
        let existing = base_outputs + i as u64;
        let spend_idx = rng.gen_range(0..unspent.len());
        let spend = unspent.remove(spend_idx);
        let ring_size = rng.gen_range(1..=4usize);
        let mut members: BTreeSet<GlobalIndex> = BTreeSet::new();
        members.insert(spend);
        while members.len() < ring_size {
            // Any existing output will do, spent or not.
            members.insert(rng.gen_range(0..existing));
        }
        let tx_id = format!("spend{i:05}");
        let out_g = existing;
        unspent.push(out_g);
        truth.insert(RingId::new(tx_id.as_str(), 0), spend);
        txs.push(TransactionRecord::new(
            tx_id,
            height,
            1_000 + height as i64,
            false,
            vec![],
            vec![members.into_iter().collect()],
            vec![(out_g, format!("pk{out_g}"))],
            &burn,
        ));
    }
    (ChainStore::build(txs).expect("random chain is structurally valid"), truth)
}
