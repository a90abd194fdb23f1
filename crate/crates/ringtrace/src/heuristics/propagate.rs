//! Consequence propagation.
//!
//! A true-spend claim has two consequences: the output is a decoy in
//! every other ring that references it, and every other member of the
//! resolved ring is a decoy there. Derived labels inherit the heuristic
//! of the claim they follow from and are flagged `derived`. Existing
//! labels are never overwritten, so the operation is idempotent and
//! conflicting inputs survive for the metrics to count.

use crate::chain::ChainStore;
use crate::labels::{Claim, Label, LabelSet};

pub fn propagate_consequences(labels: &LabelSet, chain: &ChainStore) -> LabelSet {
    let mut out = labels.clone();
    let spends: Vec<Label> = labels
        .iter()
        .filter(|l| l.claim == Claim::TrueSpend)
        .cloned()
        .collect();
    for spend in spends {
        for other_ring in chain.referencing_rings(spend.member) {
            if *other_ring != spend.ring {
                out.insert(Label {
                    ring: other_ring.clone(),
                    member: spend.member,
                    claim: Claim::Decoy,
                    heuristic: spend.heuristic,
                    derived: true,
                });
            }
        }
        if let Some(ring) = chain.ring(&spend.ring) {
            for &m in &ring.members {
                if m != spend.member {
                    out.insert(Label {
                        ring: spend.ring.clone(),
                        member: m,
                        claim: Claim::Decoy,
                        heuristic: spend.heuristic,
                        derived: true,
                    });
                }
            }
        }
    }
    out
}
