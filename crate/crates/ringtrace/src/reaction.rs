//! Chain-reaction fixpoint engine.
//!
//! A member is eliminated from a ring when it carries a decoy label
//! there or a true-spend label in any other ring; when a ring's
//! non-eliminated members shrink to exactly one, that member is promoted
//! to a true spend and its consequences propagate. Labels only grow, so
//! the process terminates, and promotions are applied in rounds — every
//! ring promotable at the start of a round is claimed before any of the
//! round's consequences land — which makes the fixpoint independent of
//! worklist order.
//!
//! Rings whose members are all eliminated are contradictions: real seed
//! sets contain false positives, so these are flagged and skipped rather
//! than fatal. Rings that never lost a member are not promoted; a
//! size-one ring is zero-mixin material, not reaction material.

use std::collections::{BTreeSet, HashMap, HashSet};

use crate::chain::{ChainStore, GlobalIndex, RingId};
use crate::labels::{Claim, HeuristicId, Label, LabelSet};

/// Fixpoint output: the seed plus derived labels, and the rings whose
/// members were all eliminated.
#[derive(Debug, Clone)]
pub struct ReactionResult {
    pub labels: LabelSet,
    pub contradicted: Vec<RingId>,
}

/// Combined run over several heuristics' outputs, with counts of
/// `(ring, member)` claims present in the fixpoint but absent from every
/// input set.
#[derive(Debug, Clone)]
pub struct CombinedReaction {
    pub labels: LabelSet,
    pub contradicted: Vec<RingId>,
    pub new_true_spends: u64,
    pub new_decoys: u64,
}

struct Engine<'c> {
    chain: &'c ChainStore,
    rings: Vec<&'c crate::chain::InputRing>,
    ring_index: HashMap<RingId, u32>,
    offsets: Vec<u32>,
    eliminated: Vec<bool>,
    live: Vec<u32>,
    has_true_spend: Vec<bool>,
    dirty: BTreeSet<u32>,
    contradicted: Vec<u32>,
    out: LabelSet,
}

impl<'c> Engine<'c> {
    fn new(chain: &'c ChainStore, out: LabelSet) -> Self {
        let rings: Vec<_> = chain.rings().map(|(r, _)| r).collect();
        let mut ring_index = HashMap::with_capacity(rings.len());
        let mut offsets = Vec::with_capacity(rings.len() + 1);
        let mut total = 0u32;
        for (i, r) in rings.iter().enumerate() {
            ring_index.insert(r.ring_id.clone(), i as u32);
            offsets.push(total);
            total += r.members.len() as u32;
        }
        offsets.push(total);
        let live = rings.iter().map(|r| r.members.len() as u32).collect();
        Engine {
            chain,
            ring_index,
            eliminated: vec![false; total as usize],
            live,
            has_true_spend: vec![false; rings.len()],
            dirty: BTreeSet::new(),
            contradicted: Vec::new(),
            rings,
            offsets,
            out,
        }
    }

    fn member_slot(&self, ring: u32, member: GlobalIndex) -> Option<usize> {
        let r = self.rings[ring as usize];
        r.members
            .iter()
            .position(|&m| m == member)
            .map(|p| self.offsets[ring as usize] as usize + p)
    }

    /// Eliminates `member` from `ring`, materializing a derived decoy
    /// label unless the pair is already eliminated (then the label that
    /// caused the first elimination already justifies it).
    fn eliminate(&mut self, ring: u32, member: GlobalIndex, source: HeuristicId) {
        let slot = match self.member_slot(ring, member) {
            Some(s) => s,
            None => return,
        };
        if self.eliminated[slot] {
            return;
        }
        self.eliminated[slot] = true;
        self.out.insert(Label {
            ring: self.rings[ring as usize].ring_id.clone(),
            member,
            claim: Claim::Decoy,
            heuristic: source,
            derived: true,
        });
        self.live[ring as usize] -= 1;
        if self.live[ring as usize] == 0 {
            self.contradicted.push(ring);
        } else {
            self.dirty.insert(ring);
        }
    }

    /// Marks an already-labeled elimination without emitting a new label
    /// (used for the seed's own decoy labels).
    fn eliminate_labeled(&mut self, ring: u32, member: GlobalIndex) {
        let slot = match self.member_slot(ring, member) {
            Some(s) => s,
            None => return,
        };
        if self.eliminated[slot] {
            return;
        }
        self.eliminated[slot] = true;
        self.live[ring as usize] -= 1;
        if self.live[ring as usize] == 0 {
            self.contradicted.push(ring);
        } else {
            self.dirty.insert(ring);
        }
    }

    /// Consequences of a true-spend claim on (ring, member): the member
    /// is a decoy everywhere else, and the ring's other members are
    /// decoys in it.
    fn register_spend(&mut self, ring: u32, member: GlobalIndex, source: HeuristicId) {
        self.has_true_spend[ring as usize] = true;
        let ring_id = self.rings[ring as usize].ring_id.clone();
        for other in self.chain.referencing_rings(member) {
            if *other != ring_id {
                if let Some(&oi) = self.ring_index.get(other) {
                    self.eliminate(oi, member, source);
                }
            }
        }
        let mates = self.rings[ring as usize].members.clone();
        for m in mates {
            if m != member {
                self.eliminate(ring, m, source);
            }
        }
    }

    fn run(mut self) -> ReactionResult {
        // Seed pass: apply every existing label's effect.
        let seed_labels: Vec<Label> = self.out.iter().cloned().collect();
        for label in &seed_labels {
            if label.claim == Claim::Decoy {
                if let Some(&ri) = self.ring_index.get(&label.ring) {
                    self.eliminate_labeled(ri, label.member);
                }
            }
        }
        for label in &seed_labels {
            if label.claim == Claim::TrueSpend {
                if let Some(&ri) = self.ring_index.get(&label.ring) {
                    self.register_spend(ri, label.member, label.heuristic);
                }
            }
        }

        // Promotion rounds.
        loop {
            let candidates: Vec<u32> = std::mem::take(&mut self.dirty)
                .into_iter()
                .filter(|&r| {
                    self.live[r as usize] == 1
                        && !self.has_true_spend[r as usize]
                        && self.rings[r as usize].members.len() >= 2
                })
                .collect();
            if candidates.is_empty() {
                break;
            }
            let mut promoted: Vec<(u32, GlobalIndex)> = Vec::new();
            for &r in &candidates {
                let base = self.offsets[r as usize] as usize;
                let survivor = self.rings[r as usize]
                    .members
                    .iter()
                    .enumerate()
                    .find(|&(p, _)| !self.eliminated[base + p])
                    .map(|(_, &m)| m)
                    .expect("live count says one member remains");
                self.out.insert(Label {
                    ring: self.rings[r as usize].ring_id.clone(),
                    member: survivor,
                    claim: Claim::TrueSpend,
                    heuristic: HeuristicId::ChainReaction,
                    derived: false,
                });
                self.has_true_spend[r as usize] = true;
                promoted.push((r, survivor));
            }
            for (r, m) in promoted {
                self.register_spend(r, m, HeuristicId::ChainReaction);
            }
        }

        let mut contradicted: Vec<RingId> = self
            .contradicted
            .iter()
            .map(|&r| self.rings[r as usize].ring_id.clone())
            .collect();
        contradicted.sort();
        contradicted.dedup();
        ReactionResult {
            labels: self.out,
            contradicted,
        }
    }
}

/// Runs the fixpoint from a seed label set. The output contains the seed
/// plus derived labels; its set identity is `ChainReaction`.
pub fn chain_reaction(chain: &ChainStore, seed: &LabelSet) -> ReactionResult {
    let out = LabelSet::merged([seed], HeuristicId::ChainReaction);
    Engine::new(chain, out).run()
}

/// Unions the direct (pre-propagation) outputs of several heuristics,
/// runs the fixpoint, and counts the true-spend and decoy claims that no
/// input set contained.
pub fn combined_chain_reaction<'a>(
    chain: &ChainStore,
    inputs: impl IntoIterator<Item = &'a LabelSet> + Clone,
) -> CombinedReaction {
    let seed = LabelSet::merged(inputs.clone(), HeuristicId::Combined);
    let result = Engine::new(chain, seed).run();

    let mut input_ts: HashSet<(RingId, GlobalIndex)> = HashSet::new();
    let mut input_decoy: HashSet<(RingId, GlobalIndex)> = HashSet::new();
    for set in inputs {
        for label in set.iter() {
            let pair = (label.ring.clone(), label.member);
            match label.claim {
                Claim::TrueSpend => input_ts.insert(pair),
                Claim::Decoy => input_decoy.insert(pair),
            };
        }
    }
    let mut new_ts: HashSet<(RingId, GlobalIndex)> = HashSet::new();
    let mut new_decoy: HashSet<(RingId, GlobalIndex)> = HashSet::new();
    for label in result.labels.iter() {
        let pair = (label.ring.clone(), label.member);
        match label.claim {
            Claim::TrueSpend => {
                if !input_ts.contains(&pair) {
                    new_ts.insert(pair);
                }
            }
            Claim::Decoy => {
                if !input_decoy.contains(&pair) {
                    new_decoy.insert(pair);
                }
            }
        }
    }
    let labels = LabelSet::merged([&result.labels], HeuristicId::Combined);
    CombinedReaction {
        labels,
        contradicted: result.contradicted,
        new_true_spends: new_ts.len() as u64,
        new_decoys: new_decoy.len() as u64,
    }
}

/// The `(ring, member)` pairs eliminated under a label set: pairs with a
/// decoy claim, pairs spent in another ring, and ring-mates of a claimed
/// spend. Recomputable from any label set; used to cross-check the
/// engine against independent oracles.
pub fn eliminated_pairs(labels: &LabelSet, chain: &ChainStore) -> BTreeSet<(RingId, GlobalIndex)> {
    let mut elim = BTreeSet::new();
    for label in labels.iter() {
        match label.claim {
            Claim::Decoy => {
                elim.insert((label.ring.clone(), label.member));
            }
            Claim::TrueSpend => {
                for other in chain.referencing_rings(label.member) {
                    if *other != label.ring {
                        elim.insert((other.clone(), label.member));
                    }
                }
                if let Some(ring) = chain.ring(&label.ring) {
                    for &m in &ring.members {
                        if m != label.member {
                            elim.insert((label.ring.clone(), m));
                        }
                    }
                }
            }
        }
    }
    elim
}
