//! Label data model.
//!
//! Every analysis pass produces a [`LabelSet`]: a collection of
//! `(ring, member, claim)` assertions tagged with the heuristic that made
//! them. Conflicting assertions are kept and measured by the metrics
//! module, never silently dropped. Within one set, `(ring, member,
//! heuristic)` is unique; the first label for a key wins and later
//! inserts are ignored.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::chain::{ChainStore, GlobalIndex, RingId};

/// What a label asserts about a ring member.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Claim {
    TrueSpend,
    Decoy,
}

impl fmt::Display for Claim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Claim::TrueSpend => "true_spend",
            Claim::Decoy => "decoy",
        })
    }
}

impl FromStr for Claim {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "true_spend" => Ok(Claim::TrueSpend),
            "decoy" => Ok(Claim::Decoy),
            other => Err(format!("unknown claim {other:?} (expected true_spend or decoy)")),
        }
    }
}

/// Stable identity of a labeling pass. The string names are the CLI and
/// report vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HeuristicId {
    ZeroMixin,
    ChainReaction,
    TenBlockDecoyBug,
    DifferByOne,
    Mordinal,
    Coinbase,
    P2PoolMerge,
    Combined,
}

impl HeuristicId {
    pub const ALL: [HeuristicId; 8] = [
        HeuristicId::ZeroMixin,
        HeuristicId::ChainReaction,
        HeuristicId::TenBlockDecoyBug,
        HeuristicId::DifferByOne,
        HeuristicId::Mordinal,
        HeuristicId::Coinbase,
        HeuristicId::P2PoolMerge,
        HeuristicId::Combined,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            HeuristicId::ZeroMixin => "zero-mixin",
            HeuristicId::ChainReaction => "chain-reaction",
            HeuristicId::TenBlockDecoyBug => "ten-block-decoy-bug",
            HeuristicId::DifferByOne => "differ-by-one",
            HeuristicId::Mordinal => "mordinal",
            HeuristicId::Coinbase => "coinbase",
            HeuristicId::P2PoolMerge => "p2pool-merge",
            HeuristicId::Combined => "combined",
        }
    }
}

impl fmt::Display for HeuristicId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl serde::Serialize for HeuristicId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl FromStr for HeuristicId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HeuristicId::ALL
            .iter()
            .find(|h| h.name() == s)
            .copied()
            .ok_or_else(|| {
                let names: Vec<&str> = HeuristicId::ALL.iter().map(|h| h.name()).collect();
                format!("unknown heuristic {s:?}; valid names: {}", names.join(", "))
            })
    }
}

/// One assertion about one ring member. `derived` marks labels produced
/// by consequence propagation rather than a heuristic's direct rule.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Label {
    pub ring: RingId,
    pub member: GlobalIndex,
    pub claim: Claim,
    pub heuristic: HeuristicId,
    pub derived: bool,
}

/// Claims present on one `(ring, member)` pair within a set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClaimsAt {
    pub true_spend: bool,
    pub decoy: bool,
}

impl ClaimsAt {
    /// The pair's effective claim; `None` when unlabeled or when the two
    /// claims contradict each other (contradicted pairs count as
    /// unlabeled in the conservative reports).
    pub fn unconflicted(&self) -> Option<Claim> {
        match (self.true_spend, self.decoy) {
            (true, false) => Some(Claim::TrueSpend),
            (false, true) => Some(Claim::Decoy),
            _ => None,
        }
    }
}

/// A collection of labels with lookup indexes by ring and by member.
#[derive(Debug, Clone)]
pub struct LabelSet {
    heuristic: HeuristicId,
    labels: Vec<Label>,
    by_key: HashMap<(RingId, GlobalIndex, HeuristicId), u32>,
    by_ring: HashMap<RingId, Vec<u32>>,
    by_member: HashMap<GlobalIndex, Vec<u32>>,
}

impl LabelSet {
    pub fn new(heuristic: HeuristicId) -> Self {
        LabelSet {
            heuristic,
            labels: Vec::new(),
            by_key: HashMap::new(),
            by_ring: HashMap::new(),
            by_member: HashMap::new(),
        }
    }

    /// The pass identity of the whole set (individual labels keep the
    /// heuristic that produced them, which differs in merged sets).
    pub fn heuristic(&self) -> HeuristicId {
        self.heuristic
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Label> {
        self.labels.iter()
    }

    /// Inserts unless a label with the same `(ring, member, heuristic)`
    /// key exists. Returns whether the label was added. Callers are
    /// responsible for member/ring consistency; passes go through
    /// [`Labeler`], which enforces it against the chain.
    pub fn insert(&mut self, label: Label) -> bool {
        let key = (label.ring.clone(), label.member, label.heuristic);
        if self.by_key.contains_key(&key) {
            return false;
        }
        let idx = self.labels.len() as u32;
        self.by_ring
            .entry(label.ring.clone())
            .or_default()
            .push(idx);
        self.by_member.entry(label.member).or_default().push(idx);
        self.by_key.insert(key, idx);
        self.labels.push(label);
        true
    }

    pub fn get(
        &self,
        ring: &RingId,
        member: GlobalIndex,
        heuristic: HeuristicId,
    ) -> Option<&Label> {
        self.by_key
            .get(&(ring.clone(), member, heuristic))
            .map(|&i| &self.labels[i as usize])
    }

    pub fn labels_for_ring(&self, ring: &RingId) -> impl Iterator<Item = &Label> {
        self.by_ring
            .get(ring)
            .into_iter()
            .flatten()
            .map(move |&i| &self.labels[i as usize])
    }

    pub fn labels_for_member(&self, member: GlobalIndex) -> impl Iterator<Item = &Label> {
        self.by_member
            .get(&member)
            .into_iter()
            .flatten()
            .map(move |&i| &self.labels[i as usize])
    }

    /// Claims present on a `(ring, member)` pair, across all heuristics
    /// in the set.
    pub fn claims_at(&self, ring: &RingId, member: GlobalIndex) -> ClaimsAt {
        let mut at = ClaimsAt::default();
        for label in self.labels_for_ring(ring) {
            if label.member == member {
                match label.claim {
                    Claim::TrueSpend => at.true_spend = true,
                    Claim::Decoy => at.decoy = true,
                }
            }
        }
        at
    }

    /// Number of distinct `(ring, member)` pairs carrying at least one
    /// label.
    pub fn labeled_pair_count(&self) -> u64 {
        let mut n = 0u64;
        for (ring, idxs) in &self.by_ring {
            let _ = ring;
            let mut members: Vec<GlobalIndex> =
                idxs.iter().map(|&i| self.labels[i as usize].member).collect();
            members.sort_unstable();
            members.dedup();
            n += members.len() as u64;
        }
        n
    }

    /// Rings in which `member` carries a TrueSpend claim.
    pub fn true_spend_rings(&self, member: GlobalIndex) -> Vec<&RingId> {
        let mut rings: Vec<&RingId> = self
            .labels_for_member(member)
            .filter(|l| l.claim == Claim::TrueSpend)
            .map(|l| &l.ring)
            .collect();
        rings.sort();
        rings.dedup();
        rings
    }

    /// Union of several sets under a new set identity. First label per
    /// `(ring, member, heuristic)` key wins, so the union is idempotent.
    pub fn merged<'a>(sets: impl IntoIterator<Item = &'a LabelSet>, id: HeuristicId) -> LabelSet {
        let mut out = LabelSet::new(id);
        for set in sets {
            for label in &set.labels {
                out.insert(label.clone());
            }
        }
        out
    }

    /// Splits a merged set into one set per heuristic present, in
    /// heuristic order.
    pub fn split_by_heuristic(&self) -> Vec<LabelSet> {
        let mut ids: Vec<HeuristicId> = self.labels.iter().map(|l| l.heuristic).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.into_iter()
            .map(|id| {
                let mut set = LabelSet::new(id);
                for label in self.labels.iter().filter(|l| l.heuristic == id) {
                    set.insert(label.clone());
                }
                set
            })
            .collect()
    }

    /// Labels in canonical order (ring, member, heuristic, claim) for
    /// serialization and comparisons.
    pub fn sorted_labels(&self) -> Vec<&Label> {
        let mut v: Vec<&Label> = self.labels.iter().collect();
        v.sort();
        v
    }

    /// Set equality up to label order.
    pub fn same_labels(&self, other: &LabelSet) -> bool {
        self.sorted_labels() == other.sorted_labels()
    }

    /// Checks the membership invariant against a chain: every label
    /// names an existing ring and a member of that ring.
    pub fn validate(&self, chain: &ChainStore) -> Result<(), String> {
        for label in &self.labels {
            let ring = chain
                .ring(&label.ring)
                .ok_or_else(|| format!("label references unknown ring {}", label.ring))?;
            if !ring.contains(label.member) {
                return Err(format!(
                    "label claims {} for output {} outside ring {}",
                    label.claim, label.member, label.ring
                ));
            }
        }
        Ok(())
    }
}

/// Insertion front-end used by every pass: checks at insertion time that
/// the labeled member belongs to the named ring.
pub struct Labeler<'c> {
    set: LabelSet,
    chain: &'c ChainStore,
}

impl<'c> Labeler<'c> {
    pub fn new(heuristic: HeuristicId, chain: &'c ChainStore) -> Self {
        Labeler {
            set: LabelSet::new(heuristic),
            chain,
        }
    }

    fn check(&self, ring: &RingId, member: GlobalIndex) {
        let r = self
            .chain
            .ring(ring)
            .unwrap_or_else(|| panic!("pass labeled unknown ring {ring}"));
        assert!(
            r.contains(member),
            "pass labeled output {member} outside ring {ring}"
        );
    }

    pub fn true_spend(&mut self, ring: &RingId, member: GlobalIndex) -> bool {
        self.claim(ring, member, Claim::TrueSpend, false)
    }

    pub fn decoy(&mut self, ring: &RingId, member: GlobalIndex) -> bool {
        self.claim(ring, member, Claim::Decoy, false)
    }

    pub fn claim(&mut self, ring: &RingId, member: GlobalIndex, claim: Claim, derived: bool) -> bool {
        self.check(ring, member);
        let heuristic = self.set.heuristic();
        self.set.insert(Label {
            ring: ring.clone(),
            member,
            claim,
            heuristic,
            derived,
        })
    }

    pub fn set(&self) -> &LabelSet {
        &self.set
    }

    pub fn finish(self) -> LabelSet {
        self.set
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{BurnKeys, TransactionRecord};

    fn two_ring_chain() -> ChainStore {
        let burn = BurnKeys::default();
        let txs = vec![
            TransactionRecord::new(
                "cb",
                0,
                100,
                true,
                vec![],
                vec![],
                vec![(0, "p0".into()), (1, "p1".into()), (2, "p2".into())],
                &burn,
            ),
            TransactionRecord::new(
                "s1",
                5,
                200,
                false,
                vec![],
                vec![vec![0, 1], vec![1, 2]],
                vec![(3, "p3".into())],
                &burn,
            ),
        ];
        ChainStore::build(txs).unwrap()
    }

    #[test]
    fn insert_is_first_wins_per_key() {
        let chain = two_ring_chain();
        let ring = RingId::new("s1", 0);
        let mut l = Labeler::new(HeuristicId::ZeroMixin, &chain);
        assert!(l.true_spend(&ring, 0));
        assert!(!l.claim(&ring, 0, Claim::Decoy, true));
        let set = l.finish();
        assert_eq!(set.len(), 1);
        assert_eq!(
            set.get(&ring, 0, HeuristicId::ZeroMixin).unwrap().claim,
            Claim::TrueSpend
        );
    }

    #[test]
    #[should_panic(expected = "outside ring")]
    fn labeler_rejects_non_member() {
        let chain = two_ring_chain();
        let mut l = Labeler::new(HeuristicId::ZeroMixin, &chain);
        l.true_spend(&RingId::new("s1", 0), 2);
    }

    #[test]
    fn claims_at_sees_conflicts() {
        let ring = RingId::new("s1", 0);
        let mut set = LabelSet::new(HeuristicId::Combined);
        set.insert(Label {
            ring: ring.clone(),
            member: 0,
            claim: Claim::TrueSpend,
            heuristic: HeuristicId::ZeroMixin,
            derived: false,
        });
        set.insert(Label {
            ring: ring.clone(),
            member: 0,
            claim: Claim::Decoy,
            heuristic: HeuristicId::Coinbase,
            derived: false,
        });
        let at = set.claims_at(&ring, 0);
        assert!(at.true_spend && at.decoy);
        assert_eq!(at.unconflicted(), None);
        assert_eq!(set.labeled_pair_count(), 1);
    }

    #[test]
    fn merged_unions_and_dedupes() {
        let chain = two_ring_chain();
        let ring = RingId::new("s1", 0);
        let mut a = Labeler::new(HeuristicId::ZeroMixin, &chain);
        a.true_spend(&ring, 0);
        let a = a.finish();
        let b = a.clone();
        let merged = LabelSet::merged([&a, &b], HeuristicId::Combined);
        assert_eq!(merged.len(), 1);
        assert_eq!(merged.heuristic(), HeuristicId::Combined);
    }

    #[test]
    fn heuristic_names_round_trip() {
        for h in HeuristicId::ALL {
            assert_eq!(h.name().parse::<HeuristicId>().unwrap(), h);
        }
        assert!("nope".parse::<HeuristicId>().is_err());
    }
}
