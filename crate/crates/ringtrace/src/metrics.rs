//! Evaluation arithmetic.
//!
//! Precision against ground truth, self-collision rates, pairwise
//! collision/agreement rates between heuristics, and the time-bucketed
//! series behind the effective-ring-size and decoy-share reports.
//!
//! Conflicting claims on the same `(ring, member)` pair are counted by
//! the collision metrics and treated as unlabeled by the ring-size and
//! share reports; no metric ever resolves a conflict silently.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use chrono::DateTime;
use serde::Serialize;

use crate::chain::{ChainStore, GlobalIndex, RingId, Timestamp};
use crate::ingest::{GroundTruth, PayoutRecord};
use crate::labels::{Claim, HeuristicId, LabelSet};

/// P = TP / (TP + FP); undefined when nothing was labeled.
pub fn precision(tp: u64, fp: u64) -> Option<f64> {
    if tp + fp == 0 {
        None
    } else {
        Some(tp as f64 / (tp + fp) as f64)
    }
}

/// SCR = C / N; zero when the set is empty.
pub fn scr(conflicting: u64, labeled: u64) -> f64 {
    if labeled == 0 {
        0.0
    } else {
        conflicting as f64 / labeled as f64
    }
}

/// Self-collision counts for one label set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SelfCollision {
    /// Labeled members involved in a conflict.
    pub conflicting: u64,
    /// Total labeled members (distinct `(ring, member)` pairs).
    pub labeled: u64,
    pub rate: f64,
}

/// A label conflicts with the set itself when the same output is claimed
/// spent in two rings, or when one ring has two claimed spends. Counts
/// are over distinct `(ring, member)` pairs; a pair involved in both
/// kinds of conflict counts once.
pub fn self_collision_rate(labels: &LabelSet) -> SelfCollision {
    let mut ts_pairs: BTreeSet<(RingId, GlobalIndex)> = BTreeSet::new();
    for label in labels.iter() {
        if label.claim == Claim::TrueSpend {
            ts_pairs.insert((label.ring.clone(), label.member));
        }
    }
    let mut rings_of_member: HashMap<GlobalIndex, u64> = HashMap::new();
    let mut members_of_ring: HashMap<&RingId, u64> = HashMap::new();
    for (ring, member) in &ts_pairs {
        *rings_of_member.entry(*member).or_default() += 1;
        *members_of_ring.entry(ring).or_default() += 1;
    }
    let conflicting = ts_pairs
        .iter()
        .filter(|(ring, member)| rings_of_member[member] >= 2 || members_of_ring[ring] >= 2)
        .count() as u64;
    let labeled = labels.labeled_pair_count();
    SelfCollision {
        conflicting,
        labeled,
        rate: scr(conflicting, labeled),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrecisionReport {
    pub heuristic: HeuristicId,
    pub tp: u64,
    pub fp: u64,
    pub precision: Option<f64>,
    /// TrueSpend claims that coincide with the ground-truth spend.
    pub true_spend_overlap: u64,
    /// TrueSpend claims that contradict it.
    pub true_spend_errors: u64,
}

/// Scores a label set against ground truth, restricted to rings the
/// truth covers. A claim is correct when it names the true spend as
/// TrueSpend or any other member as Decoy. Counted over distinct
/// `(ring, member, claim)` triples so merged sets are not double-counted.
pub fn precision_report(labels: &LabelSet, truth: &GroundTruth) -> PrecisionReport {
    let mut seen: HashSet<(RingId, GlobalIndex, Claim)> = HashSet::new();
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut overlap = 0u64;
    let mut errors = 0u64;
    for label in labels.iter() {
        let spend = match truth.get(&label.ring) {
            Some(s) => s,
            None => continue,
        };
        if !seen.insert((label.ring.clone(), label.member, label.claim)) {
            continue;
        }
        let correct = match label.claim {
            Claim::TrueSpend => label.member == spend,
            Claim::Decoy => label.member != spend,
        };
        if correct {
            tp += 1;
        } else {
            fp += 1;
        }
        if label.claim == Claim::TrueSpend {
            if label.member == spend {
                overlap += 1;
            } else {
                errors += 1;
            }
        }
    }
    PrecisionReport {
        heuristic: labels.heuristic(),
        tp,
        fp,
        precision: precision(tp, fp),
        true_spend_overlap: overlap,
        true_spend_errors: errors,
    }
}

/// A ground-truth-like reference merged from high-confidence label sets.
#[derive(Debug, Clone)]
pub struct TruthReference {
    pub truth: GroundTruth,
    /// Rings excluded because two or more members were claimed spent.
    pub conflicting_rings: u64,
}

/// Merges TrueSpend labels into a ring → spend reference. Rings with
/// conflicting spends are excluded and counted.
pub fn labelset_as_truth<'a>(sets: impl IntoIterator<Item = &'a LabelSet>) -> TruthReference {
    let mut spends: BTreeMap<RingId, BTreeSet<GlobalIndex>> = BTreeMap::new();
    for set in sets {
        for label in set.iter() {
            if label.claim == Claim::TrueSpend {
                spends
                    .entry(label.ring.clone())
                    .or_default()
                    .insert(label.member);
            }
        }
    }
    let mut truth = GroundTruth::new();
    let mut conflicting = 0u64;
    for (ring, members) in spends {
        if members.len() == 1 {
            truth.insert(ring, *members.iter().next().unwrap());
        } else {
            conflicting += 1;
        }
    }
    TruthReference {
        truth,
        conflicting_rings: conflicting,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseCell {
    pub h1: HeuristicId,
    pub h2: HeuristicId,
    pub agreements: u64,
    pub collisions: u64,
    /// C / (A + C); absent when the sets share no labeled members.
    pub collision_rate: Option<f64>,
    /// A / min(|H1|, |H2|); absent when either set is empty.
    pub agreement_rate: Option<f64>,
}

/// Pairwise comparison over all `(ring, member)` pairs labeled by both
/// sets: same claim is an agreement, different claims are a collision.
/// Pairs a set labels with both claims internally are treated as
/// unlabeled by that set. One cell per unordered pair; counts are
/// symmetric by construction.
pub fn pairwise_matrix(sets: &[&LabelSet]) -> Vec<PairwiseCell> {
    // Effective claim per pair, per set.
    let claims: Vec<HashMap<(RingId, GlobalIndex), Claim>> = sets
        .iter()
        .map(|set| {
            let mut by_pair: HashMap<(RingId, GlobalIndex), (bool, bool)> = HashMap::new();
            for label in set.iter() {
                let entry = by_pair.entry((label.ring.clone(), label.member)).or_default();
                match label.claim {
                    Claim::TrueSpend => entry.0 = true,
                    Claim::Decoy => entry.1 = true,
                }
            }
            by_pair
                .into_iter()
                .filter_map(|(pair, (ts, decoy))| match (ts, decoy) {
                    (true, false) => Some((pair, Claim::TrueSpend)),
                    (false, true) => Some((pair, Claim::Decoy)),
                    _ => None,
                })
                .collect()
        })
        .collect();
    let sizes: Vec<u64> = sets.iter().map(|s| s.labeled_pair_count()).collect();

    let mut cells = Vec::new();
    for i in 0..sets.len() {
        for j in (i + 1)..sets.len() {
            let (small, large) = if claims[i].len() <= claims[j].len() {
                (&claims[i], &claims[j])
            } else {
                (&claims[j], &claims[i])
            };
            let mut agreements = 0u64;
            let mut collisions = 0u64;
            for (pair, claim) in small {
                if let Some(other) = large.get(pair) {
                    if claim == other {
                        agreements += 1;
                    } else {
                        collisions += 1;
                    }
                }
            }
            let compared = agreements + collisions;
            let min_size = sizes[i].min(sizes[j]);
            cells.push(PairwiseCell {
                h1: sets[i].heuristic(),
                h2: sets[j].heuristic(),
                agreements,
                collisions,
                collision_rate: (compared > 0).then(|| collisions as f64 / compared as f64),
                agreement_rate: (min_size > 0).then(|| agreements as f64 / min_size as f64),
            });
        }
    }
    cells
}

/// Time bucket granularity for the report series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Bucket {
    Month,
    Day,
}

impl Bucket {
    pub fn label(&self, ts: Timestamp) -> String {
        let dt = DateTime::from_timestamp(ts, 0).unwrap_or_default();
        match self {
            Bucket::Month => dt.format("%Y-%m").to_string(),
            Bucket::Day => dt.format("%Y-%m-%d").to_string(),
        }
    }
}

/// Ring-level effective size under a (consequence-propagated) label set:
/// nominal size minus unconflicted decoys, pinned to 1 when the ring has
/// an unconflicted spend, never below 1. Members carrying both claims
/// count as unlabeled; a ring with two claimed spends is not treated as
/// resolved.
pub fn effective_ring_size(ring: &crate::chain::InputRing, labels: &LabelSet) -> u64 {
    let mut ts_members = 0u64;
    let mut decoys = 0u64;
    for &m in &ring.members {
        match labels.claims_at(&ring.ring_id, m).unconflicted() {
            Some(Claim::TrueSpend) => ts_members += 1,
            Some(Claim::Decoy) => decoys += 1,
            None => {}
        }
    }
    if ts_members == 1 {
        return 1;
    }
    (ring.members.len() as u64).saturating_sub(decoys).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RingSizeBucket {
    pub bucket: String,
    pub mean_effective_ring_size: f64,
    pub mean_nominal_ring_size: f64,
    pub ring_count: u64,
}

/// Monthly (or daily) means of effective and nominal ring size, bucketed
/// by the spending transaction's timestamp.
pub fn effective_ring_size_series(
    chain: &ChainStore,
    combined: &LabelSet,
    bucket: Bucket,
) -> Vec<RingSizeBucket> {
    let mut acc: BTreeMap<String, (u64, u64, u64)> = BTreeMap::new();
    for (ring, tx) in chain.rings() {
        let label = bucket.label(tx.timestamp);
        let entry = acc.entry(label).or_default();
        entry.0 += effective_ring_size(ring, combined);
        entry.1 += ring.members.len() as u64;
        entry.2 += 1;
    }
    acc.into_iter()
        .map(|(bucket, (eff, nom, count))| RingSizeBucket {
            bucket,
            mean_effective_ring_size: eff as f64 / count as f64,
            mean_nominal_ring_size: nom as f64 / count as f64,
            ring_count: count,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecoyShareRow {
    pub bucket: String,
    pub heuristic: HeuristicId,
    pub identified_decoys: u64,
    pub total_members: u64,
    pub share: f64,
}

/// Per bucket and per label set: unconflicted decoys identified divided
/// by all ring members created in that bucket.
pub fn decoy_share_series(
    chain: &ChainStore,
    sets: &[&LabelSet],
    bucket: Bucket,
) -> Vec<DecoyShareRow> {
    let mut totals: BTreeMap<String, u64> = BTreeMap::new();
    let mut decoys: BTreeMap<(String, usize), u64> = BTreeMap::new();
    for (ring, tx) in chain.rings() {
        let label = bucket.label(tx.timestamp);
        *totals.entry(label.clone()).or_default() += ring.members.len() as u64;
        for (si, set) in sets.iter().enumerate() {
            let mut found = 0u64;
            for &m in &ring.members {
                if set.claims_at(&ring.ring_id, m).unconflicted() == Some(Claim::Decoy) {
                    found += 1;
                }
            }
            if found > 0 {
                *decoys.entry((label.clone(), si)).or_default() += found;
            }
        }
    }
    let mut rows = Vec::new();
    for (bucket_label, total) in &totals {
        for (si, set) in sets.iter().enumerate() {
            let found = decoys
                .get(&(bucket_label.clone(), si))
                .copied()
                .unwrap_or(0);
            rows.push(DecoyShareRow {
                bucket: bucket_label.clone(),
                heuristic: set.heuristic(),
                identified_decoys: found,
                total_members: *total,
                share: if *total == 0 {
                    0.0
                } else {
                    found as f64 / *total as f64
                },
            });
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoinbaseRow {
    pub bucket: String,
    pub coinbase_outputs: u64,
    pub pool_owned: Option<u64>,
    pub pool_share: Option<f64>,
}

/// Coinbase outputs created per bucket; when payouts are supplied, the
/// share of them owned by published pool payouts.
pub fn coinbase_output_series(
    chain: &ChainStore,
    payouts: Option<&[PayoutRecord]>,
    bucket: Bucket,
) -> Vec<CoinbaseRow> {
    let owned: Option<HashSet<GlobalIndex>> =
        payouts.map(|p| p.iter().map(|r| r.output_global_index).collect());
    let mut acc: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for tx in chain.transactions() {
        if !tx.is_coinbase {
            continue;
        }
        let label = bucket.label(tx.timestamp);
        let entry = acc.entry(label).or_default();
        for out in &tx.outputs {
            entry.0 += 1;
            if let Some(owned) = &owned {
                if owned.contains(&out.global_index) {
                    entry.1 += 1;
                }
            }
        }
    }
    acc.into_iter()
        .map(|(bucket, (total, owned_count))| CoinbaseRow {
            bucket,
            coinbase_outputs: total,
            pool_owned: owned.as_ref().map(|_| owned_count),
            pool_share: owned.as_ref().map(|_| {
                if total == 0 {
                    0.0
                } else {
                    owned_count as f64 / total as f64
                }
            }),
        })
        .collect()
}
