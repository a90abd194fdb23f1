//! Ring pairs that are identical except for one member.
//!
//! Wallets that cache decoy lists re-emit the same members across
//! consecutive spends, so two of their rings differ only in the truly
//! spent output. For a pair of equal-size rings sharing all but one
//! member — where neither ring has any other such partner — each ring's
//! unique member is labeled the true spend and the shared members are
//! labeled decoys.
//!
//! Matching is near-linear: every ring contributes one fingerprint per
//! leave-one-out subset of its sorted members; a qualifying pair
//! collides on exactly one fingerprint. Distinct rings can never share
//! more than one subset, so partner counts are exact (up to 128-bit hash
//! collisions, which a final exact intersection check filters out).

use std::collections::HashMap;

use crate::chain::{ChainStore, GlobalIndex};
use crate::labels::{HeuristicId, LabelSet, Labeler};

const FNV128_OFFSET: u128 = 0x6c62272e07bb014262b821756295c58d;
const FNV128_PRIME: u128 = 0x0000000001000000000000000000013b;

/// FNV-1a over the sorted members with one position skipped.
fn subset_fingerprint(sorted: &[GlobalIndex], skip: usize) -> u128 {
    let mut h = FNV128_OFFSET;
    for (i, &m) in sorted.iter().enumerate() {
        if i == skip {
            continue;
        }
        for b in m.to_le_bytes() {
            h ^= b as u128;
            h = h.wrapping_mul(FNV128_PRIME);
        }
    }
    h
}

/// |a ∩ b| for sorted slices.
fn intersection_size(a: &[GlobalIndex], b: &[GlobalIndex]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

pub fn differ_by_one(chain: &ChainStore) -> LabelSet {
    let rings: Vec<_> = chain.rings().map(|(r, _)| r).collect();
    let sorted: Vec<Vec<GlobalIndex>> = rings
        .iter()
        .map(|r| {
            let mut m = r.members.clone();
            m.sort_unstable();
            m
        })
        .collect();

    // fingerprint -> entries (ring index, the member left out)
    let mut buckets: HashMap<u128, Vec<(u32, GlobalIndex)>> = HashMap::new();
    for (ri, members) in sorted.iter().enumerate() {
        for skip in 0..members.len() {
            buckets
                .entry(subset_fingerprint(members, skip))
                .or_default()
                .push((ri as u32, members[skip]));
        }
    }

    // Entries in one bucket share an (n-1)-subset; entries with different
    // left-out members are partner pairs, entries with the same left-out
    // member are byte-identical rings. Each distinct ring pair meets in
    // at most one bucket, so summing per-bucket counts is exact.
    let mut partner_count = vec![0u64; rings.len()];
    let mut partner_of: Vec<Option<(u32, GlobalIndex)>> = vec![None; rings.len()];
    for entries in buckets.values() {
        if entries.len() < 2 {
            continue;
        }
        let mut missing_counts: HashMap<GlobalIndex, u64> = HashMap::new();
        for &(_, missing) in entries {
            *missing_counts.entry(missing).or_default() += 1;
        }
        for &(ri, missing) in entries {
            let others = entries.len() as u64 - missing_counts[&missing];
            if others == 0 {
                continue;
            }
            partner_count[ri as usize] += others;
            if partner_of[ri as usize].is_none() {
                let partner = entries
                    .iter()
                    .find(|&&(pj, pm)| pm != missing && pj != ri)
                    .copied();
                partner_of[ri as usize] = partner.map(|(pj, _)| (pj, missing));
            }
        }
    }

    let mut out = Labeler::new(HeuristicId::DifferByOne, chain);
    for (ri, ring) in rings.iter().enumerate() {
        if partner_count[ri] != 1 {
            continue;
        }
        let (pj, own_missing) = match partner_of[ri] {
            Some(p) => p,
            None => continue,
        };
        if partner_count[pj as usize] != 1 {
            continue;
        }
        // Exact check guards against fingerprint collisions.
        let n = sorted[ri].len();
        if sorted[pj as usize].len() != n
            || intersection_size(&sorted[ri], &sorted[pj as usize]) != n - 1
        {
            continue;
        }
        out.true_spend(&ring.ring_id, own_missing);
        for &m in &ring.members {
            if m != own_missing {
                out.decoy(&ring.ring_id, m);
            }
        }
    }
    out.finish()
}
