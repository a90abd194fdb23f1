//! In-memory ledger model.
//!
//! A [`ChainStore`] is an immutable, indexed view of a sequence of
//! transactions: outputs addressable by their dense global index, input
//! rings addressable by `(tx, input position)`, and a reverse index from
//! every output to the rings that reference it. All analysis passes share
//! one store through `&ChainStore`; nothing mutates it after
//! [`ChainStore::build`].

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Dense creation-order identity of a transaction output.
pub type GlobalIndex = u64;
/// Block height, in blocks.
pub type BlockHeight = u64;
/// UTC seconds since the UNIX epoch.
pub type Timestamp = i64;

/// Public keys marking non-spendable padding outputs in NFT-style
/// transfer rings. Outputs carrying one of these keys can never be a
/// true spend.
pub const DEFAULT_BURN_KEYS: [&str; 2] = [
    "0000000000000000000000000000000000000000000000000000000000000000",
    "deadbeefdeadbeefdeadbeefdeadbeefdeadbeefdeadbeefdeadbeefdead000f",
];

/// The set of public keys treated as burned (non-spendable).
#[derive(Debug, Clone)]
pub struct BurnKeys(Vec<String>);

impl Default for BurnKeys {
    fn default() -> Self {
        BurnKeys(DEFAULT_BURN_KEYS.iter().map(|k| k.to_string()).collect())
    }
}

impl BurnKeys {
    /// Replaces the default constants, e.g. from CLI flags.
    pub fn new(keys: Vec<String>) -> Self {
        BurnKeys(keys)
    }

    pub fn contains(&self, pk: &str) -> bool {
        self.0.iter().any(|k| k == pk)
    }
}

/// Identity of one input ring: the spending transaction plus the input's
/// position within it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RingId {
    pub tx_id: Arc<str>,
    pub input_index: u32,
}

impl RingId {
    pub fn new(tx_id: impl Into<Arc<str>>, input_index: u32) -> Self {
        RingId {
            tx_id: tx_id.into(),
            input_index,
        }
    }
}

impl fmt::Display for RingId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.tx_id, self.input_index)
    }
}

/// One transaction output (an enote). `global_index` is the canonical
/// identity used everywhere; `pk` is retained for burn-key detection and
/// display only.
#[derive(Debug, Clone)]
pub struct OutputRecord {
    pub global_index: GlobalIndex,
    pub pk: String,
    pub creating_tx: Arc<str>,
    pub position_in_tx: u32,
    pub creation_height: BlockHeight,
    pub is_coinbase: bool,
    pub burned_key: bool,
}

/// An ordered list of referenced outputs, of which exactly one is the
/// true spend. Member order is preserved from the source data, but all
/// matching logic treats rings as sets.
#[derive(Debug, Clone)]
pub struct InputRing {
    pub ring_id: RingId,
    pub members: Vec<GlobalIndex>,
}

impl InputRing {
    pub fn ring_size(&self) -> usize {
        self.members.len()
    }

    pub fn contains(&self, member: GlobalIndex) -> bool {
        self.members.contains(&member)
    }
}

#[derive(Debug, Clone)]
pub struct TransactionRecord {
    pub tx_id: Arc<str>,
    pub block_height: BlockHeight,
    pub timestamp: Timestamp,
    pub is_coinbase: bool,
    pub extra_tags: Vec<String>,
    pub inputs: Vec<InputRing>,
    pub outputs: Vec<OutputRecord>,
}

impl TransactionRecord {
    /// Assembles a record from raw parts, deriving per-output provenance
    /// (creating tx, position, height, coinbase and burn flags).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        tx_id: impl Into<Arc<str>>,
        block_height: BlockHeight,
        timestamp: Timestamp,
        is_coinbase: bool,
        extra_tags: Vec<String>,
        input_members: Vec<Vec<GlobalIndex>>,
        outputs: Vec<(GlobalIndex, String)>,
        burn_keys: &BurnKeys,
    ) -> Self {
        let tx_id: Arc<str> = tx_id.into();
        let inputs = input_members
            .into_iter()
            .enumerate()
            .map(|(i, members)| InputRing {
                ring_id: RingId::new(Arc::clone(&tx_id), i as u32),
                members,
            })
            .collect();
        let outputs = outputs
            .into_iter()
            .enumerate()
            .map(|(i, (g, pk))| OutputRecord {
                global_index: g,
                burned_key: burn_keys.contains(&pk),
                pk,
                creating_tx: Arc::clone(&tx_id),
                position_in_tx: i as u32,
                creation_height: block_height,
                is_coinbase,
            })
            .collect();
        TransactionRecord {
            tx_id,
            block_height,
            timestamp,
            is_coinbase,
            extra_tags,
            inputs,
            outputs,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChainError {
    #[error("ring {ring} references output {member} which does not exist")]
    DanglingReference { ring: RingId, member: GlobalIndex },
    #[error("transaction {tx_id} at height {height} follows height {prev}")]
    NonMonotonicHeight {
        tx_id: String,
        height: BlockHeight,
        prev: BlockHeight,
    },
    #[error("transaction {tx_id} timestamp {timestamp} precedes {prev}")]
    NonMonotonicTimestamp {
        tx_id: String,
        timestamp: Timestamp,
        prev: Timestamp,
    },
    #[error("output global index {index} defined more than once")]
    DuplicateGlobalIndex { index: GlobalIndex },
    #[error("output indices are not dense: {count} outputs but highest index is {max}")]
    NonDenseOutputIndex { count: u64, max: GlobalIndex },
    #[error("transaction id {tx_id} appears more than once")]
    DuplicateTxId { tx_id: String },
    #[error("ring {ring} lists member {member} more than once")]
    DuplicateRingMember { ring: RingId, member: GlobalIndex },
    #[error("ring {ring} member {member} was created at height {created}, not before spend height {spend}")]
    MemberNotOlderThanSpend {
        ring: RingId,
        member: GlobalIndex,
        created: BlockHeight,
        spend: BlockHeight,
    },
    #[error("coinbase transaction {tx_id} has inputs")]
    CoinbaseWithInputs { tx_id: String },
    #[error("output {member} is not a member of ring {ring}")]
    MemberNotInRing { ring: RingId, member: GlobalIndex },
}

/// Immutable indexed view over a transaction sequence.
///
/// Safe to share across threads once built; construction is
/// single-threaded.
#[derive(Debug)]
pub struct ChainStore {
    txs: Vec<TransactionRecord>,
    tx_index: HashMap<Arc<str>, u32>,
    /// global index -> (tx position, output position)
    output_locator: Vec<(u32, u32)>,
    /// global index -> rings whose members contain it
    referencing: Vec<Vec<RingId>>,
    ring_count: usize,
}

impl ChainStore {
    /// Indexes a height-sorted transaction sequence. Runs in
    /// O(total ring members) and validates the structural invariants:
    /// dense unique output indices, monotone heights and timestamps, no
    /// dangling ring references, distinct ring members each created
    /// strictly before the spending block, and coinbase transactions
    /// without inputs.
    pub fn build(txs: Vec<TransactionRecord>) -> Result<Self, ChainError> {
        let mut tx_index: HashMap<Arc<str>, u32> = HashMap::with_capacity(txs.len());
        let mut total_outputs: u64 = 0;
        let mut max_index: Option<GlobalIndex> = None;
        let mut prev_height: Option<BlockHeight> = None;
        let mut prev_ts: Option<Timestamp> = None;

        for (i, tx) in txs.iter().enumerate() {
            if let Some(prev) = prev_height {
                if tx.block_height < prev {
                    return Err(ChainError::NonMonotonicHeight {
                        tx_id: tx.tx_id.to_string(),
                        height: tx.block_height,
                        prev,
                    });
                }
            }
            prev_height = Some(tx.block_height);
            if let Some(prev) = prev_ts {
                if tx.timestamp < prev {
                    return Err(ChainError::NonMonotonicTimestamp {
                        tx_id: tx.tx_id.to_string(),
                        timestamp: tx.timestamp,
                        prev,
                    });
                }
            }
            prev_ts = Some(tx.timestamp);
            if tx.is_coinbase && !tx.inputs.is_empty() {
                return Err(ChainError::CoinbaseWithInputs {
                    tx_id: tx.tx_id.to_string(),
                });
            }
            if tx_index.insert(Arc::clone(&tx.tx_id), i as u32).is_some() {
                return Err(ChainError::DuplicateTxId {
                    tx_id: tx.tx_id.to_string(),
                });
            }
            total_outputs += tx.outputs.len() as u64;
            for out in &tx.outputs {
                max_index = Some(max_index.map_or(out.global_index, |m| m.max(out.global_index)));
            }
        }

        if let Some(max) = max_index {
            if max + 1 != total_outputs {
                // Either a duplicate or a gap; distinguish below.
                if max + 1 < total_outputs {
                    // More outputs than index space: at least one duplicate.
                } else {
                    return Err(ChainError::NonDenseOutputIndex {
                        count: total_outputs,
                        max,
                    });
                }
            }
        }

        let mut output_locator: Vec<Option<(u32, u32)>> = vec![None; total_outputs as usize];
        for (i, tx) in txs.iter().enumerate() {
            for (j, out) in tx.outputs.iter().enumerate() {
                let slot = output_locator
                    .get_mut(out.global_index as usize)
                    .ok_or(ChainError::NonDenseOutputIndex {
                        count: total_outputs,
                        max: out.global_index,
                    })?;
                if slot.is_some() {
                    return Err(ChainError::DuplicateGlobalIndex {
                        index: out.global_index,
                    });
                }
                *slot = Some((i as u32, j as u32));
            }
        }
        let output_locator: Vec<(u32, u32)> = output_locator
            .into_iter()
            .map(|s| s.expect("dense after duplicate and bound checks"))
            .collect();

        let mut referencing: Vec<Vec<RingId>> = vec![Vec::new(); output_locator.len()];
        let mut ring_count = 0usize;
        for tx in &txs {
            for ring in &tx.inputs {
                ring_count += 1;
                let mut seen = ring.members.clone();
                seen.sort_unstable();
                if seen.windows(2).any(|w| w[0] == w[1]) {
                    let dup = seen
                        .windows(2)
                        .find(|w| w[0] == w[1])
                        .map(|w| w[0])
                        .unwrap();
                    return Err(ChainError::DuplicateRingMember {
                        ring: ring.ring_id.clone(),
                        member: dup,
                    });
                }
                for &m in &ring.members {
                    let (ti, oi) =
                        *output_locator
                            .get(m as usize)
                            .ok_or(ChainError::DanglingReference {
                                ring: ring.ring_id.clone(),
                                member: m,
                            })?;
                    let created = txs[ti as usize].outputs[oi as usize].creation_height;
                    if created >= tx.block_height {
                        return Err(ChainError::MemberNotOlderThanSpend {
                            ring: ring.ring_id.clone(),
                            member: m,
                            created,
                            spend: tx.block_height,
                        });
                    }
                    referencing[m as usize].push(ring.ring_id.clone());
                }
            }
        }

        Ok(ChainStore {
            txs,
            tx_index,
            output_locator,
            referencing,
            ring_count,
        })
    }

    pub fn transactions(&self) -> &[TransactionRecord] {
        &self.txs
    }

    pub fn tx(&self, tx_id: &str) -> Option<&TransactionRecord> {
        self.tx_index.get(tx_id).map(|&i| &self.txs[i as usize])
    }

    pub fn output(&self, g: GlobalIndex) -> Option<&OutputRecord> {
        let &(ti, oi) = self.output_locator.get(g as usize)?;
        Some(&self.txs[ti as usize].outputs[oi as usize])
    }

    pub fn output_count(&self) -> usize {
        self.output_locator.len()
    }

    /// The rings whose member lists contain `g`. Empty for unreferenced
    /// or unknown indices.
    pub fn referencing_rings(&self, g: GlobalIndex) -> &[RingId] {
        self.referencing
            .get(g as usize)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn ring(&self, id: &RingId) -> Option<&InputRing> {
        let tx = self.tx(&id.tx_id)?;
        tx.inputs.get(id.input_index as usize)
    }

    pub fn ring_tx(&self, id: &RingId) -> Option<&TransactionRecord> {
        let tx = self.tx(&id.tx_id)?;
        tx.inputs.get(id.input_index as usize).map(|_| tx)
    }

    /// All rings in chain order, paired with their spending transaction.
    pub fn rings(&self) -> impl Iterator<Item = (&InputRing, &TransactionRecord)> {
        self.txs
            .iter()
            .flat_map(|tx| tx.inputs.iter().map(move |r| (r, tx)))
    }

    pub fn ring_count(&self) -> usize {
        self.ring_count
    }
}

/// Age of a ring member in blocks: spending height minus creation
/// height. At least 1 on any valid chain, and at least the lock span on
/// chains honoring the unlock rule.
pub fn member_age(
    ring: &InputRing,
    member: GlobalIndex,
    chain: &ChainStore,
) -> Result<u64, ChainError> {
    if !ring.contains(member) {
        return Err(ChainError::MemberNotInRing {
            ring: ring.ring_id.clone(),
            member,
        });
    }
    let tx = chain
        .ring_tx(&ring.ring_id)
        .ok_or_else(|| ChainError::MemberNotInRing {
            ring: ring.ring_id.clone(),
            member,
        })?;
    let out = chain
        .output(member)
        .ok_or_else(|| ChainError::DanglingReference {
            ring: ring.ring_id.clone(),
            member,
        })?;
    Ok(tx.block_height - out.creation_height)
}
