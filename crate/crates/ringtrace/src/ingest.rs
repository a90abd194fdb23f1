//! File formats and parsers.
//!
//! Four line-oriented formats, all UTF-8 with LF line endings:
//!
//! - chain files: one JSON object per line with fields `tx_id`, `height`,
//!   `timestamp`, `coinbase`, `extra_tags`, `inputs` (arrays of absolute
//!   global indices), `outputs` (`{g, pk}` objects);
//! - payout tables: CSV `tx_id,output_global_index,miner_id` with header;
//! - ground-truth tables: CSV `tx_id,input_position,true_spend_global_index`;
//! - label tables: CSV `tx_id,input_position,member_global_index,claim,heuristic,derived`.
//!
//! Every parse error carries the offending line number; no record is
//! silently skipped. Writers emit canonical bytes so that parse →
//! serialize → parse is the identity and generator output re-emits
//! byte-identically.

use std::collections::BTreeMap;
use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{BurnKeys, ChainError, ChainStore, GlobalIndex, RingId, TransactionRecord};
use crate::labels::{HeuristicId, Label, LabelSet};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}:{line}: {reason}")]
    MalformedLine {
        path: String,
        line: u64,
        reason: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: duplicate payout for tx {tx_id} output {output}")]
    DuplicatePayout {
        path: String,
        line: u64,
        tx_id: String,
        output: GlobalIndex,
    },
    #[error("{path}:{line}: duplicate ground-truth entry for ring {ring}")]
    DuplicateTruthEntry {
        path: String,
        line: u64,
        ring: RingId,
    },
    #[error("ground truth names {member} as true spend of ring {ring}, but it is not a member")]
    TrueSpendNotInRing { ring: RingId, member: GlobalIndex },
    #[error("ground truth references unknown ring {ring}")]
    UnknownRing { ring: RingId },
    #[error(transparent)]
    Chain(#[from] ChainError),
}

fn io_err(path: &Path, source: std::io::Error) -> IngestError {
    IngestError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn bad_line(path: &Path, line: u64, reason: impl ToString) -> IngestError {
    IngestError::MalformedLine {
        path: path.display().to_string(),
        line,
        reason: reason.to_string(),
    }
}

const PAYOUT_HEADER: [&str; 3] = ["tx_id", "output_global_index", "miner_id"];
const TRUTH_HEADER: [&str; 3] = ["tx_id", "input_position", "true_spend_global_index"];
const LABEL_HEADER: [&str; 6] = [
    "tx_id",
    "input_position",
    "member_global_index",
    "claim",
    "heuristic",
    "derived",
];

/// CSV bytes with the header always present, so empty tables round-trip.
fn csv_bytes<T: Serialize>(header: &[&str], rows: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(header).expect("writing header");
    for row in rows {
        w.serialize(row).expect("serializing row");
    }
    w.into_inner().expect("flushing table")
}

/// Writes `content` to `path` atomically: temp file in the same
/// directory, then rename. Interrupted runs never leave truncated files.
pub fn atomic_write(path: &Path, content: &[u8]) -> Result<(), IngestError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(d) => tempfile::NamedTempFile::new_in(d),
        None => tempfile::NamedTempFile::new_in("."),
    }
    .map_err(|e| io_err(path, e))?;
    tmp.write_all(content).map_err(|e| io_err(path, e))?;
    tmp.persist(path)
        .map_err(|e| io_err(path, e.error))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Chain files (JSON lines)
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ChainLine {
    tx_id: String,
    height: u64,
    timestamp: i64,
    coinbase: bool,
    extra_tags: Vec<String>,
    inputs: Vec<Vec<GlobalIndex>>,
    outputs: Vec<OutputLine>,
}

#[derive(Serialize, Deserialize)]
struct OutputLine {
    g: GlobalIndex,
    pk: String,
}

/// Parses a chain file and builds the indexed store. Structural errors
/// detected during the build (non-monotonic heights, dangling
/// references, ...) are reported with the line of the offending
/// transaction.
pub fn parse_chain_file(path: &Path, burn_keys: &BurnKeys) -> Result<ChainStore, IngestError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut txs = Vec::new();
    let mut line_of_tx: BTreeMap<String, u64> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ChainLine =
            serde_json::from_str(&line).map_err(|e| bad_line(path, line_no, e))?;
        line_of_tx.entry(parsed.tx_id.clone()).or_insert(line_no);
        txs.push(TransactionRecord::new(
            parsed.tx_id,
            parsed.height,
            parsed.timestamp,
            parsed.coinbase,
            parsed.extra_tags,
            parsed.inputs,
            parsed.outputs.into_iter().map(|o| (o.g, o.pk)).collect(),
            burn_keys,
        ));
    }
    ChainStore::build(txs).map_err(|e| attach_line(path, &line_of_tx, e))
}

fn attach_line(path: &Path, lines: &BTreeMap<String, u64>, err: ChainError) -> IngestError {
    let tx_id = match &err {
        ChainError::NonMonotonicHeight { tx_id, .. }
        | ChainError::NonMonotonicTimestamp { tx_id, .. }
        | ChainError::DuplicateTxId { tx_id }
        | ChainError::CoinbaseWithInputs { tx_id } => Some(tx_id.clone()),
        ChainError::DanglingReference { ring, .. }
        | ChainError::DuplicateRingMember { ring, .. }
        | ChainError::MemberNotOlderThanSpend { ring, .. } => Some(ring.tx_id.to_string()),
        _ => None,
    };
    match tx_id.and_then(|id| lines.get(&id).copied()) {
        Some(line) => bad_line(path, line, err),
        None => IngestError::Chain(err),
    }
}

fn chain_line(tx: &TransactionRecord) -> ChainLine {
    ChainLine {
        tx_id: tx.tx_id.to_string(),
        height: tx.block_height,
        timestamp: tx.timestamp,
        coinbase: tx.is_coinbase,
        extra_tags: tx.extra_tags.clone(),
        inputs: tx.inputs.iter().map(|r| r.members.clone()).collect(),
        outputs: tx
            .outputs
            .iter()
            .map(|o| OutputLine {
                g: o.global_index,
                pk: o.pk.clone(),
            })
            .collect(),
    }
}

pub fn render_chain(chain: &ChainStore) -> Vec<u8> {
    let mut buf = Vec::new();
    for tx in chain.transactions() {
        serde_json::to_writer(&mut buf, &chain_line(tx)).expect("serializing chain line");
        buf.push(b'\n');
    }
    buf
}

pub fn write_chain_file(chain: &ChainStore, path: &Path) -> Result<(), IngestError> {
    atomic_write(path, &render_chain(chain))
}

// ---------------------------------------------------------------------------
// Payout tables
// ---------------------------------------------------------------------------

/// One pool payout: `tx_id` is the coinbase transaction that paid
/// `miner_id` with the output at `output_global_index`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayoutRecord {
    pub tx_id: String,
    pub output_global_index: GlobalIndex,
    pub miner_id: String,
}

pub fn parse_payouts(path: &Path) -> Result<Vec<PayoutRecord>, IngestError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new().from_reader(BufReader::new(file));
    expect_headers(path, &mut reader, &PAYOUT_HEADER)?;
    let mut out = Vec::new();
    let mut seen: HashSet<(String, GlobalIndex)> = HashSet::new();
    for result in reader.deserialize::<PayoutRecord>() {
        let record = result.map_err(|e| csv_err(path, e))?;
        let line = out.len() as u64 + 2; // header is line 1
        if !seen.insert((record.tx_id.clone(), record.output_global_index)) {
            return Err(IngestError::DuplicatePayout {
                path: path.display().to_string(),
                line,
                tx_id: record.tx_id,
                output: record.output_global_index,
            });
        }
        out.push(record);
    }
    Ok(out)
}

pub fn render_payouts(records: &[PayoutRecord]) -> Vec<u8> {
    csv_bytes(&PAYOUT_HEADER, records)
}

pub fn write_payouts(records: &[PayoutRecord], path: &Path) -> Result<(), IngestError> {
    atomic_write(path, &render_payouts(records))
}

// ---------------------------------------------------------------------------
// Ground truth tables
// ---------------------------------------------------------------------------

/// Ring → true spend map, from the generator or an external source.
#[derive(Debug, Clone, Default)]
pub struct GroundTruth {
    entries: BTreeMap<RingId, GlobalIndex>,
}

impl GroundTruth {
    pub fn new() -> Self {
        GroundTruth::default()
    }

    /// Returns false when the ring already has an entry.
    pub fn insert(&mut self, ring: RingId, true_spend: GlobalIndex) -> bool {
        match self.entries.entry(ring) {
            std::collections::btree_map::Entry::Occupied(_) => false,
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(true_spend);
                true
            }
        }
    }

    pub fn get(&self, ring: &RingId) -> Option<GlobalIndex> {
        self.entries.get(ring).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&RingId, GlobalIndex)> {
        self.entries.iter().map(|(r, &g)| (r, g))
    }

    /// Checks every entry against the chain: the ring must exist and the
    /// named output must be one of its members.
    pub fn validate(&self, chain: &ChainStore) -> Result<(), IngestError> {
        for (ring_id, spend) in self.iter() {
            let ring = chain
                .ring(ring_id)
                .ok_or_else(|| IngestError::UnknownRing {
                    ring: ring_id.clone(),
                })?;
            if !ring.contains(spend) {
                return Err(IngestError::TrueSpendNotInRing {
                    ring: ring_id.clone(),
                    member: spend,
                });
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct TruthLine {
    tx_id: String,
    input_position: u32,
    true_spend_global_index: GlobalIndex,
}

pub fn parse_ground_truth(path: &Path) -> Result<GroundTruth, IngestError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new().from_reader(BufReader::new(file));
    expect_headers(path, &mut reader, &TRUTH_HEADER)?;
    let mut truth = GroundTruth::new();
    for (line, result) in (2u64..).zip(reader.deserialize::<TruthLine>()) {
        let row = result.map_err(|e| csv_err(path, e))?;
        let ring = RingId::new(row.tx_id, row.input_position);
        if !truth.insert(ring.clone(), row.true_spend_global_index) {
            return Err(IngestError::DuplicateTruthEntry {
                path: path.display().to_string(),
                line,
                ring,
            });
        }
    }
    Ok(truth)
}

pub fn render_ground_truth(truth: &GroundTruth) -> Vec<u8> {
    csv_bytes(
        &TRUTH_HEADER,
        truth.iter().map(|(ring, spend)| TruthLine {
            tx_id: ring.tx_id.to_string(),
            input_position: ring.input_index,
            true_spend_global_index: spend,
        }),
    )
}

pub fn write_ground_truth(truth: &GroundTruth, path: &Path) -> Result<(), IngestError> {
    atomic_write(path, &render_ground_truth(truth))
}

// ---------------------------------------------------------------------------
// Label tables
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct LabelLine {
    tx_id: String,
    input_position: u32,
    member_global_index: GlobalIndex,
    claim: String,
    heuristic: String,
    derived: bool,
}

/// Reads a label table. The set identity is the single heuristic present
/// in the file, or `Combined` when labels from several passes are mixed.
pub fn read_label_file(path: &Path) -> Result<LabelSet, IngestError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new().from_reader(BufReader::new(file));
    expect_headers(path, &mut reader, &LABEL_HEADER)?;
    let mut labels: Vec<Label> = Vec::new();
    let mut tx_ids: BTreeMap<String, Arc<str>> = BTreeMap::new();
    for (line, result) in (2u64..).zip(reader.deserialize::<LabelLine>()) {
        let row = result.map_err(|e| csv_err(path, e))?;
        let claim = row
            .claim
            .parse()
            .map_err(|e: String| bad_line(path, line, e))?;
        let heuristic: HeuristicId = row
            .heuristic
            .parse()
            .map_err(|e: String| bad_line(path, line, e))?;
        let tx_id = tx_ids
            .entry(row.tx_id.clone())
            .or_insert_with(|| Arc::from(row.tx_id.as_str()));
        labels.push(Label {
            ring: RingId::new(Arc::clone(tx_id), row.input_position),
            member: row.member_global_index,
            claim,
            heuristic,
            derived: row.derived,
        });
    }
    let mut ids: Vec<HeuristicId> = labels.iter().map(|l| l.heuristic).collect();
    ids.sort_unstable();
    ids.dedup();
    let set_id = match ids.as_slice() {
        [single] => *single,
        _ => HeuristicId::Combined,
    };
    let mut set = LabelSet::new(set_id);
    for label in labels {
        set.insert(label);
    }
    Ok(set)
}

/// Canonical label table bytes: rows sorted by ring, member, heuristic.
pub fn render_labels(set: &LabelSet) -> Vec<u8> {
    csv_bytes(
        &LABEL_HEADER,
        set.sorted_labels().into_iter().map(|label| LabelLine {
            tx_id: label.ring.tx_id.to_string(),
            input_position: label.ring.input_index,
            member_global_index: label.member,
            claim: label.claim.to_string(),
            heuristic: label.heuristic.to_string(),
            derived: label.derived,
        }),
    )
}

pub fn write_label_file(set: &LabelSet, path: &Path) -> Result<(), IngestError> {
    atomic_write(path, &render_labels(set))
}

// ---------------------------------------------------------------------------

fn expect_headers<R: std::io::Read>(
    path: &Path,
    reader: &mut csv::Reader<R>,
    expected: &[&str],
) -> Result<(), IngestError> {
    let headers = reader.headers().map_err(|e| csv_err(path, e))?;
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(bad_line(
            path,
            1,
            format!("expected header {expected:?}, found {got:?}"),
        ));
    }
    Ok(())
}

fn csv_err(path: &Path, err: csv::Error) -> IngestError {
    let line = err
        .position()
        .map(|p| p.line())
        .unwrap_or(0);
    bad_line(path, line, err)
}
