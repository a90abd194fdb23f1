//! Command-line front end.
//!
//! Five subcommands wire the library into analyst workflows:
//! `generate` (synthetic ledger with ground truth), `run` (heuristic
//! passes over a chain), `evaluate` (precision against truth or
//! reference labels), `compare` (pairwise agreement matrix) and `report`
//! (time-bucketed series). All outputs are written atomically; exit
//! codes are 0 on success, 1 on usage errors, 2 on data errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, TimeZone, Utc};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::chain::BurnKeys;
use crate::heuristics::{
    self, coinbase_decoys, differ_by_one, mordinal_decoys, p2pool_output_merging,
    propagate_consequences, ten_block_decoy_bug, zero_mixin, TimeWindow,
};
use crate::ingest::{self, PayoutRecord};
use crate::labels::{Claim, HeuristicId, LabelSet};
use crate::metrics::{
    coinbase_output_series, decoy_share_series, effective_ring_size_series, labelset_as_truth,
    pairwise_matrix, precision_report, self_collision_rate, Bucket,
};
use crate::reaction::{chain_reaction, combined_chain_reaction};
use crate::synth::{describe, generate, GeneratorConfig};

#[derive(Parser)]
#[command(name = "ringtrace")]
#[command(about = "Traceability analysis for ring-signature ledgers")]
#[command(version)]
pub struct Cli {
    /// Emit machine-readable JSON summaries on stdout
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic chain, payout table and ground truth
    Generate {
        /// Generator configuration (TOML)
        #[arg(long)]
        config: PathBuf,

        /// Output directory for chain.jsonl, payouts.csv, truth.csv
        #[arg(long)]
        out: PathBuf,
    },

    /// Run heuristic passes and write one label file per pass plus a
    /// combined chain-reaction set
    Run {
        /// Chain file (JSON lines)
        #[arg(long)]
        chain: PathBuf,

        /// Comma-separated heuristic names, or "all"
        #[arg(long, value_delimiter = ',')]
        heuristics: Vec<String>,

        /// Payout table; required by p2pool-merge
        #[arg(long)]
        payouts: Option<PathBuf>,

        /// Output directory for label files
        #[arg(long)]
        out: PathBuf,

        /// Start of the ten-block bug window (UTC date)
        #[arg(long, default_value = "2018-10-11")]
        window_start: NaiveDate,

        /// End of the ten-block bug window, inclusive (UTC date)
        #[arg(long, default_value = "2023-04-10")]
        window_end: NaiveDate,

        /// Maximum input count for the coinbase heuristic
        #[arg(long, default_value_t = heuristics::DEFAULT_MAX_INPUTS)]
        max_inputs: u32,

        /// Date gate for the coinbase heuristic, or "none"
        #[arg(long, default_value = "2021-10-01")]
        since: String,

        /// Burn-key constant; repeat to replace the defaults
        #[arg(long = "burn-key")]
        burn_keys: Vec<String>,
    },

    /// Score label sets against ground truth or reference labels
    Evaluate {
        /// Label file to score; repeatable
        #[arg(long, required = true)]
        labels: Vec<PathBuf>,

        /// Ground-truth table
        #[arg(long)]
        truth: Option<PathBuf>,

        /// High-confidence label files merged into a reference truth;
        /// repeatable, alternative to --truth
        #[arg(long)]
        reference: Vec<PathBuf>,

        /// Output CSV report
        #[arg(long)]
        out: PathBuf,
    },

    /// Pairwise collision/agreement matrix between label sets
    Compare {
        /// Label file; at least two
        #[arg(long)]
        labels: Vec<PathBuf>,

        /// Output CSV matrix
        #[arg(long)]
        out: PathBuf,
    },

    /// Effective-ring-size, decoy-share and coinbase-output series
    Report {
        /// Chain file (JSON lines)
        #[arg(long)]
        chain: PathBuf,

        /// Combined (consequence-propagated) label file
        #[arg(long)]
        labels: PathBuf,

        /// Payout table for the coinbase-output share column
        #[arg(long)]
        payouts: Option<PathBuf>,

        /// Output directory
        #[arg(long)]
        out: PathBuf,

        /// Time bucket granularity
        #[arg(long, value_enum, default_value_t = BucketArg::Month)]
        bucket: BucketArg,

        /// Burn-key constant; repeat to replace the defaults
        #[arg(long = "burn-key")]
        burn_keys: Vec<String>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BucketArg {
    Month,
    Day,
}

impl From<BucketArg> for Bucket {
    fn from(b: BucketArg) -> Bucket {
        match b {
            BucketArg::Month => Bucket::Month,
            BucketArg::Day => Bucket::Day,
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Data(msg) => write!(f, "{msg}"),
        }
    }
}

impl From<ingest::IngestError> for CliError {
    fn from(e: ingest::IngestError) -> Self {
        CliError::Data(e.to_string())
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate { config, out } => cmd_generate(&config, &out, cli.json),
        Command::Run {
            chain,
            heuristics,
            payouts,
            out,
            window_start,
            window_end,
            max_inputs,
            since,
            burn_keys,
        } => cmd_run(
            &chain,
            &heuristics,
            payouts.as_deref(),
            &out,
            RunParams {
                window: window_from_dates(window_start, window_end),
                max_inputs,
                since: parse_since(&since)?,
                burn: burn_keys_from(burn_keys),
            },
            cli.json,
        ),
        Command::Evaluate {
            labels,
            truth,
            reference,
            out,
        } => cmd_evaluate(&labels, truth.as_deref(), &reference, &out, cli.json),
        Command::Compare { labels, out } => cmd_compare(&labels, &out, cli.json),
        Command::Report {
            chain,
            labels,
            payouts,
            out,
            bucket,
            burn_keys,
        } => cmd_report(
            &chain,
            &labels,
            payouts.as_deref(),
            &out,
            bucket.into(),
            burn_keys_from(burn_keys),
            cli.json,
        ),
    }
}

pub struct RunParams {
    pub window: TimeWindow,
    pub max_inputs: u32,
    pub since: Option<NaiveDate>,
    pub burn: BurnKeys,
}

fn window_from_dates(start: NaiveDate, end: NaiveDate) -> TimeWindow {
    let start_ts = Utc
        .from_utc_datetime(&start.and_hms_opt(0, 0, 0).expect("valid time"))
        .timestamp();
    let end_ts = Utc
        .from_utc_datetime(&end.and_hms_opt(23, 59, 59).expect("valid time"))
        .timestamp();
    TimeWindow::new(start_ts, end_ts)
}

fn parse_since(s: &str) -> Result<Option<NaiveDate>, CliError> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|e| CliError::Usage(format!("--since: {e}")))
}

fn burn_keys_from(keys: Vec<String>) -> BurnKeys {
    if keys.is_empty() {
        BurnKeys::default()
    } else {
        BurnKeys::new(keys)
    }
}

fn data_err(context: &str, err: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{context}: {err}"))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| data_err(&dir.display().to_string(), e))
}

fn cmd_generate(config_path: &Path, out: &Path, as_json: bool) -> Result<(), CliError> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| data_err(&config_path.display().to_string(), e))?;
    let config: GeneratorConfig =
        GeneratorConfig::from_toml(&text).map_err(|e| data_err("config", e))?;
    let expected = describe(&config);
    let ledger = generate(&config).map_err(|e| data_err("generate", e))?;
    ensure_dir(out)?;
    ingest::write_chain_file(&ledger.chain, &out.join("chain.jsonl"))?;
    ingest::write_payouts(&ledger.payouts, &out.join("payouts.csv"))?;
    ingest::write_ground_truth(&ledger.truth, &out.join("truth.csv"))?;

    if as_json {
        println!(
            "{}",
            json!({
                "expected": expected,
                "realized": {
                    "transactions": ledger.chain.transactions().len(),
                    "rings": ledger.chain.ring_count(),
                    "outputs": ledger.chain.output_count(),
                    "payouts": ledger.payouts.len(),
                    "truth_entries": ledger.truth.len(),
                    "planted": ledger.planted,
                },
            })
        );
    } else {
        println!("expected (model):");
        println!("  coinbase txs        {}", expected.coinbase_txs);
        println!("  regular txs         {:.1}", expected.regular_txs);
        println!("  coinbase outputs    {:.1}", expected.coinbase_outputs);
        println!("  payout records      {:.1}", expected.payout_records);
        println!("  mordinal mints      {:.1}", expected.mordinal_mints);
        println!("realized:");
        println!("  transactions        {}", ledger.chain.transactions().len());
        println!("  rings               {}", ledger.chain.ring_count());
        println!("  outputs             {}", ledger.chain.output_count());
        println!("  payouts             {}", ledger.payouts.len());
        println!("  truth entries       {}", ledger.truth.len());
        println!("  regular txs         {}", ledger.planted.regular_txs);
        println!("  cached pairs        {}", ledger.planted.cached_pairs.len());
        println!("  mordinal mints      {}", ledger.planted.mordinal_mints);
        println!("  mordinal transfers  {}", ledger.planted.mordinal_transfers);
    }
    Ok(())
}

/// Heuristics runnable by name. `chain-reaction` is the zero-mixin pass
/// followed by the fixpoint; `combined` is always produced and cannot be
/// requested directly.
const RUNNABLE: [HeuristicId; 7] = [
    HeuristicId::ZeroMixin,
    HeuristicId::ChainReaction,
    HeuristicId::TenBlockDecoyBug,
    HeuristicId::DifferByOne,
    HeuristicId::Mordinal,
    HeuristicId::Coinbase,
    HeuristicId::P2PoolMerge,
];

fn parse_heuristic_list(
    names: &[String],
    have_payouts: bool,
) -> Result<Vec<HeuristicId>, CliError> {
    let mut out = Vec::new();
    if names.is_empty() {
        return Err(CliError::Usage(
            "no heuristics requested; pass --heuristics <names> or --heuristics all".into(),
        ));
    }
    for name in names {
        if name == "all" {
            for id in RUNNABLE {
                if id == HeuristicId::P2PoolMerge && !have_payouts {
                    continue;
                }
                if !out.contains(&id) {
                    out.push(id);
                }
            }
            continue;
        }
        let id: HeuristicId = name
            .parse()
            .map_err(|e: String| CliError::Usage(e))?;
        if !RUNNABLE.contains(&id) {
            return Err(CliError::Usage(format!(
                "{name} is produced automatically and cannot be requested; \
                 runnable heuristics: {}",
                RUNNABLE.map(|h| h.name()).join(", ")
            )));
        }
        if !out.contains(&id) {
            out.push(id);
        }
    }
    Ok(out)
}

fn cmd_run(
    chain_path: &Path,
    names: &[String],
    payouts_path: Option<&Path>,
    out: &Path,
    params: RunParams,
    as_json: bool,
) -> Result<(), CliError> {
    let requested = parse_heuristic_list(names, payouts_path.is_some())?;
    if requested.contains(&HeuristicId::P2PoolMerge) && payouts_path.is_none() {
        return Err(CliError::Usage(
            "p2pool-merge requires --payouts <file>".into(),
        ));
    }
    let chain = ingest::parse_chain_file(chain_path, &params.burn)?;
    let payouts: Option<Vec<PayoutRecord>> = match payouts_path {
        Some(p) => Some(ingest::parse_payouts(p)?),
        None => None,
    };

    ensure_dir(out)?;
    let mut raw_sets: Vec<LabelSet> = Vec::new();
    for id in &requested {
        let raw = match id {
            HeuristicId::ZeroMixin => zero_mixin(&chain),
            HeuristicId::ChainReaction => {
                chain_reaction(&chain, &zero_mixin(&chain)).labels
            }
            HeuristicId::TenBlockDecoyBug => ten_block_decoy_bug(&chain, &params.window),
            HeuristicId::DifferByOne => differ_by_one(&chain),
            HeuristicId::Mordinal => mordinal_decoys(&chain),
            HeuristicId::Coinbase => coinbase_decoys(&chain, params.max_inputs, params.since),
            HeuristicId::P2PoolMerge => p2pool_output_merging(
                &chain,
                payouts.as_deref().expect("payouts checked above"),
            )
            .map_err(|e| data_err("p2pool-merge", e))?,
            HeuristicId::Combined => unreachable!("not runnable"),
        };
        raw_sets.push(raw);
    }

    let combined = combined_chain_reaction(&chain, raw_sets.iter());

    let mut summary = Vec::new();
    for raw in &raw_sets {
        let propagated = propagate_consequences(raw, &chain);
        let path = out.join(format!("{}.labels.csv", propagated.heuristic()));
        ingest::write_label_file(&propagated, &path)?;
        let sc = self_collision_rate(&propagated);
        let spends = propagated
            .iter()
            .filter(|l| l.claim == Claim::TrueSpend)
            .count();
        summary.push(json!({
            "heuristic": propagated.heuristic().name(),
            "file": path.display().to_string(),
            "labels": propagated.len(),
            "true_spends": spends,
            "decoys": propagated.len() - spends,
            "self_collisions": sc.conflicting,
            "scr": sc.rate,
        }));
    }
    let combined_path = out.join("combined.labels.csv");
    ingest::write_label_file(&combined.labels, &combined_path)?;
    let sc = self_collision_rate(&combined.labels);
    let combined_spends = combined
        .labels
        .iter()
        .filter(|l| l.claim == Claim::TrueSpend)
        .count();
    let combined_summary = json!({
        "heuristic": "combined",
        "file": combined_path.display().to_string(),
        "labels": combined.labels.len(),
        "true_spends": combined_spends,
        "decoys": combined.labels.len() - combined_spends,
        "new_true_spends": combined.new_true_spends,
        "new_decoys": combined.new_decoys,
        "contradicted_rings": combined.contradicted.len(),
        "self_collisions": sc.conflicting,
        "scr": sc.rate,
    });

    if as_json {
        println!(
            "{}",
            json!({ "sets": summary, "combined": combined_summary })
        );
    } else {
        println!(
            "{:<22} {:>10} {:>12} {:>10} {:>12} {:>10}",
            "heuristic", "labels", "true spends", "decoys", "collisions", "scr"
        );
        for row in summary.iter().chain([&combined_summary]) {
            println!(
                "{:<22} {:>10} {:>12} {:>10} {:>12} {:>9.4}%",
                row["heuristic"].as_str().unwrap_or(""),
                row["labels"].as_u64().unwrap_or(0),
                row["true_spends"].as_u64().unwrap_or(0),
                row["decoys"].as_u64().unwrap_or(0),
                row["self_collisions"].as_u64().unwrap_or(0),
                row["scr"].as_f64().unwrap_or(0.0) * 100.0
            );
        }
        println!(
            "combined adds {} true spends and {} decoys; {} contradicted rings",
            combined.new_true_spends,
            combined.new_decoys,
            combined.contradicted.len()
        );
    }
    Ok(())
}

fn cmd_evaluate(
    label_paths: &[PathBuf],
    truth_path: Option<&Path>,
    reference_paths: &[PathBuf],
    out: &Path,
    as_json: bool,
) -> Result<(), CliError> {
    let truth = match (truth_path, reference_paths.is_empty()) {
        (Some(_), false) => {
            return Err(CliError::Usage(
                "pass either --truth or --reference, not both".into(),
            ))
        }
        (None, true) => {
            return Err(CliError::Usage(
                "a ground truth is required: --truth <file> or --reference <labels>...".into(),
            ))
        }
        (Some(path), true) => ingest::parse_ground_truth(path)?,
        (None, false) => {
            let mut sets = Vec::new();
            for path in reference_paths {
                sets.push(ingest::read_label_file(path)?);
            }
            let reference = labelset_as_truth(sets.iter());
            if reference.conflicting_rings > 0 {
                eprintln!(
                    "note: {} rings with conflicting reference spends were excluded",
                    reference.conflicting_rings
                );
            }
            reference.truth
        }
    };

    #[derive(serde::Serialize)]
    struct Row {
        set: String,
        file: String,
        labels: u64,
        tp: u64,
        fp: u64,
        precision: Option<f64>,
        true_spend_overlap: u64,
        true_spend_errors: u64,
        self_collisions: u64,
        labeled_members: u64,
        scr: f64,
    }

    let mut rows = Vec::new();
    for path in label_paths {
        let set = ingest::read_label_file(path)?;
        let report = precision_report(&set, &truth);
        let sc = self_collision_rate(&set);
        rows.push(Row {
            set: set.heuristic().name().into(),
            file: path.display().to_string(),
            labels: set.len() as u64,
            tp: report.tp,
            fp: report.fp,
            precision: report.precision,
            true_spend_overlap: report.true_spend_overlap,
            true_spend_errors: report.true_spend_errors,
            self_collisions: sc.conflicting,
            labeled_members: sc.labeled,
            scr: sc.rate,
        });
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &rows {
        w.serialize(row).map_err(|e| data_err("report", e))?;
    }
    let bytes = w.into_inner().map_err(|e| data_err("report", e))?;
    ingest::atomic_write(out, &bytes)?;

    if as_json {
        println!("{}", serde_json::to_string(&rows).expect("rows serialize"));
    } else {
        println!(
            "{:<22} {:>10} {:>10} {:>10} {:>10} {:>9}",
            "set", "tp", "fp", "precision", "overlap", "scr"
        );
        for row in &rows {
            let precision = row
                .precision
                .map(|p| format!("{:.2}%", p * 100.0))
                .unwrap_or_else(|| "-".into());
            println!(
                "{:<22} {:>10} {:>10} {:>10} {:>10} {:>8.4}%",
                row.set,
                row.tp,
                row.fp,
                precision,
                row.true_spend_overlap,
                row.scr * 100.0
            );
        }
    }
    Ok(())
}

fn cmd_compare(label_paths: &[PathBuf], out: &Path, as_json: bool) -> Result<(), CliError> {
    if label_paths.len() < 2 {
        return Err(CliError::Usage(
            "compare needs at least two --labels files".into(),
        ));
    }
    let mut sets = Vec::new();
    for path in label_paths {
        sets.push(ingest::read_label_file(path)?);
    }
    let refs: Vec<&LabelSet> = sets.iter().collect();
    let cells = pairwise_matrix(&refs);

    let mut w = csv::Writer::from_writer(Vec::new());
    for cell in &cells {
        w.serialize(cell).map_err(|e| data_err("matrix", e))?;
    }
    let bytes = w.into_inner().map_err(|e| data_err("matrix", e))?;
    ingest::atomic_write(out, &bytes)?;

    if as_json {
        println!("{}", serde_json::to_string(&cells).expect("cells serialize"));
    } else {
        println!(
            "{:<22} {:<22} {:>10} {:>10} {:>12} {:>12}",
            "h1", "h2", "agreements", "collisions", "collision %", "agreement %"
        );
        for cell in &cells {
            let fmt = |r: Option<f64>| {
                r.map(|v| format!("{:.2}%", v * 100.0))
                    .unwrap_or_else(|| "-".into())
            };
            println!(
                "{:<22} {:<22} {:>10} {:>10} {:>12} {:>12}",
                cell.h1.name(),
                cell.h2.name(),
                cell.agreements,
                cell.collisions,
                fmt(cell.collision_rate),
                fmt(cell.agreement_rate)
            );
        }
    }
    Ok(())
}

fn cmd_report(
    chain_path: &Path,
    labels_path: &Path,
    payouts_path: Option<&Path>,
    out: &Path,
    bucket: Bucket,
    burn: BurnKeys,
    as_json: bool,
) -> Result<(), CliError> {
    let chain = ingest::parse_chain_file(chain_path, &burn)?;
    let combined = ingest::read_label_file(labels_path)?;
    let payouts: Option<Vec<PayoutRecord>> = match payouts_path {
        Some(p) => Some(ingest::parse_payouts(p)?),
        None => None,
    };
    ensure_dir(out)?;

    let ring_series = effective_ring_size_series(&chain, &combined, bucket);
    write_csv(&out.join("ring_size.csv"), &ring_series)?;

    let per_heuristic = combined.split_by_heuristic();
    let share_refs: Vec<&LabelSet> = per_heuristic.iter().collect();
    let share_series = decoy_share_series(&chain, &share_refs, bucket);
    write_csv(&out.join("decoy_share.csv"), &share_series)?;

    let coinbase_series = coinbase_output_series(&chain, payouts.as_deref(), bucket);
    if payouts.is_some() {
        write_csv(&out.join("coinbase_outputs.csv"), &coinbase_series)?;
    } else {
        // Without payout data the ownership-share columns are absent,
        // not merely empty.
        #[derive(serde::Serialize)]
        struct PlainRow<'a> {
            bucket: &'a str,
            coinbase_outputs: u64,
        }
        let plain: Vec<PlainRow> = coinbase_series
            .iter()
            .map(|r| PlainRow {
                bucket: &r.bucket,
                coinbase_outputs: r.coinbase_outputs,
            })
            .collect();
        write_csv(&out.join("coinbase_outputs.csv"), &plain)?;
    }

    let summary = json!({
        "labels_file": labels_path.display().to_string(),
        "label_set": combined.heuristic().name(),
        "labels": combined.len(),
        "ring_size": ring_series,
        "decoy_share": share_series,
        "coinbase_outputs": coinbase_series,
    });
    ingest::atomic_write(
        &out.join("summary.json"),
        serde_json::to_string_pretty(&summary)
            .expect("summary serializes")
            .as_bytes(),
    )?;

    if as_json {
        println!("{summary}");
    } else {
        println!(
            "{:<10} {:>8} {:>16} {:>16}",
            "bucket", "rings", "mean effective", "mean nominal"
        );
        for row in &ring_series {
            println!(
                "{:<10} {:>8} {:>16.3} {:>16.3}",
                row.bucket, row.ring_count, row.mean_effective_ring_size, row.mean_nominal_ring_size
            );
        }
        let mut by_bucket: BTreeMap<&str, f64> = BTreeMap::new();
        for row in &share_series {
            *by_bucket.entry(row.bucket.as_str()).or_default() += row.share;
        }
        println!("decoy share (all heuristics): {:?}", by_bucket);
    }
    Ok(())
}

fn write_csv<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| data_err("table", e))?;
    }
    let bytes = w.into_inner().map_err(|e| data_err("table", e))?;
    ingest::atomic_write(path, &bytes)?;
    Ok(())
}
