//! End-to-end tests of the `ringtrace` binary.

mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ringtrace::chain::{BurnKeys, ChainStore, TransactionRecord};
use ringtrace::heuristics::{propagate_consequences, zero_mixin};
use ringtrace::ingest::{read_label_file, write_chain_file};
use ringtrace::labels::Claim;
use ringtrace::reaction::combined_chain_reaction;
use ringtrace::synth::{generate, GeneratorConfig, RateDist};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ringtrace"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "command {args:?} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_err(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(!out.status.success(), "command {args:?} unexpectedly passed");
    out
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// The classic cascade fixture: singleton rings {6} and {8}, then
/// {6,7,8} and {7,8,9}.
fn write_cascade_chain(dir: &Path) -> PathBuf {
    let burn = BurnKeys::default();
    let txs = vec![
        TransactionRecord::new(
            "cb",
            0,
            1_600_000_000,
            true,
            vec![],
            vec![],
            (0..10).map(|g| (g, format!("pk{g}"))).collect(),
            &burn,
        ),
        TransactionRecord::new("s1", 2, 1_600_000_200, false, vec![], vec![vec![6]], vec![], &burn),
        TransactionRecord::new("s2", 3, 1_600_000_300, false, vec![], vec![vec![8]], vec![], &burn),
        TransactionRecord::new(
            "s3",
            4,
            1_600_000_400,
            false,
            vec![],
            vec![vec![6, 7, 8]],
            vec![],
            &burn,
        ),
        TransactionRecord::new(
            "s4",
            5,
            1_600_000_500,
            false,
            vec![],
            vec![vec![7, 8, 9]],
            vec![],
            &burn,
        ),
    ];
    let chain = ChainStore::build(txs).unwrap();
    let path = dir.join("cascade.jsonl");
    write_chain_file(&chain, &path).unwrap();
    path
}

fn small_gen_config() -> GeneratorConfig {
    GeneratorConfig {
        seed: 99,
        blocks: 90,
        txs_per_block: RateDist::Fixed(3),
        ring_size: 5,
        wallet_count: 12,
        miner_count: 4,
        payout_fanout: (2, 5),
        zero_mixin_share: 0.25,
        ..GeneratorConfig::default()
    }
}

#[test]
fn generate_writes_three_files_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.toml");
    std::fs::write(&config_path, small_gen_config().to_toml()).unwrap();

    let out1 = dir.path().join("run1");
    run_ok(&[
        "generate",
        "--config",
        path_str(&config_path),
        "--out",
        path_str(&out1),
    ]);
    for name in ["chain.jsonl", "payouts.csv", "truth.csv"] {
        assert!(out1.join(name).exists(), "{name} missing");
    }

    let out2 = dir.path().join("run2");
    run_ok(&[
        "generate",
        "--config",
        path_str(&config_path),
        "--out",
        path_str(&out2),
    ]);
    for name in ["chain.jsonl", "payouts.csv", "truth.csv"] {
        let a = std::fs::read(out1.join(name)).unwrap();
        let b = std::fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn generate_with_missing_config_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let out = run_err(&[
        "generate",
        "--config",
        path_str(&missing),
        "--out",
        path_str(&dir.path().join("out")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("nope.toml"), "stderr: {stderr}");
}

#[test]
fn run_zero_mixin_on_cascade_reports_four_spends() {
    let dir = tempfile::tempdir().unwrap();
    let chain_path = write_cascade_chain(dir.path());
    let out_dir = dir.path().join("labels");
    let out = run_ok(&[
        "run",
        "--chain",
        path_str(&chain_path),
        "--heuristics",
        "zero-mixin",
        "--out",
        path_str(&out_dir),
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("combined"), "stdout: {stdout}");

    let combined = read_label_file(&out_dir.join("combined.labels.csv")).unwrap();
    let spends = combined
        .iter()
        .filter(|l| l.claim == Claim::TrueSpend)
        .count();
    assert_eq!(spends, 4, "cascade resolves all four rings");
}

#[test]
fn run_requires_payouts_for_p2pool() {
    let dir = tempfile::tempdir().unwrap();
    let chain_path = write_cascade_chain(dir.path());
    let out = run_err(&[
        "run",
        "--chain",
        path_str(&chain_path),
        "--heuristics",
        "p2pool-merge",
        "--out",
        path_str(&dir.path().join("x")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("payouts"), "stderr: {stderr}");
}

#[test]
fn run_rejects_unknown_heuristic_names() {
    let dir = tempfile::tempdir().unwrap();
    let chain_path = write_cascade_chain(dir.path());
    let out = run_err(&[
        "run",
        "--chain",
        path_str(&chain_path),
        "--heuristics",
        "guess-newest",
        "--out",
        path_str(&dir.path().join("x")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("zero-mixin"), "lists valid names: {stderr}");
}

#[test]
fn run_output_matches_library_recomputation() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.toml");
    std::fs::write(&config_path, small_gen_config().to_toml()).unwrap();
    let data = dir.path().join("data");
    run_ok(&[
        "generate",
        "--config",
        path_str(&config_path),
        "--out",
        path_str(&data),
    ]);
    let labels_dir = dir.path().join("labels");
    run_ok(&[
        "run",
        "--chain",
        path_str(&data.join("chain.jsonl")),
        "--heuristics",
        "all",
        "--payouts",
        path_str(&data.join("payouts.csv")),
        "--out",
        path_str(&labels_dir),
    ]);

    let ledger = generate(&small_gen_config()).unwrap();
    let zm = zero_mixin(&ledger.chain);
    let expected = propagate_consequences(&zm, &ledger.chain);
    let from_file = read_label_file(&labels_dir.join("zero-mixin.labels.csv")).unwrap();
    assert!(from_file.same_labels(&expected), "zero-mixin file mismatch");

    let combined_file = read_label_file(&labels_dir.join("combined.labels.csv")).unwrap();
    assert!(!combined_file.is_empty());
    // Recompute the combined set over the same raw inputs the CLI used.
    let window = ringtrace::heuristics::TimeWindow::default_bug_window();
    let since = Some(ringtrace::heuristics::default_since());
    let raw = [
        zero_mixin(&ledger.chain),
        ringtrace::reaction::chain_reaction(&ledger.chain, &zero_mixin(&ledger.chain)).labels,
        ringtrace::heuristics::ten_block_decoy_bug(&ledger.chain, &window),
        ringtrace::heuristics::differ_by_one(&ledger.chain),
        ringtrace::heuristics::mordinal_decoys(&ledger.chain),
        ringtrace::heuristics::coinbase_decoys(&ledger.chain, 90, since),
        ringtrace::heuristics::p2pool_output_merging(&ledger.chain, &ledger.payouts).unwrap(),
    ];
    let combined = combined_chain_reaction(&ledger.chain, raw.iter());
    assert!(
        combined_file.same_labels(&combined.labels),
        "combined file mismatch"
    );
}

#[test]
fn evaluate_scores_zero_mixin_at_full_precision() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.toml");
    std::fs::write(&config_path, small_gen_config().to_toml()).unwrap();
    let data = dir.path().join("data");
    run_ok(&[
        "generate",
        "--config",
        path_str(&config_path),
        "--out",
        path_str(&data),
    ]);
    let labels_dir = dir.path().join("labels");
    run_ok(&[
        "run",
        "--chain",
        path_str(&data.join("chain.jsonl")),
        "--heuristics",
        "zero-mixin",
        "--out",
        path_str(&labels_dir),
    ]);
    let report = dir.path().join("precision.csv");
    let out = run_ok(&[
        "--json",
        "evaluate",
        "--labels",
        path_str(&labels_dir.join("zero-mixin.labels.csv")),
        "--truth",
        path_str(&data.join("truth.csv")),
        "--out",
        path_str(&report),
    ]);
    let parsed: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("json summary");
    assert_eq!(parsed[0]["precision"], serde_json::json!(1.0));
    assert_eq!(parsed[0]["fp"], serde_json::json!(0));
    assert!(report.exists());
}

#[test]
fn evaluate_reports_absent_precision_for_disjoint_labels() {
    let dir = tempfile::tempdir().unwrap();
    let chain_path = write_cascade_chain(dir.path());
    let labels_dir = dir.path().join("labels");
    run_ok(&[
        "run",
        "--chain",
        path_str(&chain_path),
        "--heuristics",
        "zero-mixin",
        "--out",
        path_str(&labels_dir),
    ]);
    // Truth that covers no labeled ring.
    let truth_path = dir.path().join("truth.csv");
    std::fs::write(
        &truth_path,
        "tx_id,input_position,true_spend_global_index\nunrelated,0,1\n",
    )
    .unwrap();
    let out = run_ok(&[
        "--json",
        "evaluate",
        "--labels",
        path_str(&labels_dir.join("zero-mixin.labels.csv")),
        "--truth",
        path_str(&truth_path),
        "--out",
        path_str(&dir.path().join("p.csv")),
    ]);
    let parsed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(parsed[0]["precision"], serde_json::Value::Null);
}

#[test]
fn evaluate_against_reference_labels_instead_of_truth() {
    let dir = tempfile::tempdir().unwrap();
    let chain_path = write_cascade_chain(dir.path());
    let labels_dir = dir.path().join("labels");
    run_ok(&[
        "run",
        "--chain",
        path_str(&chain_path),
        "--heuristics",
        "zero-mixin,chain-reaction",
        "--out",
        path_str(&labels_dir),
    ]);
    // Score the zero-mixin set against the chain-reaction set used as a
    // high-confidence reference; everything zero-mixin claims is a
    // subset of the reference, so precision is 1.
    let out = run_ok(&[
        "--json",
        "evaluate",
        "--labels",
        path_str(&labels_dir.join("zero-mixin.labels.csv")),
        "--reference",
        path_str(&labels_dir.join("chain-reaction.labels.csv")),
        "--out",
        path_str(&dir.path().join("p.csv")),
    ]);
    let parsed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(parsed[0]["precision"], serde_json::json!(1.0));

    // Passing both truth and reference is a usage error.
    let out = run_err(&[
        "evaluate",
        "--labels",
        path_str(&labels_dir.join("zero-mixin.labels.csv")),
        "--truth",
        path_str(&dir.path().join("whatever.csv")),
        "--reference",
        path_str(&labels_dir.join("chain-reaction.labels.csv")),
        "--out",
        path_str(&dir.path().join("p2.csv")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_flags_gate_the_heuristic_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.toml");
    std::fs::write(
        &config_path,
        GeneratorConfig {
            wallet_population: vec![ringtrace::synth::PolicyWeight {
                policy: ringtrace::synth::WalletPolicy::TenBlockBug,
                weight: 1.0,
            }],
            ..small_gen_config()
        }
        .to_toml(),
    )
    .unwrap();
    let data = dir.path().join("data");
    run_ok(&[
        "generate",
        "--config",
        path_str(&config_path),
        "--out",
        path_str(&data),
    ]);
    let chain_path = data.join("chain.jsonl");
    let chain = path_str(&chain_path);

    // A window long before the chain's 2022 timestamps suppresses every
    // ten-block label.
    let narrow = dir.path().join("narrow");
    run_ok(&[
        "run",
        "--chain",
        chain,
        "--heuristics",
        "ten-block-decoy-bug",
        "--window-start",
        "2015-01-01",
        "--window-end",
        "2015-12-31",
        "--out",
        path_str(&narrow),
    ]);
    let set = read_label_file(&narrow.join("ten-block-decoy-bug.labels.csv")).unwrap();
    assert!(set.is_empty());

    let wide = dir.path().join("wide");
    run_ok(&[
        "run",
        "--chain",
        chain,
        "--heuristics",
        "ten-block-decoy-bug",
        "--out",
        path_str(&wide),
    ]);
    let set = read_label_file(&wide.join("ten-block-decoy-bug.labels.csv")).unwrap();
    assert!(!set.is_empty());

    // The coinbase date gate: the chain sits in 2022, so the default
    // gate keeps labels and a later --since drops them all; "none"
    // disables the gate.
    let gated = dir.path().join("gated");
    run_ok(&[
        "run",
        "--chain",
        chain,
        "--heuristics",
        "coinbase",
        "--since",
        "2030-01-01",
        "--out",
        path_str(&gated),
    ]);
    assert!(read_label_file(&gated.join("coinbase.labels.csv")).unwrap().is_empty());

    let open = dir.path().join("open");
    run_ok(&[
        "run",
        "--chain",
        chain,
        "--heuristics",
        "coinbase",
        "--since",
        "none",
        "--out",
        path_str(&open),
    ]);
    assert!(!read_label_file(&open.join("coinbase.labels.csv")).unwrap().is_empty());
}

#[test]
fn compare_identical_sets_and_usage_error_on_single_input() {
    let dir = tempfile::tempdir().unwrap();
    let chain_path = write_cascade_chain(dir.path());
    let labels_dir = dir.path().join("labels");
    run_ok(&[
        "run",
        "--chain",
        path_str(&chain_path),
        "--heuristics",
        "zero-mixin,chain-reaction",
        "--out",
        path_str(&labels_dir),
    ]);
    let zm = labels_dir.join("zero-mixin.labels.csv");
    let matrix = dir.path().join("matrix.csv");
    let out = run_ok(&[
        "--json",
        "compare",
        "--labels",
        path_str(&zm),
        "--labels",
        path_str(&zm),
        "--out",
        path_str(&matrix),
    ]);
    let parsed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(parsed[0]["collision_rate"], serde_json::json!(0.0));
    assert_eq!(parsed[0]["agreement_rate"], serde_json::json!(1.0));

    let out = run_err(&[
        "compare",
        "--labels",
        path_str(&zm),
        "--out",
        path_str(&matrix),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn report_spans_three_buckets_and_empty_labels_keep_nominal_size() {
    let dir = tempfile::tempdir().unwrap();
    // Three months: January, February, March 2022.
    let burn = BurnKeys::default();
    let jan = 1_641_038_400i64;
    let feb = 1_643_716_800i64;
    let mar = 1_646_136_000i64;
    let txs = vec![
        TransactionRecord::new(
            "cb",
            0,
            jan,
            true,
            vec![],
            vec![],
            (0..6).map(|g| (g, format!("pk{g}"))).collect(),
            &burn,
        ),
        TransactionRecord::new("a", 4, jan + 60, false, vec![], vec![vec![0, 1]], vec![], &burn),
        TransactionRecord::new("b", 8, feb, false, vec![], vec![vec![2, 3]], vec![], &burn),
        TransactionRecord::new("c", 12, mar, false, vec![], vec![vec![4, 5]], vec![], &burn),
    ];
    let chain = ChainStore::build(txs).unwrap();
    let chain_path = dir.path().join("chain.jsonl");
    write_chain_file(&chain, &chain_path).unwrap();

    let empty_labels = dir.path().join("empty.labels.csv");
    std::fs::write(
        &empty_labels,
        "tx_id,input_position,member_global_index,claim,heuristic,derived\n",
    )
    .unwrap();

    let report_dir = dir.path().join("report");
    run_ok(&[
        "report",
        "--chain",
        path_str(&chain_path),
        "--labels",
        path_str(&empty_labels),
        "--out",
        path_str(&report_dir),
    ]);
    let ring_size = std::fs::read_to_string(report_dir.join("ring_size.csv")).unwrap();
    let rows: Vec<&str> = ring_size.lines().skip(1).collect();
    assert_eq!(rows.len(), 3, "three monthly buckets: {ring_size}");
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        // mean effective == mean nominal == 2 for empty labels
        assert_eq!(cols[1], "2.0");
        assert_eq!(cols[2], "2.0");
    }

    // Without payouts the ownership-share columns are absent entirely.
    let coinbase = std::fs::read_to_string(report_dir.join("coinbase_outputs.csv")).unwrap();
    assert_eq!(coinbase.lines().next(), Some("bucket,coinbase_outputs"));
    assert!(report_dir.join("summary.json").exists());
}
