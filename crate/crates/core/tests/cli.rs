mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{csv_rows, write_project, Reply, StubServer, TAXONOMY_2};
use hawkes_cascade::cascade::load_run;
use hawkes_cascade::event_stream::load_stream;
use hawkes_cascade::hawkes::FitResult;
use hawkes_cascade::pipeline::{IngestReport, Report};
use serde_json::json;

fn cli(config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hawkes-cascade"))
        .args(args)
        .arg("--config")
        .arg(config)
        .env_remove("HAWKES_CASCADE_BASE_URL")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn ingest_report(dir: &Path) -> IngestReport {
    serde_json::from_str(&std::fs::read_to_string(dir.join("out/ingest_report.json")).unwrap()).unwrap()
}

/// Two-node stream with two bursts and a quiet tail.
fn small_rows() -> Vec<(f64, &'static str, String)> {
    (0..40)
        .map(|i| {
            let h = i as f64 * 1.7 + if i % 5 == 0 { 0.0 } else { 0.3 * (i % 5) as f64 };
            let domain = if i % 3 == 0 { "local.example" } else { "wire.example" };
            (h, domain, format!("Launch update number {i} from crew"))
        })
        .collect()
}

fn small_csv() -> String {
    let rows = small_rows();
    csv_rows(&rows.iter().map(|(h, d, t)| (*h, *d, t.as_str())).collect::<Vec<_>>())
}

#[test]
fn empty_input_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_project(dir.path(), TAXONOMY_2, "timestamp,domain,title,url,language\n", json!({}));
    let out = cli(&config, &["ingest"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("no valid"), "{}", stderr(&out));
}

#[test]
fn missing_config_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&dir.path().join("absent.json"), &["ingest"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn duplicate_row_is_dropped_once() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = small_csv();
    let dup = csv.lines().nth(5).unwrap().to_string();
    csv.push_str(&dup);
    csv.push('\n');
    let config = write_project(dir.path(), TAXONOMY_2, &csv, json!({}));
    let out = cli(&config, &["ingest"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = ingest_report(dir.path());
    assert_eq!(report.raw_count, 41);
    assert_eq!(report.deduped_count, report.raw_count - 1);
    assert_eq!(report.event_count, 40);
    let counts: Vec<usize> = report.per_node_counts.iter().map(|c| c.count).collect();
    assert_eq!(counts, [26, 14]);
}

#[test]
fn sample_corpus_has_expected_node_counts() {
    let dir = tempfile::tempdir().unwrap();
    let sample = common::sample_dir();
    let csv = std::fs::read_to_string(sample.join("articles.csv")).unwrap();
    let taxonomy = std::fs::read_to_string(sample.join("taxonomy.json")).unwrap();
    let config = write_project(dir.path(), &taxonomy, &csv, json!({"ingest": {"language": "English"}}));
    let out = cli(&config, &["ingest"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = ingest_report(dir.path());
    let counts: Vec<(String, usize)> = report.per_node_counts.iter().map(|c| (c.label.clone(), c.count)).collect();
    let expect = [
        ("local_tv", 69),
        ("mass_market", 37),
        ("specialist_science_tech", 25),
        ("business_finance", 31),
        ("general_news", 86),
    ];
    assert_eq!(counts, expect.map(|(l, c)| (l.to_string(), c)));
    assert_eq!((report.train_count, report.test_count), (198, 50));
}

#[test]
fn supercritical_grid_exits_with_no_stable_model() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<(f64, &str, String)> = (0..300)
        .map(|k| (100.0 * (1.0 - 0.99f64.powi(k)), "wire.example", format!("item {k}")))
        .collect();
    let csv = csv_rows(&rows.iter().map(|(h, d, t)| (*h, *d, t.as_str())).collect::<Vec<_>>());
    let config = write_project(dir.path(), TAXONOMY_2, &csv, json!({"fit": {"beta_grid": [0.1]}}));
    assert_eq!(code(&cli(&config, &["ingest"])), 0);
    let out = cli(&config, &["fit"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(!dir.path().join("out/fit.json").exists());
    let grid = std::fs::read_to_string(dir.path().join("out/fit_grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 2);
    assert!(grid.lines().nth(1).unwrap().ends_with("false"));
}

#[test]
fn masked_poisson_fit_recovers_rates() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_project(
        dir.path(),
        TAXONOMY_2,
        &small_csv(),
        json!({"fit": {"beta_grid": [0.5], "edge_mask": [[false, false], [false, false]]}}),
    );
    assert_eq!(code(&cli(&config, &["ingest"])), 0);
    let out = cli(&config, &["fit"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let fit = FitResult::from_json(&std::fs::read_to_string(dir.path().join("out/fit.json")).unwrap()).unwrap();
    let stream = load_stream(&dir.path().join("out/events.jsonl")).unwrap();
    let counts = stream.node_counts();
    for i in 0..2 {
        let expect = counts[i] as f64 / stream.horizon_hours;
        assert!((fit.params.mu[i] - expect).abs() < 1e-6 * expect, "{} vs {expect}", fit.params.mu[i]);
    }
    assert!(fit.stable);
    assert_eq!(fit.param_count, 3);
}

fn mock_pipeline(config: &Path, policy: &str) {
    for cmd in ["ingest", "fit", "simulate", "evaluate"] {
        let out = cli(config, &[cmd, "--policy", policy, "--mock-generator", "--mock-embedder"]);
        assert_eq!(code(&out), 0, "{cmd}: {}", stderr(&out));
    }
}

#[test]
fn commands_are_idempotent_with_mocks() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_project(dir.path(), TAXONOMY_2, &small_csv(), json!({"run": {"event_cap": 12}}));
    mock_pipeline(&config, "hawkes");
    let out = dir.path().join("out");
    let snapshot = |p: &str| std::fs::read(out.join(p)).unwrap();
    let files = [
        "events.jsonl",
        "fit.json",
        "fit_grid.csv",
        "runs/hawkes/run_000.jsonl",
        "runs/hawkes/run_001.jsonl",
        "runs/hawkes/manifest.json",
        "eval/hawkes/diagnostics.csv",
        "eval/hawkes/summary.json",
        "eval/hawkes/moving_average.csv",
    ];
    let first: Vec<Vec<u8>> = files.iter().map(|f| snapshot(f)).collect();
    mock_pipeline(&config, "hawkes");
    for (f, before) in files.iter().zip(&first) {
        assert_eq!(&snapshot(f), before, "{f} changed");
    }
    let run = load_run(&out.join("runs/hawkes/run_000.jsonl")).unwrap();
    assert!(run.events.len() <= 12);
    let other = load_run(&out.join("runs/hawkes/run_001.jsonl")).unwrap();
    assert_ne!(run.config.rng_seed, other.config.rng_seed);
}

#[test]
fn seed_flag_changes_runs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_project(dir.path(), TAXONOMY_2, &small_csv(), json!({"run": {"event_cap": 12}}));
    mock_pipeline(&config, "last_k");
    let path = dir.path().join("out/runs/last_k/run_000.jsonl");
    let a = std::fs::read(&path).unwrap();
    let out = cli(&config, &["simulate", "--policy", "last_k", "--mock-generator", "--seed", "7"]);
    assert_eq!(code(&out), 0);
    assert_ne!(std::fs::read(&path).unwrap(), a);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/runs/last_k/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["master_seed"], 7);
}

#[test]
fn post_split_seeds_from_last_training_event() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_project(dir.path(), TAXONOMY_2, &small_csv(), json!({"run": {"event_cap": 40}}));
    for cmd in ["ingest", "fit", "simulate", "evaluate"] {
        let out = cli(&config, &[cmd, "--post-split", "--mock-generator", "--mock-embedder"]);
        assert_eq!(code(&out), 0, "{cmd}: {}", stderr(&out));
    }
    let train = load_stream(&dir.path().join("out/train.jsonl")).unwrap();
    let test = load_stream(&dir.path().join("out/test.jsonl")).unwrap();
    let run = load_run(&dir.path().join("out/runs/hawkes/run_000.jsonl")).unwrap();
    let last = train.events.last().unwrap();
    assert_eq!(run.seed.tau, last.tau);
    assert_eq!(run.seed.node, last.node);
    assert_eq!(run.seed.text, last.text);
    assert_eq!(run.config.horizon_end, Some(test.horizon_hours));
    assert!(run.events.iter().all(|e| e.tau <= test.horizon_hours));
}

#[test]
fn generator_outage_persists_partial_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_project(
        dir.path(),
        TAXONOMY_2,
        &small_csv(),
        json!({"generation": {"retries": 1, "backoff_ms": 1, "request_timeout": 5.0}, "run_count": 1}),
    );
    assert_eq!(code(&cli(&config, &["ingest"])), 0);
    assert_eq!(code(&cli(&config, &["fit"])), 0);
    let server = StubServer::start(vec![
        Reply::ok(r#"{"response": "First generated update."}"#),
        Reply::ok(r#"{"response": "Second generated update."}"#),
        Reply::status(500, "down"),
    ]);
    let out = Command::new(env!("CARGO_BIN_EXE_hawkes-cascade"))
        .args(["simulate", "--config"])
        .arg(&config)
        .env("HAWKES_CASCADE_BASE_URL", &server.url)
        .output()
        .unwrap();
    assert_eq!(code(&out), 4, "{}", stderr(&out));
    let run = load_run(&dir.path().join("out/runs/hawkes/run_000.jsonl")).unwrap();
    assert!(run.aborted());
    assert_eq!(run.events.len(), 2);
    assert_eq!(run.events[1].text, "Second generated update.");
}

#[test]
fn empty_completion_exits_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_project(dir.path(), TAXONOMY_2, &small_csv(), json!({"run_count": 1}));
    assert_eq!(code(&cli(&config, &["ingest"])), 0);
    assert_eq!(code(&cli(&config, &["fit"])), 0);
    let server = StubServer::start(vec![Reply::ok(r#"{"response": "  "}"#)]);
    let out = Command::new(env!("CARGO_BIN_EXE_hawkes-cascade"))
        .args(["simulate", "--config"])
        .arg(&config)
        .env("HAWKES_CASCADE_BASE_URL", &server.url)
        .output()
        .unwrap();
    assert_eq!(code(&out), 5, "{}", stderr(&out));
}

#[test]
fn report_lists_missing_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_project(dir.path(), TAXONOMY_2, &small_csv(), json!({}));
    let out = cli(&config, &["report"]);
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    for p in ["hawkes", "last_k", "random_k"] {
        assert!(err.contains(&format!("eval/{p}/summary.json")), "{err}");
    }
}

#[test]
fn report_orders_policies_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_project(dir.path(), TAXONOMY_2, &small_csv(), json!({"run": {"event_cap": 10}}));
    mock_pipeline(&config, "hawkes");
    let out = cli(&config, &["report"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let single = Report::read_csv(&std::fs::read_to_string(dir.path().join("out/report.csv")).unwrap()).unwrap();
    assert_eq!(single.rows.len(), 1);

    for policy in ["random_k", "last_k"] {
        for cmd in ["simulate", "evaluate"] {
            assert_eq!(code(&cli(&config, &[cmd, "--policy", policy, "--mock-generator", "--mock-embedder"])), 0);
        }
    }
    let out = cli(&config, &["report"]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(dir.path().join("out/report.txt")).unwrap();
    let order: Vec<&str> = text.lines().skip(2).map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(order, ["hawkes", "last_k", "random_k"]);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim_end(), text.trim_end());

    let report = Report::read_csv(&std::fs::read_to_string(dir.path().join("out/report.csv")).unwrap()).unwrap();
    let summaries: Vec<_> = ["hawkes", "last_k", "random_k"]
        .iter()
        .map(|p| {
            serde_json::from_str(
                &std::fs::read_to_string(dir.path().join(format!("out/eval/{p}/summary.json"))).unwrap(),
            )
            .unwrap()
        })
        .collect();
    assert_eq!(report, Report::from_summaries(&summaries));
}

#[test]
fn evaluate_requires_runs_for_explicit_policy() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_project(dir.path(), TAXONOMY_2, &small_csv(), json!({}));
    assert_eq!(code(&cli(&config, &["ingest"])), 0);
    let out = cli(&config, &["evaluate", "--policy", "random_k", "--mock-embedder"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("manifest.json"));
}

#[test]
fn unknown_policy_is_rejected_by_parser() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_project(dir.path(), TAXONOMY_2, &small_csv(), json!({}));
    let out = cli(&config, &["simulate", "--policy", "oracle"]);
    assert_ne!(code(&out), 0);
}

#[test]
fn simulated_stable_stream_refits_stable() {
    use hawkes_cascade::cascade::simulate;
    use hawkes_cascade::event_stream::{save_stream, Event, EventStream};
    use hawkes_cascade::hawkes::HawkesParams;
    use hawkes_cascade::pipeline::{cmd_fit, PipelineConfig};
    use rand::SeedableRng;

    let dir = tempfile::tempdir().unwrap();
    let truth = HawkesParams::new(vec![0.3, 0.2], vec![vec![0.2, 0.1], vec![0.05, 0.15]], 0.5).unwrap();
    let arrivals = simulate(&truth, 1500.0, &mut rand_chacha::ChaCha8Rng::seed_from_u64(9)).unwrap();
    let events = arrivals.iter().map(|a| Event::new(a.tau, a.node, format!("e{}", a.tau))).collect();
    let stream = EventStream::new(events, chrono::DateTime::UNIX_EPOCH, 1500.0, 2).unwrap();
    let mut config = PipelineConfig::default();
    config.paths.work_dir = dir.path().to_path_buf();
    config.fit.beta_grid = vec![0.25, 0.5, 1.0];
    save_stream(&stream, &dir.path().join("events.jsonl")).unwrap();
    let fit = cmd_fit(&config).unwrap();
    assert!(fit.stable && fit.spectral_radius < 1.0);
    let saved = FitResult::from_json(&std::fs::read_to_string(dir.path().join("fit.json")).unwrap()).unwrap();
    assert_eq!(saved, fit);
    assert_eq!(std::fs::read_to_string(dir.path().join("fit_grid.csv")).unwrap().lines().count(), 4);
}
