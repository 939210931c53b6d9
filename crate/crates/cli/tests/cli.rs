mod common;

use std::fs;
use std::path::Path;

use common::{corpus_jsonl, doc_id, hrag, planted_queries, planted_query, stderr, stdout};
use serde_json::Value;

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

fn ingest(dir: &Path, corpus: &str) {
    write(dir, "corpus.jsonl", corpus);
    let out = hrag(dir, &["ingest", "corpus.jsonl"]);
    assert!(out.status.success(), "{}", stderr(&out));
}

fn search_json(dir: &Path, args: &[&str]) -> Vec<String> {
    let mut full = vec!["--format", "json"];
    full.extend_from_slice(args);
    let out = hrag(dir, &full);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    v["parents"].as_array().unwrap().iter().map(|p| p["doc_id"].as_str().unwrap().to_string()).collect()
}

const TWO_DOCS: &str = concat!(
    r#"{"document_id": "rivers", "text": "Rivers flow downhill. They carve valleys. Deltas form at the mouth. Floods enrich soil. Dams hold water back."}"#,
    "\n",
    r#"{"document_id": "stars", "text": "Stars burn hydrogen. Some end as white dwarfs. Massive ones explode. Neutron stars are dense. Light takes years to arrive."}"#,
    "\n",
);

#[test]
fn ingest_reports_counts_and_guards_the_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "corpus.jsonl", TWO_DOCS);
    let out = hrag(dir.path(), &["ingest", "corpus.jsonl"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).starts_with("docs=2 chunks=4 skipped=0"), "{}", stdout(&out));

    let again = hrag(dir.path(), &["ingest", "corpus.jsonl"]);
    assert_eq!(again.status.code(), Some(2));
    assert!(stderr(&again).contains("--force"), "{}", stderr(&again));
    assert!(hrag(dir.path(), &["ingest", "corpus.jsonl", "--force"]).status.success());
}

#[test]
fn missing_input_is_an_input_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = hrag(dir.path(), &["ingest", "nowhere.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nowhere.jsonl"), "{}", stderr(&out));

    let out = hrag(dir.path(), &["search", "anything"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("hrag ingest"), "{}", stderr(&out));
}

#[test]
fn exact_sentence_ranks_its_parent_first() {
    let dir = tempfile::tempdir().unwrap();
    ingest(dir.path(), TWO_DOCS);
    let ids = search_json(dir.path(), &["search", "Neutron stars are dense."]);
    assert_eq!(ids.first().map(String::as_str), Some("stars"));

    let out = hrag(dir.path(), &["search", "Deltas form at the mouth."]);
    let first = stdout(&out).lines().next().unwrap().to_string();
    assert!(first.trim_start().starts_with("1. rivers"), "{first}");
}

#[test]
fn alpha_selects_between_dense_and_sparse_legs() {
    // "zebra" is common and "lion" rare, so BM25 prefers the long lion
    // document while the cosine prefers the one-word zebra document.
    let corpus = [
        ("short", "Zebra."),
        ("long", "Lion cat dog bird fish frog toad newt moth wasp."),
        ("c1", "Zebra herd runs."),
        ("c2", "Zebra herd rests."),
        ("c3", "Zebra foal drinks."),
    ]
    .iter()
    .map(|(id, text)| format!("{}\n", serde_json::json!({"document_id": id, "text": text})))
    .collect::<String>();
    let dir = tempfile::tempdir().unwrap();
    ingest(dir.path(), &corpus);
    let dense = search_json(dir.path(), &["--k", "1", "--alpha", "1", "search", "zebra lion"]);
    let sparse = search_json(dir.path(), &["--k", "1", "--alpha", "0", "search", "zebra lion"]);
    assert_eq!(dense, ["short"]);
    assert_eq!(sparse, ["long"]);
}

#[test]
fn top_n_follows_flag_over_config_over_default() {
    let dir = tempfile::tempdir().unwrap();
    ingest(dir.path(), &corpus_jsonl(20, 3));
    let query = planted_query(4);
    assert_eq!(search_json(dir.path(), &["search", &query]).len(), 5);

    write(dir.path(), "cfg.toml", "[ranking]\ntop_n = 2\n");
    let from_file = search_json(dir.path(), &["--config", "cfg.toml", "search", &query]);
    assert_eq!(from_file.len(), 2);
    assert_eq!(from_file[0], doc_id(4));
    let from_flag = search_json(dir.path(), &["--config", "cfg.toml", "--top-n", "1", "search", &query]);
    assert_eq!(from_flag, [doc_id(4)]);

    write(dir.path(), "bad.toml", "[ranking]\ntopn = 2\n");
    let out = hrag(dir.path(), &["--config", "bad.toml", "search", &query]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn replay_writes_one_run_entry_per_user_turn() {
    let dir = tempfile::tempdir().unwrap();
    ingest(dir.path(), &corpus_jsonl(20, 5));
    let conv = serde_json::json!([{
        "conversation_id": "c1",
        "turns": [
            {"role": "user", "text": planted_query(1)},
            {"role": "assistant", "text": "First answer."},
            {"role": "user", "text": planted_query(2)},
            {"role": "assistant", "text": "Second answer."},
            {"role": "user", "text": planted_query(3)},
        ]
    }]);
    write(dir.path(), "convs.json", &conv.to_string());

    let out = hrag(dir.path(), &["replay", "convs.json"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let run = fs::read_to_string(dir.path().join("run.trec")).unwrap();
    let mut qids: Vec<&str> = run.lines().map(|l| l.split_whitespace().next().unwrap()).collect();
    qids.dedup();
    assert_eq!(qids, ["c1::1", "c1::2", "c1::3"]);
    let subs = fs::read_to_string(dir.path().join("submissions.jsonl")).unwrap();
    assert_eq!(subs.lines().count(), 1);
    let record: Value = serde_json::from_str(subs.lines().next().unwrap()).unwrap();
    assert_eq!(record["conversation_id"], "c1");
    assert!(record.get("turn_id").is_none());

    let out = hrag(dir.path(), &["replay", "convs.json", "--final-only", "false", "--output", "all.jsonl"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let all = fs::read_to_string(dir.path().join("all.jsonl")).unwrap();
    assert_eq!(all.lines().count(), 3);
}

#[test]
fn replay_of_empty_list_writes_empty_outputs() {
    let dir = tempfile::tempdir().unwrap();
    ingest(dir.path(), TWO_DOCS);
    write(dir.path(), "convs.json", "[]");
    let out = hrag(dir.path(), &["replay", "convs.json"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(fs::read_to_string(dir.path().join("run.trec")).unwrap(), "");
    assert_eq!(fs::read_to_string(dir.path().join("submissions.jsonl")).unwrap(), "");
}

#[test]
fn replay_with_malformed_record_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    ingest(dir.path(), TWO_DOCS);
    write(dir.path(), "convs.json", r#"[{"conversation_id": "ok", "turns": [{"role": "user", "text": "Do rivers flow?"}]}, {"turns": 3}]"#);
    let out = hrag(dir.path(), &["replay", "convs.json"]);
    assert_eq!(out.status.code(), Some(2));
    let subs = fs::read_to_string(dir.path().join("submissions.jsonl")).unwrap();
    assert_eq!(subs.lines().count(), 1);
}

#[test]
fn eval_of_ideal_run_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    let (_, qrels) = planted_queries([1, 2, 3]);
    write(dir.path(), "qrels.txt", &qrels);
    let run: String = [1, 2, 3]
        .iter()
        .map(|d| format!("q{d:03} Q0 {} 1 0.9 t\nq{d:03} Q0 other 2 0.1 t\n", doc_id(*d)))
        .chain(["extra Q0 other 1 0.5 t\n".to_string()])
        .collect();
    write(dir.path(), "run.trec", &run);

    let out = hrag(dir.path(), &["eval", "run.trec", "qrels.txt"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("nDCG@5 = 1.0000  Recall@5 = 1.0000"), "{text}");
    assert!(text.contains("run queries without judgments (ignored): 1"), "{text}");

    let out = hrag(dir.path(), &["--format", "json", "eval", "run.trec", "qrels.txt"]);
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["mean_ndcg"], serde_json::json!([1.0, 1.0, 1.0]));
}

#[test]
fn eval_rejects_malformed_qrels() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "qrels.txt", "q1 0 d1\n");
    write(dir.path(), "run.trec", "q1 Q0 d1 1 0.5 t\n");
    let out = hrag(dir.path(), &["eval", "run.trec", "qrels.txt"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("qrels.txt"), "{}", stderr(&out));
}

#[test]
fn sweep_with_narrowed_grid_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    ingest(dir.path(), &corpus_jsonl(30, 9));
    let (queries, qrels) = planted_queries(0..10);
    write(dir.path(), "queries.tsv", &queries);
    write(dir.path(), "qrels.txt", &qrels);
    let args = ["sweep", "queries.tsv", "qrels.txt", "--alphas", "0.7", "--ks", "30"];
    let first = hrag(dir.path(), &args);
    assert!(first.status.success(), "{}", stderr(&first));
    let table = stdout(&first);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3, "{table}");
    assert!(lines[0].starts_with("alpha,rank_parents,k,ndcg@1"));
    assert!(lines[1].starts_with("0.7,true,30,"), "{}", lines[1]);
    assert!(lines[2].starts_with("0.7,false,30,"), "{}", lines[2]);
    assert_eq!(stdout(&hrag(dir.path(), &args)), table);
}

#[test]
fn help_lists_flags_with_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = hrag(dir.path(), &["--help"]);
    assert!(out.status.success());
    let help = stdout(&out);
    for needle in ["--alpha", "[default: 0.7]", "--k", "[default: 50]", "--top-n", "[default: 5]", "--strategy"] {
        assert!(help.contains(needle), "missing {needle} in\n{help}");
    }
    for sub in ["ingest", "search", "replay", "eval", "sweep"] {
        assert!(help.contains(sub), "missing {sub}");
    }
}
