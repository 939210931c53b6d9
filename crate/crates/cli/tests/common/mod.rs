//! Synthetic corpora, conversations and binary helpers shared by the CLI tests.

#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::Path;
use std::process::{Command, Output};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn hrag(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hrag"))
        .current_dir(dir)
        .args(args)
        .env_remove("HRAG_LOG")
        .output()
        .expect("spawn hrag")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

const SYLLABLES: [&str; 16] = ["ka", "lo", "mi", "ren", "tu", "sa", "vo", "pel", "dri", "nu", "ost", "ja", "fe", "gor", "bi", "esh"];

fn word(rng: &mut ChaCha8Rng) -> String {
    (0..rng.random_range(2..=3)).map(|_| *SYLLABLES.choose(rng).unwrap()).collect()
}

/// Tokens that occur in exactly one document of a synthetic corpus.
pub fn planted_terms(doc: usize) -> [String; 4] {
    ["zeta", "quill", "marrow", "tansy"].map(|stem| format!("{stem}{doc:03}"))
}

pub fn doc_id(doc: usize) -> String {
    format!("doc{doc:03}")
}

/// JSONL corpus of `n` documents. Each has 4 to 7 filler sentences over a
/// small shared vocabulary plus one sentence made only of its planted terms.
pub fn corpus_jsonl(n: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab: Vec<String> = (0..150).map(|_| word(&mut rng)).collect();
    let mut out = String::new();
    for d in 0..n {
        let mut sentences: Vec<String> = (0..rng.random_range(4..=7))
            .map(|_| {
                let words: Vec<&str> =
                    (0..rng.random_range(5..=10)).map(|_| vocab.choose(&mut rng).unwrap().as_str()).collect();
                let mut s = words.join(" ");
                s[..1].make_ascii_uppercase();
                s.push('.');
                s
            })
            .collect();
        let mut planted = planted_terms(d).join(" ");
        planted[..1].make_ascii_uppercase();
        planted.push('.');
        let at = rng.random_range(0..=sentences.len());
        sentences.insert(at, planted);
        let record = serde_json::json!({"document_id": doc_id(d), "text": sentences.join(" ")});
        writeln!(out, "{record}").unwrap();
    }
    out
}

/// A question naming the planted terms of `doc`.
pub fn planted_query(doc: usize) -> String {
    format!("Tell me about {}?", planted_terms(doc).join(" "))
}

/// Queries file and qrels judging each planted query against its document.
pub fn planted_queries(docs: impl IntoIterator<Item = usize>) -> (String, String) {
    let (mut queries, mut qrels) = (String::new(), String::new());
    for d in docs {
        writeln!(queries, "q{d:03}\t{}", planted_query(d)).unwrap();
        writeln!(qrels, "q{d:03} 0 {} 1", doc_id(d)).unwrap();
    }
    (queries, qrels)
}

/// `count` conversations of 2 or 3 user turns, each asking about a planted
/// document, with reference assistant turns in between. Returns the JSON
/// file and qrels keyed by `{conversation_id}::{turn}`.
pub fn conversations(count: usize, n_docs: usize, seed: u64) -> (String, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut convs = Vec::new();
    let mut qrels = String::new();
    for c in 0..count {
        let id = format!("conv{c:02}");
        let mut turns = Vec::new();
        for t in 0..rng.random_range(2..=3) {
            let d = rng.random_range(0..n_docs);
            if t > 0 {
                turns.push(serde_json::json!({"role": "assistant", "text": format!("Reference answer {t}.")}));
            }
            turns.push(serde_json::json!({"role": "user", "text": planted_query(d)}));
            writeln!(qrels, "{id}::{} 0 {} 1", t + 1, doc_id(d)).unwrap();
        }
        convs.push(serde_json::json!({"conversation_id": id, "turns": turns}));
    }
    (serde_json::to_string_pretty(&convs).unwrap(), qrels)
}
