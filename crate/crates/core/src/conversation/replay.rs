//! Batch replay of a conversations file through the full turn pipeline.
//!
//! Input is a JSON array of `{"conversation_id", "turns": [{"role", "text"}]}`
//! records with roles `user` or `assistant`. Each user turn is issued in
//! order; run-file query ids are `{conversation_id}::{n}` with `n` the
//! 1-based user-turn ordinal.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{run_turn, ConversationState, Providers, TurnConfig};
use crate::eval::RunFile;
use crate::pipeline::Retriever;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("conversations file is not a JSON array: {0}")]
    NotAList(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationTurn {
    pub role: Role,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationRecord {
    pub conversation_id: String,
    pub turns: Vec<ConversationTurn>,
}

impl ConversationRecord {
    fn validate(&self) -> Result<(), String> {
        if self.conversation_id.trim().is_empty() {
            return Err("empty conversation_id".into());
        }
        if !self.turns.iter().any(|t| t.role == Role::User) {
            return Err("no user turns".into());
        }
        if self.turns.iter().any(|t| t.role == Role::User && t.text.trim().is_empty()) {
            return Err("empty user turn".into());
        }
        Ok(())
    }
}

/// A record that could not be parsed or replayed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReplayFailure {
    /// Position in the input array.
    pub index: usize,
    pub conversation_id: Option<String>,
    pub message: String,
}

/// Parses the conversations file. Only a non-array top level is fatal;
/// malformed records come back as per-record failures.
pub fn parse_conversations(text: &str) -> Result<Vec<Result<ConversationRecord, ReplayFailure>>, ReplayError> {
    let values: Vec<serde_json::Value> = serde_json::from_str(text).map_err(|e| ReplayError::NotAList(e.to_string()))?;
    Ok(values
        .into_iter()
        .enumerate()
        .map(|(index, value)| {
            let conversation_id = value.get("conversation_id").and_then(|v| v.as_str()).map(str::to_string);
            serde_json::from_value::<ConversationRecord>(value)
                .map_err(|e| e.to_string())
                .and_then(|record| record.validate().map(|()| record))
                .map_err(|message| ReplayFailure { index, conversation_id, message })
        })
        .collect())
}

/// Which answers fill the history of later turns.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryMode {
    /// The system's own generated answers.
    #[default]
    Generated,
    /// Reference assistant turns from the file, when present.
    Gold,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayConfig<T> {
    pub turn: TurnConfig<T>,
    pub history_mode: HistoryMode,
    /// Emit a submission record for the last user turn only.
    pub final_only: bool,
}

impl<T: Scalar> Default for ReplayConfig<T> {
    fn default() -> Self {
        Self { turn: TurnConfig::default(), history_mode: HistoryMode::default(), final_only: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmissionRecord {
    pub conversation_id: String,
    /// Present only when every user turn gets a record.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn_id: Option<String>,
    pub response: String,
    pub documents: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutput<T> {
    pub submissions: Vec<SubmissionRecord>,
    pub run: RunFile<T>,
    pub failures: Vec<ReplayFailure>,
}

pub fn turn_query_id(conversation_id: &str, ordinal: usize) -> String {
    format!("{conversation_id}::{ordinal}")
}

type TurnResult<T> = (String, SubmissionRecord, Vec<(String, T)>);

fn replay_one<T: Scalar>(
    record: &ConversationRecord,
    retriever: &Retriever<T>,
    providers: &Providers,
    config: &ReplayConfig<T>,
) -> Result<Vec<TurnResult<T>>, String> {
    let mut state = ConversationState::new(&record.conversation_id);
    let mut results = Vec::new();
    let mut ordinal = 0;
    for (i, turn) in record.turns.iter().enumerate() {
        if turn.role != Role::User {
            continue;
        }
        ordinal += 1;
        let query_id = turn_query_id(&record.conversation_id, ordinal);
        let outcome =
            run_turn(&mut state, &turn.text, retriever, providers, &config.turn).map_err(|e| format!("{query_id}: {}", crate::error_chain(&e)))?;
        if config.history_mode == HistoryMode::Gold {
            if let Some(gold) = record.turns.get(i + 1).filter(|t| t.role == Role::Assistant) {
                state.set_last_answer(gold.text.clone());
            }
        }
        let ranked = outcome.retrieval.ranking.parents.into_iter().map(|p| (p.parent_id, p.score)).collect();
        let submission = SubmissionRecord {
            conversation_id: record.conversation_id.clone(),
            turn_id: (!config.final_only).then(|| query_id.clone()),
            response: outcome.answer.response,
            documents: outcome.answer.doc_ids,
        };
        results.push((query_id, submission, ranked));
    }
    Ok(results)
}

/// Replays every conversation. Conversations run in parallel; output order
/// follows input order. A failing conversation contributes no output and is
/// reported in `failures`.
pub fn replay<T: Scalar>(
    records: Vec<Result<ConversationRecord, ReplayFailure>>,
    retriever: &Retriever<T>,
    providers: &Providers,
    config: &ReplayConfig<T>,
) -> ReplayOutput<T> {
    let outcomes: Vec<Result<Vec<TurnResult<T>>, ReplayFailure>> = records
        .into_par_iter()
        .enumerate()
        .map(|(index, record)| {
            let record = record?;
            replay_one(&record, retriever, providers, config).map_err(|message| ReplayFailure {
                index,
                conversation_id: Some(record.conversation_id.clone()),
                message,
            })
        })
        .collect();

    let mut output = ReplayOutput { submissions: Vec::new(), run: RunFile::new(), failures: Vec::new() };
    for outcome in outcomes {
        match outcome {
            Ok(turns) => {
                let last = turns.len().saturating_sub(1);
                for (i, (query_id, submission, ranked)) in turns.into_iter().enumerate() {
                    if !config.final_only || i == last {
                        output.submissions.push(submission);
                    }
                    if let Err(e) = output.run.insert(query_id.clone(), ranked) {
                        output.failures.push(ReplayFailure {
                            index: usize::MAX,
                            conversation_id: Some(query_id),
                            message: e.to_string(),
                        });
                    }
                }
            }
            Err(failure) => output.failures.push(failure),
        }
    }
    output
}

/// One JSON object per line.
pub fn write_submissions(records: &[SubmissionRecord], out: &mut (impl Write + ?Sized)) -> io::Result<()> {
    for record in records {
        serde_json::to_writer(&mut *out, record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ChunkingConfig, Corpus, Document};
    use crate::pipeline::IndexSettings;

    fn retriever() -> Retriever<f64> {
        let corpus = Corpus::from_documents(
            [
                Document::new("tower", "The Eiffel Tower stands in Paris. It is 330 metres tall. It opened in 1889."),
                Document::new("bridge", "The Golden Gate Bridge spans a strait. It opened in 1937. Fog often covers it."),
            ],
            ChunkingConfig::default(),
        )
        .unwrap();
        Retriever::build(corpus, IndexSettings::default()).unwrap()
    }

    const FILE: &str = r#"[
        {"conversation_id": "c1", "turns": [
            {"role": "user", "text": "Where is the Eiffel Tower?"},
            {"role": "assistant", "text": "In Paris."},
            {"role": "user", "text": "How tall is it?"},
            {"role": "user", "text": "When did the Golden Gate Bridge open?"}
        ]},
        {"conversation_id": "bad", "turns": [{"role": "narrator", "text": "x"}]},
        {"conversation_id": "c2", "turns": [{"role": "assistant", "text": "hi"}]}
    ]"#;

    #[test]
    fn malformed_records_are_isolated() {
        let records = parse_conversations(FILE).unwrap();
        assert!(records[0].is_ok());
        assert_eq!(records[1].as_ref().unwrap_err().conversation_id.as_deref(), Some("bad"));
        assert_eq!(records[2].as_ref().unwrap_err().message, "no user turns");
        assert!(parse_conversations("{}").is_err());
        assert!(parse_conversations("[]").unwrap().is_empty());
    }

    #[test]
    fn final_only_and_all_turns() {
        let r = retriever();
        let providers = Providers::stub();
        let out = replay(parse_conversations(FILE).unwrap(), &r, &providers, &ReplayConfig::default());
        assert_eq!(out.submissions.len(), 1);
        assert_eq!(out.submissions[0].turn_id, None);
        assert_eq!(out.submissions[0].documents[0], "bridge");
        assert_eq!(out.run.len(), 3);
        assert!(out.run.get("c1::3").is_some());
        assert_eq!(out.failures.len(), 2);

        let cfg = ReplayConfig { final_only: false, ..ReplayConfig::default() };
        let out = replay(parse_conversations(FILE).unwrap(), &r, &providers, &cfg);
        assert_eq!(out.submissions.len(), 3);
        assert_eq!(out.submissions[1].turn_id.as_deref(), Some("c1::2"));
    }

    #[test]
    fn gold_history_seeds_answers() {
        let record = parse_conversations(FILE).unwrap().remove(0).unwrap();
        let cfg = ReplayConfig { history_mode: HistoryMode::Gold, ..ReplayConfig::default() };
        let r = retriever();
        let gold = replay_one(&record, &r, &Providers::stub(), &cfg).unwrap();
        let generated = replay_one(&record, &r, &Providers::stub(), &ReplayConfig::default()).unwrap();
        // The generation prompt includes history, so the stub's prompt digest differs.
        assert_ne!(gold[1].1.response, generated[1].1.response);
        assert_eq!(gold[0].1.response, generated[0].1.response);
    }

    #[test]
    fn submissions_serialize_one_per_line() {
        let records = [SubmissionRecord {
            conversation_id: "c".into(),
            turn_id: None,
            response: "r".into(),
            documents: vec!["d1".into(), "d2".into()],
        }];
        let mut buf = Vec::new();
        write_submissions(&records, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "{\"conversation_id\":\"c\",\"response\":\"r\",\"documents\":[\"d1\",\"d2\"]}\n");
    }
}
