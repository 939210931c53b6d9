//! In-memory session store with optional per-session JSON-lines journals.
//!
//! Different sessions run concurrently; turns within one session are
//! serialized by that session's lock.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, PoisonError};

use thiserror::Error;

use super::{run_turn, ConversationError, ConversationState, Providers, Turn, TurnConfig, TurnOutcome};
use crate::pipeline::Retriever;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("session journal {path}: {message}")]
    Journal { path: String, message: String },
    #[error(transparent)]
    Conversation(#[from] ConversationError),
}

fn journal_err(path: &Path, e: impl ToString) -> SessionError {
    SessionError::Journal { path: path.display().to_string(), message: e.to_string() }
}

type SharedState = Arc<Mutex<ConversationState>>;

#[derive(Default)]
pub struct SessionStore {
    sessions: Mutex<HashMap<String, SharedState>>,
    journal_dir: Option<PathBuf>,
}

/// File name for a session id: `[A-Za-z0-9_-]` kept, other bytes as `%XX`.
fn journal_name(session_id: &str) -> String {
    let mut name = String::with_capacity(session_id.len() + 6);
    for b in session_id.bytes() {
        if b.is_ascii_alphanumeric() || b == b'-' || b == b'_' {
            name.push(b as char);
        } else {
            name.push_str(&format!("%{b:02X}"));
        }
    }
    name.push_str(".jsonl");
    name
}

impl SessionStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Journals every completed turn under `dir`; existing journals are
    /// replayed when a session is first touched.
    pub fn with_journal(dir: impl Into<PathBuf>) -> Result<Self, SessionError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| journal_err(&dir, e))?;
        Ok(Self { sessions: Mutex::default(), journal_dir: Some(dir) })
    }

    fn journal_path(&self, session_id: &str) -> Option<PathBuf> {
        self.journal_dir.as_ref().map(|d| d.join(journal_name(session_id)))
    }

    fn load(&self, session_id: &str) -> Result<ConversationState, SessionError> {
        let mut state = ConversationState::new(session_id);
        let Some(path) = self.journal_path(session_id).filter(|p| p.exists()) else {
            return Ok(state);
        };
        let reader = BufReader::new(File::open(&path).map_err(|e| journal_err(&path, e))?);
        for line in reader.lines() {
            let line = line.map_err(|e| journal_err(&path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let turn: Turn = serde_json::from_str(&line).map_err(|e| journal_err(&path, e))?;
            state.push(turn.question, turn.answer);
        }
        Ok(state)
    }

    pub fn session(&self, session_id: &str) -> Result<SharedState, SessionError> {
        let mut sessions = self.sessions.lock().unwrap_or_else(PoisonError::into_inner);
        if let Some(state) = sessions.get(session_id) {
            return Ok(Arc::clone(state));
        }
        let state = Arc::new(Mutex::new(self.load(session_id)?));
        sessions.insert(session_id.to_string(), Arc::clone(&state));
        Ok(state)
    }

    pub fn snapshot(&self, session_id: &str) -> Result<ConversationState, SessionError> {
        let state = self.session(session_id)?;
        let guard = state.lock().unwrap_or_else(PoisonError::into_inner);
        Ok(guard.clone())
    }

    /// Runs one turn in `session_id` and journals it on success.
    pub fn run_turn<T: Scalar>(
        &self,
        session_id: &str,
        question: &str,
        retriever: &Retriever<T>,
        providers: &Providers,
        config: &TurnConfig<T>,
    ) -> Result<TurnOutcome<T>, SessionError> {
        let state = self.session(session_id)?;
        let mut guard = state.lock().unwrap_or_else(PoisonError::into_inner);
        let outcome = run_turn(&mut guard, question, retriever, providers, config)?;
        if let Some(path) = self.journal_path(session_id) {
            let turn = guard.turns().last().expect("turn appended by run_turn");
            let mut line = serde_json::to_string(turn).map_err(|e| journal_err(&path, e))?;
            line.push('\n');
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .and_then(|mut f| f.write_all(line.as_bytes()))
                .map_err(|e| journal_err(&path, e))?;
        }
        Ok(outcome)
    }
}
