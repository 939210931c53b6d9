//! Multi-turn orchestration: dialogue state, query rewriting, grounded
//! generation, and batch replay of conversation files.

pub mod prompt;
pub mod provider;
pub mod replay;
pub mod session;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::index::HybridConfig;
use crate::pipeline::{PipelineError, Retrieval, Retriever};
use crate::ranking::RankingConfig;
use crate::scalar::Scalar;

use prompt::{render_generation_user, render_rewrite_prompt, ParentContext, GENERATION_SYSTEM};
use provider::{ChatRequest, PromptTask, ProviderError, TextProvider, STUB_ABSTENTION};

pub const DEFAULT_HISTORY_WINDOW: usize = 3;

#[derive(Debug, Error)]
pub enum ConversationError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("generation failed (prompt sha256 {prompt_hash})")]
    Generation {
        prompt_hash: String,
        #[source]
        source: ProviderError,
    },
    #[error(transparent)]
    Retrieval(#[from] PipelineError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub question: String,
    pub answer: String,
}

/// A session's completed turns. Append-only.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationState {
    pub session_id: String,
    turns: Vec<Turn>,
}

impl ConversationState {
    pub fn new(session_id: impl Into<String>) -> Self {
        Self { session_id: session_id.into(), turns: Vec::new() }
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    pub fn push(&mut self, question: impl Into<String>, answer: impl Into<String>) {
        self.turns.push(Turn { question: question.into(), answer: answer.into() });
    }

    /// Replaces the answer of the most recent turn (used when seeding history
    /// from reference answers during replay).
    pub(crate) fn set_last_answer(&mut self, answer: String) {
        if let Some(last) = self.turns.last_mut() {
            last.answer = answer;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Clone)]
pub struct Providers {
    pub rewriter: Arc<dyn TextProvider>,
    pub generator: Arc<dyn TextProvider>,
}

impl Providers {
    pub fn stub() -> Self {
        Self {
            rewriter: Arc::new(provider::StubProvider),
            generator: Arc::new(provider::StubProvider),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TurnConfig<T> {
    pub hybrid: HybridConfig<T>,
    pub ranking: RankingConfig,
    pub history_window: usize,
    pub rewrite: SamplingParams,
    pub generation: SamplingParams,
}

impl<T: Scalar> Default for TurnConfig<T> {
    fn default() -> Self {
        Self {
            hybrid: HybridConfig::default(),
            ranking: RankingConfig::default(),
            history_window: DEFAULT_HISTORY_WINDOW,
            rewrite: SamplingParams { temperature: 0.2, max_tokens: 256 },
            generation: SamplingParams { temperature: 0.7, max_tokens: 4096 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundedAnswer {
    pub response: String,
    /// Parent ids in ranking order.
    pub doc_ids: Vec<String>,
    pub rewritten_query: String,
}

/// Turns a context-dependent question into a standalone query.
///
/// The first turn of a session is returned verbatim without calling the
/// provider. Provider failures and empty outputs fall back to the original
/// question.
pub fn rewrite_query(
    state: &ConversationState,
    question: &str,
    provider: &dyn TextProvider,
    params: SamplingParams,
    history_window: usize,
) -> String {
    if state.turns.is_empty() {
        return question.to_string();
    }
    let request = ChatRequest {
        system: None,
        user: render_rewrite_prompt(&state.turns, history_window, question),
        temperature: params.temperature,
        max_tokens: params.max_tokens,
        task: PromptTask::Rewrite { question: question.to_string() },
    };
    match provider.complete(&request) {
        Ok(output) => match output.lines().map(str::trim).find(|l| !l.is_empty()) {
            Some(line) => line.to_string(),
            None => {
                warn!(session = %state.session_id, "rewriter returned nothing; using original question");
                question.to_string()
            }
        },
        Err(err) => {
            warn!(session = %state.session_id, error = %err, "rewrite failed; using original question");
            question.to_string()
        }
    }
}

/// Renders the generation prompt over `parents` and asks the provider for a
/// response. With no parents the generator is expected to abstain.
pub fn generate_answer(
    state: &ConversationState,
    query: &str,
    parents: &[ParentContext],
    provider: &dyn TextProvider,
    params: SamplingParams,
    history_window: usize,
) -> Result<GroundedAnswer, ConversationError> {
    let doc_ids: Vec<String> = parents.iter().map(|p| p.doc_id.clone()).collect();
    let request = ChatRequest {
        system: Some(GENERATION_SYSTEM.to_string()),
        user: render_generation_user(&state.turns, history_window, query, parents),
        temperature: params.temperature,
        max_tokens: params.max_tokens,
        task: PromptTask::Generate { question: query.to_string(), doc_ids: doc_ids.clone() },
    };
    let response = provider.complete(&request).map_err(|source| ConversationError::Generation {
        prompt_hash: request.prompt_hash(),
        source,
    })?;
    let response = match response.trim() {
        "" => {
            warn!(session = %state.session_id, "generator returned an empty response; abstaining");
            STUB_ABSTENTION.to_string()
        }
        text => text.to_string(),
    };
    Ok(GroundedAnswer { response, doc_ids, rewritten_query: query.to_string() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TurnOutcome<T> {
    pub answer: GroundedAnswer,
    pub retrieval: Retrieval<T>,
}

/// One full query-time turn: rewrite, retrieve, rank, generate. The turn is
/// appended to `state` only when every stage succeeds.
pub fn run_turn<T: Scalar>(
    state: &mut ConversationState,
    question: &str,
    retriever: &Retriever<T>,
    providers: &Providers,
    config: &TurnConfig<T>,
) -> Result<TurnOutcome<T>, ConversationError> {
    let question = question.trim();
    if question.is_empty() {
        return Err(ConversationError::EmptyQuestion);
    }
    let query = rewrite_query(state, question, providers.rewriter.as_ref(), config.rewrite, config.history_window);
    let retrieval = retriever.retrieve(&query, &config.hybrid, &config.ranking)?;
    let parents: Vec<ParentContext> = retrieval
        .ranking
        .parents
        .iter()
        .filter_map(|p| retriever.corpus().parent(&p.parent_id))
        .map(|doc| ParentContext { doc_id: doc.doc_id.clone(), title: doc.title.clone(), text: doc.text.clone() })
        .collect();
    let answer = generate_answer(
        state,
        &query,
        &parents,
        providers.generator.as_ref(),
        config.generation,
        config.history_window,
    )?;
    state.push(question, answer.response.clone());
    Ok(TurnOutcome { answer, retrieval })
}
