//! Prompt templates for query rewriting and grounded generation.
//!
//! Placeholders are `{history_text}`, `{user_question}`, `{history_block}` and
//! `{knowledge_block}`. Rendering substitutes each placeholder in a single
//! pass, so slot values containing brace text are never re-expanded.

use sha2::{Digest, Sha256};

use super::Turn;

pub const REWRITE_TEMPLATE: &str = "\
Task: Given the conversation history, rewrite the new user question into a standalone and specific query suitable for retrieval.

Important Rules:
- If the question is already clear and standalone, return it EXACTLY as is
- If the question contains pronouns or references to earlier dialogue, rewrite it using the necessary context
- Do NOT invent information or change the original meaning
- Return only the rewritten question with NO explanation

Conversation History:
{history_text}

New Question: {user_question}

Expected Output:
Rewritten standalone question (or unchanged original question if already standalone).";

pub const GENERATION_SYSTEM: &str = "\
You are a helpful AI assistant engaged in a conversation with a user. Answer the user's question naturally and directly, as if you already know the information.

Important Rules:
- Do NOT mention \"the context\", \"the provided information\", \"according to the documents\", or similar phrases
- Do NOT reference source numbers such as [1], [2], etc.
- Respond conversationally as if the knowledge is your own
- If insufficient information is available, state this naturally without mentioning missing context
- Maintain continuity with the conversation history";

pub const GENERATION_USER_TEMPLATE: &str = "\
{history_block}Retrieved Background Knowledge:
{knowledge_block}

Current User Question: {user_question}

Respond naturally and conversationally:";

/// Shown in the knowledge block when retrieval found nothing.
pub const NO_KNOWLEDGE: &str = "(none)";

/// A parent document handed to the generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParentContext {
    pub doc_id: String,
    pub title: Option<String>,
    pub text: String,
}

fn render(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + slots.iter().map(|(_, v)| v.len()).sum::<usize>());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        match slots.iter().find(|(name, _)| {
            tail.len() > name.len() + 1 && tail[1..].starts_with(name) && tail[1 + name.len()..].starts_with('}')
        }) {
            Some((name, value)) => {
                out.push_str(value);
                rest = &tail[name.len() + 2..];
            }
            None => {
                out.push('{');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

/// `Q: ...` / `A: ...` lines for the last `window` turns.
pub fn history_text(turns: &[Turn], window: usize) -> String {
    let start = turns.len().saturating_sub(window);
    turns[start..]
        .iter()
        .map(|t| format!("Q: {}\nA: {}", t.question, t.answer))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_rewrite_prompt(turns: &[Turn], window: usize, question: &str) -> String {
    render(
        REWRITE_TEMPLATE,
        &[("history_text", &history_text(turns, window)), ("user_question", question)],
    )
}

/// Numbered background documents, `[1]` first, in ranking order.
pub fn knowledge_block(parents: &[ParentContext]) -> String {
    if parents.is_empty() {
        return NO_KNOWLEDGE.to_string();
    }
    parents
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let heading = p.title.as_deref().unwrap_or(&p.doc_id);
            format!("[{}] {}\n{}", i + 1, heading, p.text.trim())
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// User message of the generation prompt. The history block is omitted
/// entirely when there are no prior turns.
pub fn render_generation_user(turns: &[Turn], window: usize, question: &str, parents: &[ParentContext]) -> String {
    let history = if turns.is_empty() {
        String::new()
    } else {
        format!("Conversation History:\n{}\n\n", history_text(turns, window))
    };
    render(
        GENERATION_USER_TEMPLATE,
        &[
            ("history_block", &history),
            ("knowledge_block", &knowledge_block(parents)),
            ("user_question", question),
        ],
    )
}

/// Hex SHA-256 of a prompt's messages, used to tag failures and stub output.
pub fn prompt_hash(system: Option<&str>, user: &str) -> String {
    let mut hasher = Sha256::new();
    if let Some(system) = system {
        hasher.update(system.as_bytes());
        hasher.update([0u8]);
    }
    hasher.update(user.as_bytes());
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
