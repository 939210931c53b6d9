//! Rendered prompts compared byte-for-byte with checked-in golden files.

use std::sync::Mutex;

use hrag_core::conversation::prompt::{render_generation_user, render_rewrite_prompt, ParentContext, GENERATION_SYSTEM};
use hrag_core::conversation::provider::{ChatRequest, ProviderError, TextProvider};
use hrag_core::conversation::{generate_answer, rewrite_query, ConversationState, SamplingParams, Turn};

const REWRITE: &str = include_str!("golden/rewrite_prompt.txt");
const SYSTEM: &str = include_str!("golden/generation_system.txt");
const USER: &str = include_str!("golden/generation_user.txt");
const USER_FIRST: &str = include_str!("golden/generation_user_first_turn.txt");

fn history() -> Vec<Turn> {
    vec![Turn {
        question: "Tell me about the Eiffel Tower".into(),
        answer: "It is a wrought-iron lattice tower in Paris.".into(),
    }]
}

fn parents() -> Vec<ParentContext> {
    vec![
        ParentContext {
            doc_id: "pA".into(),
            title: Some("Eiffel Tower".into()),
            text: "The Eiffel Tower is 330 metres tall.".into(),
        },
        ParentContext {
            doc_id: "pB".into(),
            title: None,
            text: "Gustave Eiffel's company designed and built the tower.".into(),
        },
    ]
}

#[test]
fn rewrite_prompt_matches_golden() {
    assert_eq!(render_rewrite_prompt(&history(), 3, "How tall is it?"), REWRITE);
    assert!(REWRITE.contains("return it EXACTLY as is"));
}

#[test]
fn generation_prompts_match_golden() {
    assert_eq!(GENERATION_SYSTEM, SYSTEM);
    assert!(SYSTEM.contains("Do NOT reference source numbers"));
    assert_eq!(render_generation_user(&history(), 3, "How tall is the Eiffel Tower?", &parents()), USER);
    assert_eq!(render_generation_user(&[], 3, "How tall is the Eiffel Tower?", &parents()[..1]), USER_FIRST);
}

struct Recorder(Mutex<Vec<ChatRequest>>);

impl TextProvider for Recorder {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        self.0.lock().unwrap().push(request.clone());
        Ok("How tall is the Eiffel Tower?".into())
    }
}

#[test]
fn providers_receive_golden_prompts() {
    let mut state = ConversationState::new("s");
    for t in history() {
        state.push(t.question, t.answer);
    }
    let recorder = Recorder(Mutex::new(Vec::new()));
    let params = SamplingParams { temperature: 0.2, max_tokens: 256 };
    let query = rewrite_query(&state, "How tall is it?", &recorder, params, 3);
    generate_answer(&state, &query, &parents(), &recorder, params, 3).unwrap();

    let seen = recorder.0.lock().unwrap();
    assert_eq!(seen[0].system, None);
    assert_eq!(seen[0].user, REWRITE);
    assert_eq!(seen[1].system.as_deref(), Some(SYSTEM));
    assert_eq!(seen[1].user, USER);
}
