//! Prompt construction, the model completion contract and output parsing.

mod backend;
mod parse;
mod prompt;
pub mod templates;

pub use backend::{
    chat_request_body, CompletionRequest, GatewayError, LanguageModel, ModelEndpoint, OpenAiCompatible, OracleStub,
    ScriptedStub,
};
pub use parse::{parse_rerank_choice, postprocess_answer};
pub use prompt::{
    build_requery_prompt, build_rerank_prompt, build_summarize_prompt, skeleton, PromptBundle, PromptError,
    PromptSegment, QueryContext,
};
