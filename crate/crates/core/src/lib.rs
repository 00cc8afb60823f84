//! Multimodal search pipeline (requery, rerank, summarize) with a hermetic
//! fixture layer and a step-wise evaluation harness.

pub mod exec;
pub mod gateway;
pub mod harness;
pub mod imaging;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod retrieval;
pub mod webio;
