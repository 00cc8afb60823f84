//! Three-stage search sessions (requery, rerank, summarize), the four
//! evaluation tasks and best-of-N test-time compute.

mod ttc;

use std::sync::Arc;
use std::time::Instant;

use crate::exec::Execution;
use crate::gateway::{
    build_requery_prompt, build_rerank_prompt, build_summarize_prompt, parse_rerank_choice, postprocess_answer,
    CompletionRequest, GatewayError, LanguageModel, PromptBundle, PromptError, QueryContext,
};
use crate::metrics::{answer_f1, requery_score, rerank_score, RerankChoice};
use crate::model::{
    ParsedOutput, PipelineConfig, QueryRecord, SessionTranscript, Stage, StageRecord, TaskKind, TranscriptFlag,
};
use crate::webio::{BriefResult, SearchHit, WebClient, WebError};

pub use ttc::{TtcCandidate, TtcConfig, TtcOutcome};

/// Source of wall-clock readings for transcripts.
pub trait Clock: Send + Sync {
    /// Seconds since an arbitrary fixed origin.
    fn seconds(&self) -> f64;
}

#[derive(Debug, Clone)]
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock { origin: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn seconds(&self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }
}

/// Always reads zero, so hermetic transcripts are byte-identical.
#[derive(Debug, Clone, Copy, Default)]
pub struct FrozenClock;

impl Clock for FrozenClock {
    fn seconds(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{stage} prompt: {source}")]
    Prompt { stage: Stage, source: PromptError },
    #[error("{stage} model call: {source}")]
    Model { stage: Stage, source: GatewayError },
    #[error("{stage} web access: {source}")]
    Web { stage: Stage, source: WebError },
    #[error("query {query_id}: {message}")]
    Dataset { query_id: String, message: String },
}

impl PipelineError {
    pub fn stage(&self) -> Option<Stage> {
        match self {
            PipelineError::Prompt { stage, .. }
            | PipelineError::Model { stage, .. }
            | PipelineError::Web { stage, .. } => Some(*stage),
            PipelineError::Dataset { .. } => None,
        }
    }

    pub fn is_transport(&self) -> bool {
        match self {
            PipelineError::Model { source, .. } => source.is_transport(),
            PipelineError::Web { source, .. } => source.is_transport(),
            _ => false,
        }
    }
}

/// Transcript plus the task's score against ground truth (fraction in [0, 1]).
#[derive(Debug, Clone, PartialEq)]
pub struct TaskOutcome {
    pub transcript: SessionTranscript,
    pub score: f64,
}

/// Scores a finished transcript for its task. Missing stage outputs score 0.
pub fn score_transcript(transcript: &SessionTranscript, record: &QueryRecord) -> f64 {
    match transcript.task {
        TaskKind::EndToEnd | TaskKind::SummarizeOnly => answer_f1(&transcript.final_answer, &record.gt_answer),
        TaskKind::RequeryOnly => transcript.requery().map_or(0.0, |r| requery_score(r, &record.gt_requery)),
        TaskKind::RerankOnly => {
            transcript.rerank_choice().map_or(0.0, |choice| rerank_score(RerankChoice::from(choice), &record.websites))
        }
    }
}

struct Completion {
    raw: String,
    prompt: Vec<crate::model::RecordedSegment>,
    wall: f64,
}

/// Everything a session needs: web access, a model and the run config.
#[derive(Clone)]
pub struct Engine {
    pub web: WebClient,
    pub model: Arc<dyn LanguageModel>,
    pub config: PipelineConfig,
    pub clock: Arc<dyn Clock>,
}

impl Engine {
    pub fn new(web: WebClient, model: Arc<dyn LanguageModel>, config: PipelineConfig) -> Self {
        Engine { web, model, config, clock: Arc::new(SystemClock::default()) }
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    fn complete(
        &self,
        query_id: &str,
        bundle: &PromptBundle,
        attempt: u32,
        temperature: f64,
        candidate_urls: &[String],
    ) -> Result<Completion, PipelineError> {
        let stage = bundle.stage;
        let start = self.clock.seconds();
        let request = CompletionRequest { query_id, stage, attempt, temperature, bundle, candidate_urls };
        let raw = self.model.complete(&request).map_err(|source| PipelineError::Model { stage, source })?;
        Ok(Completion { raw, prompt: bundle.recorded(), wall: self.clock.seconds() - start })
    }

    fn record(transcript: &mut SessionTranscript, stage: Stage, attempt: u32, done: Completion, parsed: ParsedOutput) {
        transcript.push(StageRecord {
            stage,
            attempt,
            prompt: done.prompt,
            raw_output: done.raw,
            parsed,
            wall_time_secs: done.wall,
        });
    }

    pub(crate) fn requery(
        &self,
        record: &QueryRecord,
        transcript: &mut SessionTranscript,
        attempt: u32,
        temperature: f64,
    ) -> Result<String, PipelineError> {
        let stage = Stage::Requery;
        let bundle = build_requery_prompt(&QueryContext::from_record(record), &self.config)
            .map_err(|source| PipelineError::Prompt { stage, source })?;
        let done = self.complete(&record.id, &bundle, attempt, temperature, &[])?;
        let requery = postprocess_answer(&done.raw);
        Self::record(transcript, stage, attempt, done, ParsedOutput::Requery { requery: requery.clone() });
        Ok(requery)
    }

    /// Searches for `requery`, falling back to the question when it is blank.
    pub(crate) fn search(&self, record: &QueryRecord, requery: &str) -> Result<Vec<BriefResult>, PipelineError> {
        let query = if requery.trim().is_empty() { record.question.as_str() } else { requery };
        self.web.text_search(query, &self.config).map_err(|source| PipelineError::Web { stage: Stage::Rerank, source })
    }

    /// Returns the parsed choice and the 1-based website actually used.
    pub(crate) fn rerank(
        &self,
        record: &QueryRecord,
        briefs: &[BriefResult],
        transcript: &mut SessionTranscript,
        attempt: u32,
        temperature: f64,
    ) -> Result<(RerankChoice, usize), PipelineError> {
        let stage = Stage::Rerank;
        // Live search can return fewer than K results; the prompt states the real count.
        let config = PipelineConfig { k_websites: briefs.len(), ..self.config.clone() };
        let bundle = build_rerank_prompt(&QueryContext::from_record(record), briefs, &config)
            .map_err(|source| PipelineError::Prompt { stage, source })?;
        let urls: Vec<String> = briefs.iter().map(|b| b.url.clone()).collect();
        let done = self.complete(&record.id, &bundle, attempt, temperature, &urls)?;
        let choice = parse_rerank_choice(&done.raw, briefs.len());
        let (parsed, selected, fallback) = match choice {
            RerankChoice::Index(i) => (Some(i), i, false),
            RerankChoice::Unparseable => (None, 1, true),
        };
        if fallback && !transcript.flags.contains(&TranscriptFlag::RerankFallback) {
            transcript.flags.push(TranscriptFlag::RerankFallback);
        }
        let parsed_output =
            ParsedOutput::Rerank { choice: parsed, selected, selected_url: briefs[selected - 1].url.clone(), fallback };
        Self::record(transcript, stage, attempt, done, parsed_output);
        Ok((choice, selected))
    }

    pub(crate) fn summarize(
        &self,
        record: &QueryRecord,
        content: &crate::model::FullWebsiteContent,
        transcript: &mut SessionTranscript,
        attempt: u32,
        temperature: f64,
    ) -> Result<String, PipelineError> {
        let stage = Stage::Summarize;
        let bundle = build_summarize_prompt(&QueryContext::from_record(record), content, &self.config)
            .map_err(|source| PipelineError::Prompt { stage, source })?;
        let done = self.complete(&record.id, &bundle, attempt, temperature, std::slice::from_ref(&content.url))?;
        let answer = postprocess_answer(&done.raw);
        Self::record(transcript, stage, attempt, done, ParsedOutput::Answer { answer: answer.clone() });
        Ok(answer)
    }

    pub(crate) fn full_content(
        &self,
        brief: &BriefResult,
        requery: &str,
    ) -> Result<crate::model::FullWebsiteContent, PipelineError> {
        let hit = SearchHit { url: brief.url.clone(), title: brief.title.clone(), snippet: brief.snippet.clone() };
        self.web
            .build_full_content(&hit, requery, &self.config)
            .map_err(|source| PipelineError::Web { stage: Stage::Summarize, source })
    }

    /// Requery, search, rerank, fetch, summarize. Unparseable rerank output
    /// falls back to the top-ranked result and flags the transcript.
    pub fn run_end_to_end(&self, record: &QueryRecord) -> Result<SessionTranscript, PipelineError> {
        let temperature = self.config.temperature;
        let mut transcript = SessionTranscript::new(&record.id, TaskKind::EndToEnd);
        let requery = self.requery(record, &mut transcript, 0, temperature)?;
        let briefs = self.search(record, &requery)?;
        let (_, selected) = self.rerank(record, &briefs, &mut transcript, 0, temperature)?;
        let content = self.full_content(&briefs[selected - 1], &requery)?;
        transcript.final_answer = self.summarize(record, &content, &mut transcript, 0, temperature)?;
        Ok(transcript)
    }

    /// One evaluation task. Rerank-only and summarize-only use the dataset's
    /// annotated websites and pre-selected content, never the live web.
    pub fn run_task(&self, kind: TaskKind, record: &QueryRecord) -> Result<TaskOutcome, PipelineError> {
        let temperature = self.config.temperature;
        let transcript = match kind {
            TaskKind::EndToEnd => self.run_end_to_end(record)?,
            TaskKind::RequeryOnly => {
                let mut t = SessionTranscript::new(&record.id, kind);
                t.final_answer = self.requery(record, &mut t, 0, temperature)?;
                t
            }
            TaskKind::RerankOnly => {
                if record.websites.is_empty() {
                    return Err(PipelineError::Dataset {
                        query_id: record.id.clone(),
                        message: "rerank task needs annotated websites".into(),
                    });
                }
                let briefs: Vec<BriefResult> = record
                    .websites
                    .iter()
                    .enumerate()
                    .map(|(i, w)| BriefResult {
                        rank: i + 1,
                        url: w.url.clone(),
                        title: w.title.clone(),
                        snippet: w.snippet.clone(),
                        top_screenshot: w.top_screenshot.clone(),
                    })
                    .collect();
                let mut t = SessionTranscript::new(&record.id, kind);
                self.rerank(record, &briefs, &mut t, 0, temperature)?;
                t.flags.clear();
                t
            }
            TaskKind::SummarizeOnly => {
                let Some(website) = &record.summarization_website else {
                    return Err(PipelineError::Dataset {
                        query_id: record.id.clone(),
                        message: "summarization task needs a pre-selected website".into(),
                    });
                };
                let mut t = SessionTranscript::new(&record.id, kind);
                t.final_answer = self.summarize(record, &website.content, &mut t, 0, temperature)?;
                t
            }
        };
        let score = score_transcript(&transcript, record);
        Ok(TaskOutcome { transcript, score })
    }

    /// Runs `kind` over many queries; sessions are independent and run in
    /// parallel under `exec`. Results keep the input order.
    pub fn run_batch(
        &self,
        kind: TaskKind,
        records: &[QueryRecord],
        exec: Execution,
    ) -> Vec<Result<TaskOutcome, PipelineError>> {
        exec.map(records, |record| self.run_task(kind, record))
    }
}
