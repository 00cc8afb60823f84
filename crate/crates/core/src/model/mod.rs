//! Domain types shared across the pipeline, the gateway and the harness.
//!
//! Everything here is plain data: immutable after construction and cheap to
//! share between workers. Dataset files are one JSON document per query with
//! snake_case keys; see [`QueryRecord`].

mod validate;

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use base64::Engine as _;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use validate::{validate_query_record, Violation, ViolationCode};

/// Role an image plays in a query or a pipeline run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageKind {
    QueryImage,
    ImageSearchScreenshot,
    TopSectionScreenshot,
    FullpageSegment,
}

impl ImageKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ImageKind::QueryImage => "query_image",
            ImageKind::ImageSearchScreenshot => "image_search_screenshot",
            ImageKind::TopSectionScreenshot => "top_section_screenshot",
            ImageKind::FullpageSegment => "fullpage_segment",
        }
    }
}

/// Where the encoded image lives. Dataset files reference images by path;
/// images produced at run time (screenshots, segments) carry their bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ImageData {
    Path {
        path: PathBuf,
    },
    Bytes {
        #[serde(with = "base64_bytes")]
        bytes: Vec<u8>,
    },
}

/// An encoded PNG or JPEG image with its pixel dimensions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageAsset {
    pub id: String,
    pub kind: ImageKind,
    pub width: u32,
    pub height: u32,
    #[serde(flatten)]
    pub data: ImageData,
}

impl ImageAsset {
    pub fn from_bytes(id: impl Into<String>, kind: ImageKind, width: u32, height: u32, bytes: Vec<u8>) -> Self {
        ImageAsset { id: id.into(), kind, width, height, data: ImageData::Bytes { bytes } }
    }

    /// Encoded bytes, reading from disk for path-backed assets.
    pub fn encoded(&self) -> std::io::Result<Cow<'_, [u8]>> {
        match &self.data {
            ImageData::Bytes { bytes } => Ok(Cow::Borrowed(bytes)),
            ImageData::Path { path } => std::fs::read(path).map(Cow::Owned),
        }
    }

    /// Stable content reference used in transcripts instead of the payload.
    pub fn reference(&self) -> ImageRef {
        let digest = match self.encoded() {
            Ok(bytes) => hex::encode(Sha256::digest(&bytes)),
            Err(_) => String::new(),
        };
        ImageRef { id: self.id.clone(), kind: self.kind, width: self.width, height: self.height, sha256: digest }
    }

    /// Turns a relative path into one anchored at `base`.
    pub fn resolve_against(&mut self, base: &Path) {
        if let ImageData::Path { path } = &mut self.data {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }
}

/// Payload-free description of an image, as recorded in transcripts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub id: String,
    pub kind: ImageKind,
    pub width: u32,
    pub height: u32,
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WebsiteLabel {
    /// Likely to contain the answer.
    Valid,
    Unsure,
    /// Entirely irrelevant to the question.
    Invalid,
}

/// One retrieved website together with the annotator's relevance label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WebsiteAnnotation {
    pub url: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub snippet: String,
    pub top_screenshot: ImageAsset,
    pub label: WebsiteLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Area {
    News,
    Knowledge,
}

impl Area {
    pub fn label(self) -> &'static str {
        match self {
            Area::News => "News",
            Area::Knowledge => "Know.",
        }
    }
}

/// The fourteen subfields; the first eight belong to News.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subfield {
    TraditionalSports,
    ESports,
    Entertainment,
    GeneralNews,
    Paper,
    Technology,
    Finance,
    FalsePremise,
    Arts,
    Architecture,
    Astronomy,
    Anime,
    Auto,
    Fashion,
}

impl Subfield {
    pub const ALL: [Subfield; 14] = [
        Subfield::TraditionalSports,
        Subfield::ESports,
        Subfield::Entertainment,
        Subfield::GeneralNews,
        Subfield::Paper,
        Subfield::Technology,
        Subfield::Finance,
        Subfield::FalsePremise,
        Subfield::Arts,
        Subfield::Architecture,
        Subfield::Astronomy,
        Subfield::Anime,
        Subfield::Auto,
        Subfield::Fashion,
    ];

    pub fn area(self) -> Area {
        use Subfield::*;
        match self {
            TraditionalSports | ESports | Entertainment | GeneralNews | Paper | Technology | Finance | FalsePremise => {
                Area::News
            }
            Arts | Architecture | Astronomy | Anime | Auto | Fashion => Area::Knowledge,
        }
    }

    /// Three-letter column code used in report tables.
    pub fn code(self) -> &'static str {
        use Subfield::*;
        match self {
            TraditionalSports => "SPO",
            ESports => "ESP",
            Entertainment => "ENT",
            GeneralNews => "GEN",
            Paper => "PAP",
            Technology => "TEC",
            Finance => "FIN",
            FalsePremise => "FAL",
            Arts => "ART",
            Architecture => "ARC",
            Astronomy => "AST",
            Anime => "ANI",
            Auto => "AUT",
            Fashion => "FAS",
        }
    }
}

/// Text, screenshots and metadata of the single website handed to the
/// summarization stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullWebsiteContent {
    pub url: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub snippet: String,
    #[serde(default)]
    pub retrieved_text: String,
    #[serde(default)]
    pub fullpage_segments: Vec<ImageAsset>,
}

/// The pre-selected website used by the summarization-only task.
/// `website_index` is 0-based into [`QueryRecord::websites`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummarizationWebsite {
    pub website_index: usize,
    pub content: FullWebsiteContent,
}

/// One benchmark query with its ground truth and annotated websites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub id: String,
    pub area: Area,
    pub subfield: Subfield,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_image: Option<ImageAsset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_search_screenshot: Option<ImageAsset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<NaiveDate>,
    #[serde(default)]
    pub gt_requery: String,
    #[serde(default)]
    pub gt_answer: String,
    #[serde(default)]
    pub websites: Vec<WebsiteAnnotation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summarization_website: Option<SummarizationWebsite>,
}

/// The literal answer expected for false-premise questions.
pub const INVALID_QUESTION: &str = "invalid question";

impl QueryRecord {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// Canonical serialization: two-space pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("query record serializes");
        out.push('\n');
        out
    }

    pub fn has_query_image(&self) -> bool {
        self.query_image.is_some()
    }

    pub fn images_mut(&mut self) -> impl Iterator<Item = &mut ImageAsset> {
        let summary = self.summarization_website.iter_mut().flat_map(|s| s.content.fullpage_segments.iter_mut());
        self.query_image
            .iter_mut()
            .chain(self.image_search_screenshot.iter_mut())
            .chain(self.websites.iter_mut().map(|w| &mut w.top_screenshot))
            .chain(summary)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResizeMode {
    /// Scale so the longest edge equals the model's maximum edge.
    LowRes,
    /// Pass images through at their original resolution.
    AnyRes,
}

/// Run-wide knobs. Defaults follow the published experimental setup where
/// one exists; the rest are documented artifact choices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub k_websites: usize,
    pub token_budget: usize,
    pub chunk_tokens: usize,
    pub top_section_width: u32,
    pub top_section_height: u32,
    pub fullpage_width: u32,
    pub segment_height: u32,
    pub max_segments: usize,
    pub resize_mode: ResizeMode,
    /// Longest image edge the model accepts in `LowRes` mode.
    pub model_max_edge: u32,
    pub slim_threshold: f64,
    pub min_blank_band: usize,
    pub temperature: f64,
    pub ttc_temperature: f64,
    pub scorer: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            k_websites: 8,
            token_budget: 2000,
            chunk_tokens: 128,
            top_section_width: 1024,
            top_section_height: 1024,
            fullpage_width: 512,
            segment_height: 512,
            max_segments: 10,
            resize_mode: ResizeMode::LowRes,
            model_max_edge: 1024,
            slim_threshold: 5.0,
            min_blank_band: 16,
            temperature: 0.0,
            ttc_temperature: 0.7,
            scorer: "lexical".to_string(),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("invalid pipeline config: {0}")]
pub struct ConfigError(pub String);

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("k_websites", self.k_websites),
            ("token_budget", self.token_budget),
            ("chunk_tokens", self.chunk_tokens),
            ("top_section_width", self.top_section_width as usize),
            ("top_section_height", self.top_section_height as usize),
            ("fullpage_width", self.fullpage_width as usize),
            ("segment_height", self.segment_height as usize),
            ("max_segments", self.max_segments),
            ("model_max_edge", self.model_max_edge as usize),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(ConfigError(format!("{name} must be > 0")));
            }
        }
        if !(self.slim_threshold > 0.0 && self.slim_threshold <= 255.0) {
            return Err(ConfigError("slim_threshold must be in (0, 255]".into()));
        }
        // Slimming keeps two seam rows per removed band; a band limit of 3 or
        // more guarantees those rows never qualify for removal again.
        if self.min_blank_band < 3 {
            return Err(ConfigError("min_blank_band must be >= 3".into()));
        }
        if self.temperature < 0.0 || self.ttc_temperature < 0.0 {
            return Err(ConfigError("temperatures must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Requery,
    Rerank,
    Summarize,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Requery => "requery",
            Stage::Rerank => "rerank",
            Stage::Summarize => "summarize",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The four evaluation tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    EndToEnd,
    RequeryOnly,
    RerankOnly,
    SummarizeOnly,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] =
        [TaskKind::EndToEnd, TaskKind::RequeryOnly, TaskKind::RerankOnly, TaskKind::SummarizeOnly];
}

/// A prompt segment as recorded: text verbatim, images by reference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RecordedSegment {
    Text { text: String },
    Image { image: ImageRef },
}

/// Stage-specific parse of a raw model output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParsedOutput {
    Requery {
        requery: String,
    },
    Rerank {
        /// 1-based choice as parsed, `None` when unparseable.
        choice: Option<usize>,
        /// Website actually used downstream (1-based).
        selected: usize,
        selected_url: String,
        fallback: bool,
    },
    Answer {
        answer: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub attempt: u32,
    pub prompt: Vec<RecordedSegment>,
    pub raw_output: String,
    pub parsed: ParsedOutput,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranscriptFlag {
    /// Rerank output was unparseable; the rank-1 result was used instead.
    RerankFallback,
}

/// Full record of one task run on one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTranscript {
    pub query_id: String,
    pub task: TaskKind,
    pub stages: Vec<StageRecord>,
    #[serde(default)]
    pub final_answer: String,
    #[serde(default)]
    pub flags: Vec<TranscriptFlag>,
    #[serde(default)]
    pub wall_times: BTreeMap<Stage, f64>,
}

impl SessionTranscript {
    pub fn new(query_id: impl Into<String>, task: TaskKind) -> Self {
        SessionTranscript {
            query_id: query_id.into(),
            task,
            stages: Vec::new(),
            final_answer: String::new(),
            flags: Vec::new(),
            wall_times: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, record: StageRecord) {
        *self.wall_times.entry(record.stage).or_insert(0.0) += record.wall_time_secs;
        self.stages.push(record);
    }

    pub fn stage(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == stage)
    }

    pub fn requery(&self) -> Option<&str> {
        self.stages.iter().rev().find_map(|s| match &s.parsed {
            ParsedOutput::Requery { requery } => Some(requery.as_str()),
            _ => None,
        })
    }

    pub fn rerank_choice(&self) -> Option<Option<usize>> {
        self.stages.iter().rev().find_map(|s| match &s.parsed {
            ParsedOutput::Rerank { choice, .. } => Some(*choice),
            _ => None,
        })
    }

    /// Stages appear in pipeline order and rerank choices lie in `[1, k]`.
    pub fn is_well_ordered(&self, k: usize) -> bool {
        let ordered = self.stages.windows(2).all(|w| w[0].stage <= w[1].stage);
        let in_range = self.stages.iter().all(|s| match &s.parsed {
            ParsedOutput::Rerank { choice, selected, .. } => {
                choice.is_none_or(|c| (1..=k).contains(&c)) && (1..=k).contains(selected)
            }
            _ => true,
        });
        ordered && in_range
    }
}

/// End-to-end error categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndToEndError {
    Requery,
    Rerank,
    Summarization,
    /// Output format deviates from the prompt.
    Informal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequeryError {
    LackingSpecificity,
    InefficientQuery,
    ExcludingImageSearch,
    NoChange,
    Irrelevant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummarizationError {
    TextReasoning,
    ImageTextAggregation,
    ImageReasoning,
    Hallucination,
    Informal,
}

/// Manually assigned error labels for one query, at most one per task.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorLabel {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e2e: Option<EndToEndError>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requery_kind: Option<RequeryError>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summarization_kind: Option<SummarizationError>,
}

/// Mean component scores (percentages) over a group of queries.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComponentScores {
    pub count: usize,
    pub s_e2e: f64,
    pub s_req: f64,
    pub s_rer: f64,
    pub s_sum: f64,
    pub s_final: f64,
}

/// Per-query scores as fractions in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryScore {
    pub query_id: String,
    pub area: Area,
    pub subfield: Subfield,
    pub e2e: f64,
    pub req: f64,
    pub rer: f64,
    pub sum: f64,
    pub final_score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub s_e2e: f64,
    pub s_req: f64,
    pub s_rer: f64,
    pub s_sum: f64,
    pub s_final: f64,
    pub query_count: usize,
    pub by_area: BTreeMap<Area, ComponentScores>,
    pub by_subfield: BTreeMap<Subfield, ComponentScores>,
    pub per_query: Vec<QueryScore>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub error_labels: BTreeMap<String, ErrorLabel>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

mod base64_bytes {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&base64::engine::general_purpose::STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        base64::engine::general_purpose::STANDARD.decode(text.as_bytes()).map_err(serde::de::Error::custom)
    }
}
