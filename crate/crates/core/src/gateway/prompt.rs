use super::templates::{self, pieces, Piece, Slot};
use crate::imaging::{self, ImagingError};
use crate::model::{FullWebsiteContent, ImageAsset, PipelineConfig, QueryRecord, RecordedSegment, Stage};
use crate::webio::BriefResult;

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("image question needs the image-search screenshot")]
    MissingImageSearch,
    #[error("rerank needs exactly {expected} websites, got {got}")]
    WebsiteCount { expected: usize, got: usize },
    #[error("website content has {got} segments, limit is {max}")]
    TooManySegments { got: usize, max: usize },
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

/// What a prompt knows about the query itself.
#[derive(Debug, Clone, Copy)]
pub struct QueryContext<'a> {
    pub question: &'a str,
    pub query_image: Option<&'a ImageAsset>,
    pub image_search: Option<&'a ImageAsset>,
}

impl<'a> QueryContext<'a> {
    pub fn from_record(record: &'a QueryRecord) -> Self {
        QueryContext {
            question: &record.question,
            query_image: record.query_image.as_ref(),
            image_search: record.image_search_screenshot.as_ref(),
        }
    }

    pub fn text_only(question: &'a str) -> Self {
        QueryContext { question, query_image: None, image_search: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PromptSegment {
    Text(String),
    Image(ImageAsset),
}

/// A rendered prompt: text and images interleaved in template order.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptBundle {
    pub stage: Stage,
    pub segments: Vec<PromptSegment>,
    pub has_query_image: bool,
}

impl PromptBundle {
    pub fn image_count(&self) -> usize {
        self.images().count()
    }

    pub fn images(&self) -> impl Iterator<Item = &ImageAsset> {
        self.segments.iter().filter_map(|s| match s {
            PromptSegment::Image(img) => Some(img),
            PromptSegment::Text(_) => None,
        })
    }

    /// Text with every image replaced by `marker`.
    pub fn flatten(&self, marker: &str) -> String {
        self.segments
            .iter()
            .map(|s| match s {
                PromptSegment::Text(t) => t.as_str(),
                PromptSegment::Image(_) => marker,
            })
            .collect()
    }

    pub fn recorded(&self) -> Vec<RecordedSegment> {
        self.segments
            .iter()
            .map(|s| match s {
                PromptSegment::Text(text) => RecordedSegment::Text { text: text.clone() },
                PromptSegment::Image(img) => RecordedSegment::Image { image: img.reference() },
            })
            .collect()
    }
}

#[derive(Default)]
struct Builder {
    segments: Vec<PromptSegment>,
}

impl Builder {
    fn text(&mut self, text: &str) {
        if text.is_empty() {
            return;
        }
        if let Some(PromptSegment::Text(last)) = self.segments.last_mut() {
            last.push_str(text);
        } else {
            self.segments.push(PromptSegment::Text(text.to_string()));
        }
    }

    fn image(&mut self, asset: &ImageAsset, config: &PipelineConfig) -> Result<(), PromptError> {
        let prepared = imaging::resize_for_model(asset, config.resize_mode, config.model_max_edge)?;
        self.segments.push(PromptSegment::Image(prepared));
        Ok(())
    }
}

fn template_for(stage: Stage, with_image: bool) -> &'static str {
    match (stage, with_image) {
        (Stage::Requery, false) => templates::REQUERY_TEXT,
        (Stage::Requery, true) => templates::REQUERY_IMAGE,
        (Stage::Rerank, false) => templates::RERANK_TEXT,
        (Stage::Rerank, true) => templates::RERANK_IMAGE,
        (Stage::Summarize, false) => templates::SUMMARIZE_TEXT,
        (Stage::Summarize, true) => templates::SUMMARIZE_IMAGE,
    }
}

/// The template with placeholders left as `{name}` and K filled in.
pub fn skeleton(stage: Stage, with_image: bool, website_count: usize) -> String {
    pieces(template_for(stage, with_image))
        .into_iter()
        .map(|p| match p {
            Piece::Text(t) => t.to_string(),
            Piece::Slot(Slot::WebsiteCount) => website_count.to_string(),
            Piece::Slot(slot) => format!("{{{}}}", slot.name()),
        })
        .collect()
}

type WebsiteWriter<'a> = dyn Fn(&mut Builder) -> Result<(), PromptError> + 'a;

fn render(
    stage: Stage,
    ctx: &QueryContext,
    website_count: usize,
    websites: &WebsiteWriter,
    config: &PipelineConfig,
) -> Result<PromptBundle, PromptError> {
    if ctx.question.trim().is_empty() {
        return Err(PromptError::EmptyQuestion);
    }
    let query_image = ctx.query_image;
    let image_search = match (query_image, ctx.image_search) {
        (Some(_), None) => return Err(PromptError::MissingImageSearch),
        (_, search) => search,
    };
    let mut b = Builder::default();
    for piece in pieces(template_for(stage, query_image.is_some())) {
        match piece {
            Piece::Text(t) => b.text(t),
            Piece::Slot(Slot::Question) => b.text(ctx.question.trim()),
            Piece::Slot(Slot::WebsiteCount) => b.text(&website_count.to_string()),
            Piece::Slot(Slot::QueryImage) => b.image(query_image.expect("image variant"), config)?,
            Piece::Slot(Slot::ImageSearchResult) => b.image(image_search.expect("checked above"), config)?,
            Piece::Slot(Slot::WebsiteInformation) => websites(&mut b)?,
        }
    }
    Ok(PromptBundle { stage, segments: b.segments, has_query_image: query_image.is_some() })
}

pub fn build_requery_prompt(ctx: &QueryContext, config: &PipelineConfig) -> Result<PromptBundle, PromptError> {
    render(Stage::Requery, ctx, config.k_websites, &|_| Ok(()), config)
}

/// One block per website, labelled `<Website i>` in the order given.
pub fn build_rerank_prompt(
    ctx: &QueryContext,
    briefs: &[BriefResult],
    config: &PipelineConfig,
) -> Result<PromptBundle, PromptError> {
    if briefs.len() != config.k_websites {
        return Err(PromptError::WebsiteCount { expected: config.k_websites, got: briefs.len() });
    }
    let websites = |b: &mut Builder| {
        for (i, brief) in briefs.iter().enumerate() {
            b.text(&format!("\n<Website {}>\nTitle: {}\nSnippet: {}\nScreenshot: ", i + 1, brief.title, brief.snippet));
            b.image(&brief.top_screenshot, config)?;
        }
        Ok(())
    };
    render(Stage::Rerank, ctx, briefs.len(), &websites, config)
}

pub fn build_summarize_prompt(
    ctx: &QueryContext,
    content: &FullWebsiteContent,
    config: &PipelineConfig,
) -> Result<PromptBundle, PromptError> {
    if content.fullpage_segments.len() > config.max_segments {
        return Err(PromptError::TooManySegments { got: content.fullpage_segments.len(), max: config.max_segments });
    }
    let websites = |b: &mut Builder| {
        b.text(&format!(
            "\nTitle: {}\nSnippet: {}\nContent: {}\nScreenshots: ",
            content.title, content.snippet, content.retrieved_text
        ));
        for segment in &content.fullpage_segments {
            b.image(segment, config)?;
        }
        Ok(())
    };
    render(Stage::Summarize, ctx, config.k_websites, &websites, config)
}
