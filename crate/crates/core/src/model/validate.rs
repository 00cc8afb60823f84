use serde::{Deserialize, Serialize};

use super::{Area, ImageAsset, ImageKind, QueryRecord, Subfield, WebsiteLabel, INVALID_QUESTION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationCode {
    EmptyId,
    EmptyQuestion,
    MissingGtAnswer,
    MissingGtRequery,
    SubfieldAreaMismatch,
    QueryImageWithoutSearchScreenshot,
    SearchScreenshotWithoutQueryImage,
    InvalidImageDimensions,
    ImageKindMismatch,
    NoWebsites,
    EmptyWebsiteUrl,
    MissingValidWebsite,
    NewsMissingTimestamp,
    FalsePremiseHasTimestamp,
    FalsePremiseAnswerMismatch,
    SummarizationIndexOutOfRange,
    SummarizationWebsiteNotValid,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        use ViolationCode::*;
        match self {
            EmptyId => "empty_id",
            EmptyQuestion => "empty_question",
            MissingGtAnswer => "missing_gt_answer",
            MissingGtRequery => "missing_gt_requery",
            SubfieldAreaMismatch => "subfield_area_mismatch",
            QueryImageWithoutSearchScreenshot => "query_image_without_search_screenshot",
            SearchScreenshotWithoutQueryImage => "search_screenshot_without_query_image",
            InvalidImageDimensions => "invalid_image_dimensions",
            ImageKindMismatch => "image_kind_mismatch",
            NoWebsites => "no_websites",
            EmptyWebsiteUrl => "empty_website_url",
            MissingValidWebsite => "missing_valid_website",
            NewsMissingTimestamp => "news_missing_timestamp",
            FalsePremiseHasTimestamp => "false_premise_has_timestamp",
            FalsePremiseAnswerMismatch => "false_premise_answer_mismatch",
            SummarizationIndexOutOfRange => "summarization_index_out_of_range",
            SummarizationWebsiteNotValid => "summarization_website_not_valid",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub detail: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code.as_str(), self.detail)
    }
}

/// Checks every record invariant and reports all violations found.
/// An empty list means the record is valid.
pub fn validate_query_record(record: &QueryRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |code: ViolationCode, detail: String| out.push(Violation { code, detail });

    if record.id.trim().is_empty() {
        push(ViolationCode::EmptyId, "record id is empty".into());
    }
    if record.question.trim().is_empty() {
        push(ViolationCode::EmptyQuestion, "question is empty".into());
    }
    if record.gt_answer.trim().is_empty() {
        push(ViolationCode::MissingGtAnswer, "gt_answer is missing or empty".into());
    }
    if record.gt_requery.trim().is_empty() {
        push(ViolationCode::MissingGtRequery, "gt_requery is missing or empty".into());
    }
    if record.subfield.area() != record.area {
        push(
            ViolationCode::SubfieldAreaMismatch,
            format!("subfield {:?} does not belong to area {:?}", record.subfield, record.area),
        );
    }

    match (&record.query_image, &record.image_search_screenshot) {
        (Some(_), None) => push(
            ViolationCode::QueryImageWithoutSearchScreenshot,
            "query_image present but image_search_screenshot missing".into(),
        ),
        (None, Some(_)) => push(
            ViolationCode::SearchScreenshotWithoutQueryImage,
            "image_search_screenshot present without query_image".into(),
        ),
        _ => {}
    }

    let mut check_image = |image: &ImageAsset, expected: ImageKind, at: &str| {
        if image.width == 0 || image.height == 0 {
            push(
                ViolationCode::InvalidImageDimensions,
                format!("{at}: image {} is {}x{}", image.id, image.width, image.height),
            );
        }
        if image.kind != expected {
            push(
                ViolationCode::ImageKindMismatch,
                format!("{at}: image {} has kind {} (expected {})", image.id, image.kind.as_str(), expected.as_str()),
            );
        }
    };
    if let Some(image) = &record.query_image {
        check_image(image, ImageKind::QueryImage, "query_image");
    }
    if let Some(image) = &record.image_search_screenshot {
        check_image(image, ImageKind::ImageSearchScreenshot, "image_search_screenshot");
    }
    for (i, site) in record.websites.iter().enumerate() {
        check_image(&site.top_screenshot, ImageKind::TopSectionScreenshot, &format!("websites[{i}]"));
    }
    if let Some(summary) = &record.summarization_website {
        for seg in &summary.content.fullpage_segments {
            check_image(seg, ImageKind::FullpageSegment, "summarization_website");
        }
    }

    if record.websites.is_empty() {
        push(ViolationCode::NoWebsites, "no annotated websites".into());
    }
    for (i, site) in record.websites.iter().enumerate() {
        if site.url.trim().is_empty() {
            push(ViolationCode::EmptyWebsiteUrl, format!("websites[{i}] has an empty url"));
        }
    }
    if !record.websites.iter().any(|w| w.label == WebsiteLabel::Valid) {
        push(ViolationCode::MissingValidWebsite, "no website is labeled valid".into());
    }

    let false_premise = record.subfield == Subfield::FalsePremise;
    if record.area == Area::News && !false_premise && record.timestamp.is_none() {
        push(ViolationCode::NewsMissingTimestamp, "news record has no timestamp".into());
    }
    if false_premise {
        if let Some(ts) = record.timestamp {
            push(ViolationCode::FalsePremiseHasTimestamp, format!("false-premise record dated {ts}"));
        }
        if record.gt_answer != INVALID_QUESTION {
            push(
                ViolationCode::FalsePremiseAnswerMismatch,
                format!("false-premise answer is {:?}, expected {INVALID_QUESTION:?}", record.gt_answer),
            );
        }
    }

    if let Some(summary) = &record.summarization_website {
        match record.websites.get(summary.website_index) {
            None => push(
                ViolationCode::SummarizationIndexOutOfRange,
                format!("website_index {} out of range ({} websites)", summary.website_index, record.websites.len()),
            ),
            Some(site) if site.label != WebsiteLabel::Valid => push(
                ViolationCode::SummarizationWebsiteNotValid,
                format!("website_index {} is labeled {:?}", summary.website_index, site.label),
            ),
            Some(_) => {}
        }
    }

    out
}
