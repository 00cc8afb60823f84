use image::{Rgba, RgbaImage};
use regex::Regex;
use websight_core::gateway::{
    build_requery_prompt, build_rerank_prompt, build_summarize_prompt, parse_rerank_choice, skeleton,
    CompletionRequest, GatewayError, LanguageModel, ModelEndpoint, OpenAiCompatible, PromptError, QueryContext,
};
use websight_core::imaging::asset_from_rgba;
use websight_core::metrics::RerankChoice;
use websight_core::model::{FullWebsiteContent, ImageAsset, ImageKind, PipelineConfig, Stage};
use websight_core::webio::BriefResult;

fn golden(name: &str) -> String {
    std::fs::read_to_string(format!("{}/tests/golden/{name}.txt", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn image(id: &str, kind: ImageKind, w: u32, h: u32) -> ImageAsset {
    asset_from_rgba(id, kind, &RgbaImage::from_pixel(w, h, Rgba([10, 20, 30, 255]))).unwrap()
}

fn briefs(n: usize) -> Vec<BriefResult> {
    (1..=n)
        .map(|i| BriefResult {
            rank: i,
            url: format!("https://site{i}.example/"),
            title: format!("Title {i}"),
            snippet: format!("Snippet {i}"),
            top_screenshot: image(&format!("top{i}"), ImageKind::TopSectionScreenshot, 64, 64),
        })
        .collect()
}

fn config() -> PipelineConfig {
    PipelineConfig { model_max_edge: 64, ..PipelineConfig::default() }
}

/// Golden text with each placeholder turned into a lazy wildcard.
fn golden_pattern(name: &str) -> Regex {
    let escaped = regex::escape(&golden(name));
    let mut pattern = escaped;
    for slot in ["question", "query_image", "image_search_result", "website_information"] {
        pattern = pattern.replace(&regex::escape(&format!("{{{slot}}}")), "(?s:.*?)");
    }
    Regex::new(&format!("^{pattern}$")).unwrap()
}

#[test]
fn skeletons_match_golden_templates() {
    for (stage, name) in [(Stage::Requery, "requery"), (Stage::Rerank, "rerank"), (Stage::Summarize, "summarize")] {
        assert_eq!(skeleton(stage, false, 8), golden(&format!("{name}_text")), "{name} text variant");
        assert_eq!(skeleton(stage, true, 8), golden(&format!("{name}_image")), "{name} image variant");
    }
}

#[test]
fn requery_variants() {
    let cfg = config();
    let text = build_requery_prompt(&QueryContext::text_only("Who won?"), &cfg).unwrap();
    assert_eq!(text.image_count(), 0);
    assert!(golden_pattern("requery_text").is_match(&text.flatten("<image>")));
    assert!(text.flatten("").contains("Question: Who won?.\n"));

    let q = image("q", ImageKind::QueryImage, 32, 16);
    let lens = image("lens", ImageKind::ImageSearchScreenshot, 16, 32);
    let ctx = QueryContext { question: "Who is this?", query_image: Some(&q), image_search: Some(&lens) };
    let with_image = build_requery_prompt(&ctx, &cfg).unwrap();
    assert_eq!(with_image.image_count(), 2);
    assert!(with_image.has_query_image);
    assert!(golden_pattern("requery_image").is_match(&with_image.flatten("<image>")));
    let ids: Vec<_> = with_image.images().map(|i| i.id.as_str()).collect();
    assert_eq!(ids, ["q", "lens"]);
    assert_eq!(with_image.images().next().map(|i| (i.width, i.height)), Some((64, 32)));

    let missing = QueryContext { question: "Who?", query_image: Some(&q), image_search: None };
    assert!(matches!(build_requery_prompt(&missing, &cfg), Err(PromptError::MissingImageSearch)));
    assert!(matches!(build_requery_prompt(&QueryContext::text_only("  "), &cfg), Err(PromptError::EmptyQuestion)));
}

#[test]
fn rerank_counts_and_order() {
    let cfg = config();
    let b = briefs(8);
    let bundle = build_rerank_prompt(&QueryContext::text_only("Q"), &b, &cfg).unwrap();
    assert_eq!(bundle.image_count(), 8);
    let flat = bundle.flatten("<image>");
    assert!(golden_pattern("rerank_text").is_match(&flat));
    assert!(flat.contains("<Website 3>\nTitle: Title 3\nSnippet: Snippet 3\nScreenshot: <image>"));
    let ids: Vec<_> = bundle.images().map(|i| i.id.clone()).collect();
    assert_eq!(ids, (1..=8).map(|i| format!("top{i}")).collect::<Vec<_>>());

    let q = image("q", ImageKind::QueryImage, 32, 32);
    let lens = image("lens", ImageKind::ImageSearchScreenshot, 32, 32);
    let ctx = QueryContext { question: "Q", query_image: Some(&q), image_search: Some(&lens) };
    let with_image = build_rerank_prompt(&ctx, &b, &cfg).unwrap();
    assert_eq!(with_image.image_count(), 10);
    assert!(golden_pattern("rerank_image").is_match(&with_image.flatten("<image>")));

    let err = build_rerank_prompt(&QueryContext::text_only("Q"), &briefs(7), &cfg).unwrap_err();
    assert!(matches!(err, PromptError::WebsiteCount { expected: 8, got: 7 }));
}

#[test]
fn summarize_passes_segments_through() {
    let cfg = config();
    let content = FullWebsiteContent {
        url: "https://a.example/".into(),
        title: "A".into(),
        snippet: "s".into(),
        retrieved_text: String::new(),
        fullpage_segments: (0..3).map(|i| image(&format!("seg{i}"), ImageKind::FullpageSegment, 32, 32)).collect(),
    };
    let bundle = build_summarize_prompt(&QueryContext::text_only("Is the moon cheese?"), &content, &cfg).unwrap();
    assert_eq!(bundle.image_count(), 3);
    let flat = bundle.flatten("<image>");
    assert!(golden_pattern("summarize_text").is_match(&flat));
    assert!(flat.contains("answer \"invalid question\"."));
    assert!(flat.contains("Content: \nScreenshots: <image><image><image>."));

    let q = image("q", ImageKind::QueryImage, 32, 32);
    let lens = image("lens", ImageKind::ImageSearchScreenshot, 32, 32);
    let ctx = QueryContext { question: "Q", query_image: Some(&q), image_search: Some(&lens) };
    let with_image = build_summarize_prompt(&ctx, &content, &cfg).unwrap();
    assert_eq!(with_image.image_count(), 5);
    assert!(golden_pattern("summarize_image").is_match(&with_image.flatten("<image>")));
    let ids: Vec<_> = with_image.images().map(|i| i.id.as_str()).collect();
    assert_eq!(ids, ["seg0", "seg1", "seg2", "lens", "q"]);
}

/// Observed output styles and the choice each must parse to (k = 8).
const RERANK_STYLES: [(&str, Option<usize>); 20] = [
    ("<Website 3>", Some(3)),
    ("I choose < website 5 > because it lists the date.", Some(5)),
    ("Website nine", None),
    ("<WEBSITE 2>", Some(2)),
    ("<Website3>", Some(3)),
    ("**<Website 4>**", Some(4)),
    ("<Website 1 >.", Some(1)),
    ("Answer: <Website 6>", Some(6)),
    ("<Website 2>, <Website 7>", Some(2)),
    ("<\nWebsite 7\n>", Some(7)),
    ("<Website 02>", Some(2)),
    ("Website 4", None),
    ("[Website 2]", None),
    ("<Website 0>", None),
    ("<Website 9>", None),
    ("<Website 12>, <Website 3>", None),
    ("<Website Index>", None),
    ("&lt;Website 2&gt;", None),
    ("\u{ff1c}Website 2\u{ff1e}", None),
    ("", None),
];

#[test]
fn rerank_parse_style_table() {
    for (raw, expected) in RERANK_STYLES {
        let want = expected.map_or(RerankChoice::Unparseable, RerankChoice::Index);
        assert_eq!(parse_rerank_choice(raw, 8), want, "{raw:?}");
    }
    assert_eq!(parse_rerank_choice("<Website 99999999999999999999999>", 8), RerankChoice::Unparseable);
}

#[test]
fn image_cap_is_checked_before_sending() {
    let endpoint = ModelEndpoint {
        name: "capped".into(),
        base_url: "http://127.0.0.1:9".into(),
        api_key_env: "UNUSED_KEY".into(),
        model: "m".into(),
        max_images: Some(4),
        max_context_hint: None,
        max_concurrency: 2,
        timeout_secs: 1,
    };
    let bundle = build_rerank_prompt(&QueryContext::text_only("Q"), &briefs(8), &config()).unwrap();
    let urls: Vec<String> = (1..=8).map(|i| format!("https://site{i}.example/")).collect();
    let req = CompletionRequest {
        query_id: "q",
        stage: Stage::Rerank,
        attempt: 0,
        temperature: 0.0,
        bundle: &bundle,
        candidate_urls: &urls,
    };
    let err = OpenAiCompatible::new(endpoint).complete(&req).unwrap_err();
    assert!(matches!(err, GatewayError::TooManyImages { max: 4, got: 8, .. }));
}
