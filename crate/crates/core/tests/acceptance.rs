//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use common::*;
use image::RgbaImage;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::rngs::StdRng;
use rand::SeedableRng;
use websight_core::exec::Execution;
use websight_core::gateway::{
    build_requery_prompt, build_rerank_prompt, build_summarize_prompt, parse_rerank_choice, OracleStub, QueryContext,
    ScriptedStub,
};
use websight_core::harness::{apply_cutoff_filter, generate_fixtures, score_run, QueryResult, TaskResult};
use websight_core::imaging::{asset_from_rgba, gray_profile, segment_fullpage, slim_rows, slim_screenshot};
use websight_core::metrics::*;
use websight_core::model::{Area, ImageKind, PipelineConfig, QueryRecord, TaskKind, WebsiteLabel};
use websight_core::pipeline::{Engine, FrozenClock, TtcConfig};
use websight_core::retrieval::{chunk_text, retrieve_relevant, LexicalScorer};
use websight_core::webio::{BriefResult, FixtureStore, WebClient};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> Result<(), String> {
    ensure(elapsed.as_secs() < limit_secs, || format!("took {elapsed:.2?}, limit {limit_secs}s"))
}

fn final_score_rows() -> Outcome {
    let start = Instant::now();
    let rows = [
        ("GPT-4o", (60.4, 46.8, 83.0, 63.1), 62.3),
        ("Qwen2-VL-72B", (49.1, 44.7, 76.7, 59.6), 52.7),
        ("Claude 3.5 Sonnet", (49.9, 42.0, 80.2, 59.4), 53.5),
    ];
    let mut shown = Vec::new();
    for (name, (e, q, r, s), published) in rows {
        let got = display_round(final_score(e, q, r, s));
        ensure((got - published).abs() <= 0.1 + 1e-9, || format!("{name}: {got} vs {published}"))?;
        shown.push(format!("{name} {got:.1}"));
    }
    within(start.elapsed(), 1)?;
    Ok(shown.join(", "))
}

fn metric_oracles() -> Outcome {
    let start = Instant::now();
    let seqs = all_sequences(&["a", "b", "c"], 5);
    let tokens: Vec<TokenSequence> = seqs.iter().map(|s| seq(s)).collect();
    let mut pairs = 0usize;
    for (i, p) in seqs.iter().enumerate() {
        for (j, g) in seqs.iter().enumerate() {
            let (tp, tg) = (&tokens[i], &tokens[j]);
            ensure(f1_score(tp, tg) == oracle_f1(p, g), || format!("f1 {p:?} {g:?}"))?;
            ensure(rouge_l(tp, tg) == oracle_rouge_l(p, g), || format!("rouge_l {p:?} {g:?}"))?;
            ensure((bleu1(tp, tg) - oracle_bleu1(p, g)).abs() <= 1e-12, || format!("bleu1 {p:?} {g:?}"))?;
            pairs += 1;
        }
    }
    within(start.elapsed(), 30)?;
    Ok(format!("{} sequences, {pairs} pairs", seqs.len()))
}

fn rerank_mapping() -> Outcome {
    let label = prop_oneof![Just(WebsiteLabel::Valid), Just(WebsiteLabel::Unsure), Just(WebsiteLabel::Invalid)];
    let strategy = (prop::collection::vec(label, 1..=12), 0usize..16, any::<bool>());
    let mut runner = TestRunner::new(Config { cases: 10_000, failure_persistence: None, ..Config::default() });
    let cases = std::cell::Cell::new(0usize);
    runner
        .run(&strategy, |(labels, pick, garble)| {
            cases.set(cases.get() + 1);
            let ann = annotations(&labels);
            let raw = if garble { format!("Website number {pick}") } else { format!("I pick <Website {pick}>.") };
            let expected = match (garble, pick.checked_sub(1).and_then(|i| labels.get(i))) {
                (false, Some(WebsiteLabel::Valid)) => 1.0,
                (false, Some(WebsiteLabel::Unsure)) => 0.5,
                _ => 0.0,
            };
            prop_assert_eq!(rerank_score(parse_rerank_choice(&raw, labels.len()), &ann), expected);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    let cases = cases.get();
    ensure(cases >= 10_000, || format!("only {cases} cases ran"))?;
    Ok(format!("{cases} cases, 0 deviations"))
}

fn slimming() -> Outcome {
    let start = Instant::now();
    let corpus = screenshot_corpus(200, 2024);
    let (mut before, mut after) = (0u64, 0u64);
    for shot in &corpus {
        let once = slim_screenshot(shot, 5.0, 16).map_err(|e| e.to_string())?;
        let twice = slim_screenshot(&once, 5.0, 16).map_err(|e| e.to_string())?;
        ensure(twice == once, || format!("{} not idempotent", shot.id))?;
        ensure(once.height <= shot.height, || format!("{} grew", shot.id))?;
        let gray = websight_core::imaging::decode(shot).map_err(|e| e.to_string())?.to_luma8();
        let profile = gray_profile(&gray, Execution::default());
        let kept = slim_rows(&gray, 5.0, 16, Execution::default());
        let lost = profile.values().iter().enumerate().find(|(r, &g)| g >= 5.0 && kept.binary_search(r).is_err());
        ensure(lost.is_none(), || format!("{} dropped content row {:?}", shot.id, lost.map(|l| l.0)))?;
        before += shot.height as u64;
        after += once.height as u64;
    }
    let tall = asset_from_rgba("tall", ImageKind::FullpageSegment, &RgbaImage::new(16, 6000)).unwrap();
    let segments = segment_fullpage(&tall, 512, 10).map_err(|e| e.to_string())?.len();
    ensure(segments == 10, || format!("6000px page gave {segments} segments"))?;
    within(start.elapsed(), 60)?;
    Ok(format!("200 screenshots, rows {before} -> {after}, 6000px page -> {segments} segments"))
}

fn retrieval_budget() -> Outcome {
    let raw = article(10_000, 99);
    let n = count_tokens(&raw);
    ensure(n == 10_000, || format!("fixture has {n} tokens"))?;
    let chunks = chunk_text(&raw, 128);
    let texts: Vec<&str> = chunks.iter().map(|c| c.text.trim()).collect();
    let scorer = LexicalScorer::default();
    let mut rng = StdRng::seed_from_u64(5);
    let mut largest = 0;
    for i in 0..1000 {
        let requery = random_requery(&mut rng);
        let out = retrieve_relevant(&raw, &requery, 2000, 128, &scorer).map_err(|e| e.to_string())?;
        let tokens = count_tokens(&out);
        ensure(tokens <= 2000, || format!("requery {i} {requery:?}: {tokens} tokens"))?;
        ensure(is_chunk_subsequence(&out, &texts), || format!("requery {i} {requery:?}: not a chunk subsequence"))?;
        largest = largest.max(tokens);
    }
    Ok(format!("1000 requeries, largest output {largest} tokens"))
}

fn hermetic_end_to_end() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fx = generate_fixtures(dir.path(), 12, &PipelineConfig::default()).map_err(|e| e.to_string())?;
    let web = || WebClient::replay(FixtureStore::new(&fx.fixture_dir));
    let stub = Arc::new(ScriptedStub::load(&fx.stub_path).map_err(|e| e.to_string())?);

    let mut runs = Vec::new();
    for _ in 0..3 {
        let engine = Engine::new(web(), stub.clone(), PipelineConfig::default()).with_clock(Arc::new(FrozenClock));
        let transcripts: Result<Vec<_>, _> = fx.records.iter().map(|r| engine.run_end_to_end(r)).collect();
        runs.push(serde_json::to_vec(&transcripts.map_err(|e| e.to_string())?).unwrap());
    }
    ensure(runs[0] == runs[1] && runs[1] == runs[2], || "transcripts differ across runs".into())?;

    let oracle = Engine::new(web(), Arc::new(OracleStub::from_records(&fx.records)), PipelineConfig::default())
        .with_clock(Arc::new(FrozenClock));
    let mut results = Vec::new();
    for record in &fx.records {
        let mut q = QueryResult::new(&record.id);
        for kind in TaskKind::ALL {
            q.tasks.insert(kind, TaskResult::from_outcome(oracle.run_task(kind, record).map(|o| o.transcript)));
        }
        results.push(q);
    }
    let report =
        score_run(&results, &fx.records, &Default::default(), Execution::default()).map_err(|e| e.to_string())?;
    let all = [report.s_e2e, report.s_req, report.s_rer, report.s_sum];
    ensure(all.iter().all(|v| (v - 100.0).abs() < 1e-9), || format!("oracle scores {all:?}"))?;
    within(start.elapsed(), 120)?;
    Ok(format!("{} queries, 3 identical runs ({} bytes), oracle 100/100/100/100", fx.records.len(), runs[0].len()))
}

fn ttc_behaviour() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fx = generate_fixtures(dir.path(), 4, &PipelineConfig::default()).map_err(|e| e.to_string())?;
    let stub = Arc::new(ScriptedStub::load(&fx.stub_path).map_err(|e| e.to_string())?);
    let engine = Engine::new(WebClient::replay(FixtureStore::new(&fx.fixture_dir)), stub, PipelineConfig::default())
        .with_clock(Arc::new(FrozenClock));
    let err = |e: websight_core::pipeline::PipelineError| e.to_string();
    for record in &fx.records {
        let e2e = engine.run_end_to_end(record).map_err(err)?;
        let e2e_score = answer_f1(&e2e.final_answer, &record.gt_answer);
        let one = engine.run_ttc(record, TtcConfig { n_requery: 1, n_rerank: 1, n_answer: 1 }).map_err(err)?;
        ensure(one.best_score == e2e_score, || {
            format!("{}: ttc(1,1,1) {} vs e2e {e2e_score}", record.id, one.best_score)
        })?;
        let axes: [fn(usize) -> TtcConfig; 3] = [
            |n| TtcConfig { n_requery: n, n_rerank: 1, n_answer: 1 },
            |n| TtcConfig { n_requery: 1, n_rerank: n, n_answer: 1 },
            |n| TtcConfig { n_requery: 1, n_rerank: 1, n_answer: n },
        ];
        for axis in axes {
            let mut previous = 0.0;
            for n in 1..=5 {
                let score = engine.run_ttc(record, axis(n)).map_err(err)?.best_score;
                ensure(score >= previous, || format!("{}: {:?} dropped to {score}", record.id, axis(n)))?;
                previous = score;
            }
        }
    }
    let full = engine.run_ttc(&fx.records[0], TtcConfig::default()).map_err(err)?;
    ensure(full.candidates.len() == 25, || format!("{} candidates", full.candidates.len()))?;
    Ok(format!("{} queries, 25 default candidates", fx.records.len()))
}

fn template_fidelity() -> Outcome {
    let golden = |name: &str| {
        std::fs::read_to_string(format!("{}/tests/golden/{name}.txt", env!("CARGO_MANIFEST_DIR"))).unwrap()
    };
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fx = generate_fixtures(dir.path(), 12, &PipelineConfig::default()).map_err(|e| e.to_string())?;
    let config = PipelineConfig::default();
    let text = fx.records.iter().find(|r| !r.has_query_image()).ok_or("no text-only record")?;
    let visual = fx.records.iter().find(|r| r.has_query_image()).ok_or("no image record")?;
    let mut checked = 0;
    for record in [text, visual] {
        let ctx = QueryContext::from_record(record);
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
        let content = &record.summarization_website.as_ref().ok_or("no summarization website")?.content;
        let suffix = if record.has_query_image() { "image" } else { "text" };
        let bundles = [
            ("requery", build_requery_prompt(&ctx, &config)),
            ("rerank", build_rerank_prompt(&ctx, &briefs, &config)),
            ("summarize", build_summarize_prompt(&ctx, content, &config)),
        ];
        for (stage, bundle) in bundles {
            let bundle = bundle.map_err(|e| e.to_string())?;
            let rendered = bundle.flatten("<image>");
            let template = golden(&format!("{stage}_{suffix}"));
            ensure(matches_outside_placeholders(&template, &rendered), || format!("{stage}_{suffix} deviates"))?;
            checked += 1;
        }
    }
    Ok(format!("{checked} variants byte-identical outside placeholders"))
}

/// The template's literal text must appear in order, with each placeholder
/// matching some (possibly empty) span of the rendered prompt.
fn matches_outside_placeholders(template: &str, rendered: &str) -> bool {
    let placeholder = regex::Regex::new(r"\{(question|query_image|image_search_result|website_information)\}").unwrap();
    let mut pattern = String::from("(?s)^");
    let mut last = 0;
    for m in placeholder.find_iter(template) {
        pattern.push_str(&regex::escape(&template[last..m.start()]));
        pattern.push_str(".*?");
        last = m.end();
    }
    pattern.push_str(&regex::escape(&template[last..]));
    pattern.push('$');
    regex::Regex::new(&pattern).unwrap().is_match(rendered)
}

fn cutoff_filter() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fx = generate_fixtures(dir.path(), 24, &PipelineConfig::default()).map_err(|e| e.to_string())?;
    let dated_news = |rs: &[QueryRecord]| rs.iter().filter(|r| r.area == Area::News && r.timestamp.is_some()).count();
    let knowledge = |rs: &[QueryRecord]| rs.iter().filter(|r| r.area == Area::Knowledge).count();
    let dates: Vec<NaiveDate> = fx.records.iter().filter_map(|r| r.timestamp).collect();
    let (lo, hi) = (dates.iter().min().unwrap(), dates.iter().max().unwrap());
    let span_ok = *lo >= "2024-05-01".parse().unwrap() && *hi <= "2024-08-31".parse().unwrap();
    ensure(span_ok, || format!("fixture spans {lo}..{hi}"))?;

    let early = apply_cutoff_filter(&fx.records, "2024-04-30".parse().unwrap());
    let late = apply_cutoff_filter(&fx.records, "2024-12-31".parse().unwrap());
    let news_total = dated_news(&fx.records);
    ensure(dated_news(&early.kept) == news_total, || "early cutoff dropped News".into())?;
    ensure(dated_news(&late.kept) == 0, || "late cutoff kept dated News".into())?;
    for out in [&early, &late] {
        ensure(knowledge(&out.kept) == knowledge(&fx.records), || "Knowledge count changed".into())?;
    }
    Ok(format!(
        "{news_total} dated News kept/excluded as expected, {} Knowledge unchanged, {} undated kept with warning",
        knowledge(&fx.records),
        late.warnings.len()
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("final-score composition", final_score_rows),
        ("metric oracle equivalence", metric_oracles),
        ("rerank mapping", rerank_mapping),
        ("slimming properties", slimming),
        ("retrieval budget", retrieval_budget),
        ("hermetic end-to-end", hermetic_end_to_end),
        ("test-time compute", ttc_behaviour),
        ("template fidelity", template_fidelity),
        ("cutoff filter", cutoff_filter),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        match outcome {
            Ok(detail) => println!("PASS {}. {name}: {detail} [{elapsed:.2?}]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}. {name}: {detail} [{elapsed:.2?}]", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
