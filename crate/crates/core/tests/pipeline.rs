use std::sync::Arc;

use websight_core::exec::Execution;
use websight_core::gateway::{OracleStub, ScriptedStub};
use websight_core::harness::{generate_fixtures, SyntheticFixtures};
use websight_core::metrics::{answer_f1, requery_score};
use websight_core::model::{ParsedOutput, PipelineConfig, Stage, TaskKind, TranscriptFlag};
use websight_core::pipeline::{Engine, FrozenClock, PipelineError, TtcConfig};
use websight_core::webio::{FixtureStore, WebClient, WebError};

fn fixtures(dir: &tempfile::TempDir) -> SyntheticFixtures {
    generate_fixtures(dir.path(), 12, &PipelineConfig::default()).unwrap()
}

fn engine(fx: &SyntheticFixtures, model: Arc<dyn websight_core::gateway::LanguageModel>) -> Engine {
    let web = WebClient::replay(FixtureStore::new(&fx.fixture_dir));
    Engine::new(web, model, PipelineConfig::default()).with_clock(Arc::new(FrozenClock))
}

#[test]
fn oracle_end_to_end_reaches_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures(&dir);
    let e = engine(&fx, Arc::new(OracleStub::from_records(&fx.records)));
    for record in &fx.records {
        let t = e.run_end_to_end(record).unwrap();
        assert_eq!(t.final_answer, record.gt_answer, "{}", record.id);
        assert_eq!(
            t.stages.iter().map(|s| s.stage).collect::<Vec<_>>(),
            [Stage::Requery, Stage::Rerank, Stage::Summarize]
        );
        assert!(t.is_well_ordered(8));
        assert!(t.flags.is_empty());
    }
}

#[test]
fn single_tasks_with_oracle_score_full_marks() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures(&dir);
    let e = engine(&fx, Arc::new(OracleStub::from_records(&fx.records)));
    for kind in TaskKind::ALL {
        for outcome in e.run_batch(kind, &fx.records, Execution::default()) {
            assert_eq!(outcome.unwrap().score, 1.0, "{kind:?}");
        }
    }
}

#[test]
fn requery_only_with_raw_question() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures(&dir);
    let record = &fx.records[0];
    let stub = ScriptedStub::new().with(&record.id, Stage::Requery, &[&record.question]);
    let outcome = engine(&fx, Arc::new(stub)).run_task(TaskKind::RequeryOnly, record).unwrap();
    assert_eq!(outcome.score, requery_score(&record.question, &record.gt_requery));
    assert!(outcome.score > 0.0 && outcome.score < 1.0);
}

#[test]
fn scripted_replay_is_bit_identical_and_flags_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures(&dir);
    let stub: Arc<ScriptedStub> = Arc::new(ScriptedStub::load(&fx.stub_path).unwrap());
    let runs: Vec<String> = (0..3)
        .map(|_| {
            let e = engine(&fx, stub.clone());
            let transcripts: Vec<_> = fx.records.iter().map(|r| e.run_end_to_end(r).unwrap()).collect();
            serde_json::to_string(&transcripts).unwrap()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[1], runs[2]);

    // q002's first scripted rerank output is "Website two".
    let t = engine(&fx, stub).run_end_to_end(&fx.records[2]).unwrap();
    assert_eq!(t.flags, [TranscriptFlag::RerankFallback]);
    match &t.stage(Stage::Rerank).unwrap().parsed {
        ParsedOutput::Rerank { choice, selected, fallback, .. } => {
            assert_eq!((*choice, *selected, *fallback), (None, 1, true));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn unrecorded_search_is_reported_with_stage() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures(&dir);
    let record = &fx.records[0];
    let stub = ScriptedStub::new().with(&record.id, Stage::Requery, &["something never searched"]);
    let err = engine(&fx, Arc::new(stub)).run_end_to_end(record).unwrap_err();
    assert!(matches!(err, PipelineError::Web { stage: Stage::Rerank, source: WebError::FixtureMiss { .. } }), "{err}");
    assert!(!err.is_transport());
}

#[test]
fn ttc_degenerate_matches_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures(&dir);
    let e = engine(&fx, Arc::new(ScriptedStub::load(&fx.stub_path).unwrap()));
    let one = TtcConfig { n_requery: 1, n_rerank: 1, n_answer: 1 };
    for record in &fx.records {
        let e2e = e.run_end_to_end(record).unwrap();
        let ttc = e.run_ttc(record, one).unwrap();
        assert_eq!(ttc.best_score, answer_f1(&e2e.final_answer, &record.gt_answer));
        assert_eq!(ttc.transcript.final_answer, e2e.final_answer);
        assert_eq!(ttc.candidates.len(), 1);
    }
}

#[test]
fn ttc_defaults_and_monotonicity() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures(&dir);
    let e = engine(&fx, Arc::new(ScriptedStub::load(&fx.stub_path).unwrap()));
    for record in fx.records.iter().take(2) {
        let full = e.run_ttc(record, TtcConfig::default()).unwrap();
        assert_eq!(full.candidates.len(), 25);
        assert_eq!(full.requery_scores.len(), 5);
        assert_eq!(full.requery_scores[full.selected_requery], 1.0);
        let calls = full.transcript.stages.len();
        let unique: std::collections::BTreeSet<_> = full.candidates.iter().map(|c| c.selected).collect();
        assert_eq!(calls, 5 + 5 + unique.len() * 5);

        // Search here does not depend on the requery text, so every axis is monotone.
        let axes: [fn(usize) -> TtcConfig; 3] = [
            |n| TtcConfig { n_requery: n, n_rerank: 2, n_answer: 2 },
            |n| TtcConfig { n_requery: 2, n_rerank: n, n_answer: 2 },
            |n| TtcConfig { n_requery: 2, n_rerank: 2, n_answer: n },
        ];
        for axis in axes {
            let scores: Vec<f64> =
                [1, 2, 4].into_iter().map(|n| e.run_ttc(record, axis(n)).unwrap().best_score).collect();
            assert!(scores.windows(2).all(|w| w[0] <= w[1]), "{} {scores:?}", record.id);
        }
        assert!(
            full.best_score >= e.run_end_to_end(record).map(|t| answer_f1(&t.final_answer, &record.gt_answer)).unwrap()
        );
    }
}
