use std::collections::{BTreeMap, HashMap};

use super::results::QueryResult;
use super::HarnessError;
use crate::exec::Execution;
use crate::metrics::final_score;
use crate::model::{ComponentScores, ErrorLabel, QueryRecord, QueryScore, ScoreReport, TaskKind};
use crate::pipeline::score_transcript;

/// Unweighted means, as percentages, over a group of per-query scores.
pub fn component_means<'a>(scores: impl IntoIterator<Item = &'a QueryScore>) -> ComponentScores {
    let mut sums = [0.0; 4];
    let mut count = 0;
    for s in scores {
        for (acc, v) in sums.iter_mut().zip([s.e2e, s.req, s.rer, s.sum]) {
            *acc += v;
        }
        count += 1;
    }
    if count == 0 {
        return ComponentScores::default();
    }
    let [e2e, req, rer, sum] = sums.map(|v| 100.0 * v / count as f64);
    ComponentScores { count, s_e2e: e2e, s_req: req, s_rer: rer, s_sum: sum, s_final: final_score(e2e, req, rer, sum) }
}

fn task_score(result: Option<&QueryResult>, kind: TaskKind, record: &QueryRecord) -> Option<f64> {
    let result = result?;
    if let Some(t) = result.transcript(kind) {
        return Some(score_transcript(t, record));
    }
    match (kind, &result.ttc) {
        (TaskKind::EndToEnd, Some(ttc)) => Some(ttc.best_score),
        _ => None,
    }
}

/// Scores every record against the stored outputs. A missing or failed task
/// scores 0 and produces a coverage warning; results for unknown queries are
/// an error. The composite is taken on the aggregate means.
pub fn score_run(
    results: &[QueryResult],
    records: &[QueryRecord],
    labels: &BTreeMap<String, ErrorLabel>,
    exec: Execution,
) -> Result<ScoreReport, HarnessError> {
    let by_id: HashMap<&str, &QueryResult> = results.iter().map(|r| (r.query_id.as_str(), r)).collect();
    let known: HashMap<&str, ()> = records.iter().map(|r| (r.id.as_str(), ())).collect();
    if let Some(stray) = results.iter().find(|r| !known.contains_key(r.query_id.as_str())) {
        return Err(HarnessError::UnknownQuery(stray.query_id.clone()));
    }

    let scored: Vec<(QueryScore, [bool; 4])> = exec.map(records, |record| {
        let result = by_id.get(record.id.as_str()).copied();
        let got = TaskKind::ALL.map(|kind| task_score(result, kind, record));
        let [e2e, req, rer, sum] = got.map(|s| s.unwrap_or(0.0));
        let score = QueryScore {
            query_id: record.id.clone(),
            area: record.area,
            subfield: record.subfield,
            e2e,
            req,
            rer,
            sum,
            final_score: final_score(e2e, req, rer, sum),
        };
        (score, got.map(|s| s.is_none()))
    });

    let mut warnings = Vec::new();
    for (i, kind) in TaskKind::ALL.iter().enumerate() {
        let missing = scored.iter().filter(|(_, m)| m[i]).count();
        if missing > 0 {
            warnings.push(format!("{kind:?}: {missing} of {} queries have no output (scored 0)", records.len()));
        }
    }
    let per_query: Vec<QueryScore> = scored.into_iter().map(|(s, _)| s).collect();

    let overall = component_means(&per_query);
    let mut by_area = BTreeMap::new();
    let mut by_subfield = BTreeMap::new();
    for s in &per_query {
        by_area.entry(s.area).or_insert_with(Vec::new).push(s);
        by_subfield.entry(s.subfield).or_insert_with(Vec::new).push(s);
    }
    let error_labels =
        labels.iter().filter(|(id, _)| known.contains_key(id.as_str())).map(|(k, v)| (k.clone(), v.clone())).collect();
    Ok(ScoreReport {
        s_e2e: overall.s_e2e,
        s_req: overall.s_req,
        s_rer: overall.s_rer,
        s_sum: overall.s_sum,
        s_final: overall.s_final,
        query_count: overall.count,
        by_area: by_area.into_iter().map(|(k, v)| (k, component_means(v))).collect(),
        by_subfield: by_subfield.into_iter().map(|(k, v)| (k, component_means(v))).collect(),
        per_query,
        error_labels,
        warnings,
    })
}
