use serde::{Deserialize, Serialize};

use super::{Engine, PipelineError};
use crate::metrics::{answer_f1, requery_score};
use crate::model::{QueryRecord, SessionTranscript, TaskKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TtcConfig {
    pub n_requery: usize,
    pub n_rerank: usize,
    pub n_answer: usize,
}

impl Default for TtcConfig {
    fn default() -> Self {
        TtcConfig { n_requery: 5, n_rerank: 5, n_answer: 5 }
    }
}

impl TtcConfig {
    /// End-to-end outputs scored: one per (rerank sample, answer sample).
    pub fn candidate_count(&self) -> usize {
        self.n_rerank * self.n_answer
    }
}

impl std::str::FromStr for TtcConfig {
    type Err = String;

    /// Parses `"5,5,5"` (requery, rerank, answer).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|e| format!("bad count {p:?}: {e}")))
            .collect::<Result<_, _>>()?;
        match parts.as_slice() {
            &[n_requery, n_rerank, n_answer] if n_requery > 0 && n_rerank > 0 && n_answer > 0 => {
                Ok(TtcConfig { n_requery, n_rerank, n_answer })
            }
            _ => Err(format!("expected three positive counts like 5,5,5, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtcCandidate {
    pub rerank_attempt: u32,
    /// 1-based website used.
    pub selected: usize,
    pub url: String,
    pub answer_attempt: u32,
    pub answer: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtcOutcome {
    /// Every model call of the run; `final_answer` is the best candidate's.
    pub transcript: SessionTranscript,
    pub requery_scores: Vec<f64>,
    /// Index of the requery sample kept.
    pub selected_requery: usize,
    pub candidates: Vec<TtcCandidate>,
    pub best_score: f64,
}

fn first_max(values: impl IntoIterator<Item = f64>) -> Option<(usize, f64)> {
    values.into_iter().enumerate().fold(None, |best, (i, v)| match best {
        Some((_, b)) if b >= v => best,
        _ => Some((i, v)),
    })
}

impl Engine {
    /// Best-of-N sampling. The requery kept is the one closest to the
    /// reference requery, so this is an oracle-assisted upper bound. Each
    /// distinct website chosen by the rerank samples is answered `n_answer`
    /// times; every (rerank sample, answer sample) pair is a candidate and
    /// the best F1 is reported.
    pub fn run_ttc(&self, record: &QueryRecord, ttc: TtcConfig) -> Result<TtcOutcome, PipelineError> {
        let temp = |n: usize| if n > 1 { self.config.ttc_temperature } else { self.config.temperature };
        let mut transcript = SessionTranscript::new(&record.id, TaskKind::EndToEnd);

        let mut requeries = Vec::with_capacity(ttc.n_requery);
        for attempt in 0..ttc.n_requery as u32 {
            requeries.push(self.requery(record, &mut transcript, attempt, temp(ttc.n_requery))?);
        }
        let requery_scores: Vec<f64> = requeries.iter().map(|r| requery_score(r, &record.gt_requery)).collect();
        let (selected_requery, _) = first_max(requery_scores.iter().copied()).expect("at least one requery");
        let requery = &requeries[selected_requery];

        let briefs = self.search(record, requery)?;
        let mut selections = Vec::with_capacity(ttc.n_rerank);
        for attempt in 0..ttc.n_rerank as u32 {
            let (_, selected) = self.rerank(record, &briefs, &mut transcript, attempt, temp(ttc.n_rerank))?;
            selections.push(selected);
        }

        let mut unique: Vec<usize> = Vec::new();
        for &s in &selections {
            if !unique.contains(&s) {
                unique.push(s);
            }
        }
        let mut answers: Vec<(usize, Vec<String>)> = Vec::with_capacity(unique.len());
        for &site in &unique {
            let content = self.full_content(&briefs[site - 1], requery)?;
            let mut samples = Vec::with_capacity(ttc.n_answer);
            for attempt in 0..ttc.n_answer as u32 {
                samples.push(self.summarize(record, &content, &mut transcript, attempt, temp(ttc.n_answer))?);
            }
            answers.push((site, samples));
        }

        let mut candidates = Vec::with_capacity(ttc.candidate_count());
        for (rerank_attempt, &site) in selections.iter().enumerate() {
            let samples = &answers.iter().find(|(s, _)| *s == site).expect("answered every site").1;
            for (answer_attempt, answer) in samples.iter().enumerate() {
                candidates.push(TtcCandidate {
                    rerank_attempt: rerank_attempt as u32,
                    selected: site,
                    url: briefs[site - 1].url.clone(),
                    answer_attempt: answer_attempt as u32,
                    answer: answer.clone(),
                    score: answer_f1(answer, &record.gt_answer),
                });
            }
        }
        let (best, best_score) = first_max(candidates.iter().map(|c| c.score)).expect("at least one candidate");
        transcript.final_answer = candidates[best].answer.clone();
        Ok(TtcOutcome { transcript, requery_scores, selected_requery, candidates, best_score })
    }
}
