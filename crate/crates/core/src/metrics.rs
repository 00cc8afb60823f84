//! Lexical scoring: answer F1, ROUGE-L, BLEU-1, the requery and rerank
//! scores, and the weighted final score.
//!
//! Metric functions return fractions in `[0, 1]`; [`final_score`] works on
//! percentages.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::model::{WebsiteAnnotation, WebsiteLabel};

/// Lowercased word tokens with edge punctuation removed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        TokenSequence(tokens.into_iter().flat_map(|t| normalize_tokens(t.as_ref()).0).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }
}

fn is_edge_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}'
                ..='\u{201F}'
                    | '\u{2026}'
                    | '\u{2013}'
                    | '\u{2014}'
                    | '\u{00AB}'
                    | '\u{00BB}'
                    | '\u{00BF}'
                    | '\u{00A1}'
                    | '\u{3001}'
                    | '\u{3002}'
                    | '\u{FF0C}'
                    | '\u{FF01}'
                    | '\u{FF1F}'
        )
}

/// Lowercase, split on whitespace, trim punctuation at token edges and drop
/// tokens that end up empty. Interior punctuation (`2024-06-28`) survives.
pub fn normalize_tokens(text: &str) -> TokenSequence {
    TokenSequence(
        text.split_whitespace()
            .map(|raw| raw.trim_matches(is_edge_punct))
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .collect(),
    )
}

/// Number of normalized tokens in `text`.
pub fn count_tokens(text: &str) -> usize {
    text.split_whitespace().filter(|raw| !raw.trim_matches(is_edge_punct).is_empty()).count()
}

fn counts(tokens: &[String]) -> HashMap<&str, usize> {
    let mut map = HashMap::new();
    for t in tokens {
        *map.entry(t.as_str()).or_insert(0) += 1;
    }
    map
}

fn clipped_overlap(pred: &[String], gold: &[String]) -> usize {
    let gold_counts = counts(gold);
    counts(pred).into_iter().map(|(tok, n)| n.min(gold_counts.get(tok).copied().unwrap_or(0))).sum()
}

fn harmonic(overlap: usize, pred_len: usize, gold_len: usize) -> f64 {
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / pred_len as f64;
    let r = overlap as f64 / gold_len as f64;
    2.0 * p * r / (p + r)
}

/// Bag-of-tokens F1. Both empty scores 1, exactly one empty scores 0.
pub fn f1_score(pred: &TokenSequence, gold: &TokenSequence) -> f64 {
    match (pred.is_empty(), gold.is_empty()) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => harmonic(clipped_overlap(&pred.0, &gold.0), pred.len(), gold.len()),
    }
}

/// Length of the longest common subsequence, two-row DP.
pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based F-measure with beta = 1.
pub fn rouge_l(pred: &TokenSequence, gold: &TokenSequence) -> f64 {
    match (pred.is_empty(), gold.is_empty()) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => harmonic(lcs_len(&pred.0, &gold.0), pred.len(), gold.len()),
    }
}

/// Clipped unigram precision times the brevity penalty, no smoothing.
pub fn bleu1(pred: &TokenSequence, gold: &TokenSequence) -> f64 {
    match (pred.is_empty(), gold.is_empty()) {
        (true, true) => return 1.0,
        (true, false) => return 0.0,
        _ => {}
    }
    let precision = clipped_overlap(&pred.0, &gold.0) as f64 / pred.len() as f64;
    let bp = (1.0 - gold.len() as f64 / pred.len() as f64).exp().min(1.0);
    precision * bp
}

/// Answer F1 on raw strings.
pub fn answer_f1(pred: &str, gold: &str) -> f64 {
    f1_score(&normalize_tokens(pred), &normalize_tokens(gold))
}

/// Mean of ROUGE-L and BLEU-1 between a model requery and the annotated one.
pub fn requery_score(pred_requery: &str, gt_requery: &str) -> f64 {
    let pred = normalize_tokens(pred_requery);
    let gold = normalize_tokens(gt_requery);
    (rouge_l(&pred, &gold) + bleu1(&pred, &gold)) / 2.0
}

/// Outcome of parsing a rerank response: a 1-based website index or nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RerankChoice {
    Index(usize),
    Unparseable,
}

impl From<Option<usize>> for RerankChoice {
    fn from(value: Option<usize>) -> Self {
        value.map_or(RerankChoice::Unparseable, RerankChoice::Index)
    }
}

pub fn label_score(label: WebsiteLabel) -> f64 {
    match label {
        WebsiteLabel::Valid => 1.0,
        WebsiteLabel::Unsure => 0.5,
        WebsiteLabel::Invalid => 0.0,
    }
}

/// 1.0 for a valid pick, 0.5 for unsure, 0 for invalid, unparseable or
/// out-of-range choices.
pub fn rerank_score(choice: RerankChoice, annotations: &[WebsiteAnnotation]) -> f64 {
    match choice {
        RerankChoice::Index(i) if i >= 1 => annotations.get(i - 1).map_or(0.0, |a| label_score(a.label)),
        _ => 0.0,
    }
}

pub const W_E2E: f64 = 0.75;
pub const W_REQ: f64 = 0.05;
pub const W_RER: f64 = 0.1;
pub const W_SUM: f64 = 0.1;

/// Weighted composite of the four task scores. Unrounded.
pub fn final_score(s_e2e: f64, s_req: f64, s_rer: f64, s_sum: f64) -> f64 {
    W_E2E * s_e2e + W_REQ * s_req + W_RER * s_rer + W_SUM * s_sum
}

/// One-decimal display rounding.
pub fn display_round(value: f64) -> f64 {
    (value * 10.0).round() / 10.0
}
