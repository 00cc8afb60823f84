//! Independent oracles and input generators shared by the integration suites.
#![allow(dead_code)]

use std::collections::HashMap;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use websight_core::harness::synthetic_page;
use websight_core::imaging::asset_from_rgba;
use websight_core::metrics::TokenSequence;
use websight_core::model::{ImageAsset, ImageKind, WebsiteAnnotation, WebsiteLabel};

pub fn seq(tokens: &[&str]) -> TokenSequence {
    TokenSequence::from_tokens(tokens.iter().copied())
}

/// Every sequence of length `0..=max_len` over `alphabet`.
pub fn all_sequences<'a>(alphabet: &[&'a str], max_len: usize) -> Vec<Vec<&'a str>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for &a in alphabet {
                let mut t: Vec<&str> = s.clone();
                t.push(a);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn counts<'a>(s: &[&'a str]) -> HashMap<&'a str, usize> {
    let mut m = HashMap::new();
    for &t in s {
        *m.entry(t).or_insert(0) += 1;
    }
    m
}

fn multiset_overlap(a: &[&str], b: &[&str]) -> usize {
    let cb = counts(b);
    counts(a).iter().map(|(t, n)| (*n).min(cb.get(t).copied().unwrap_or(0))).sum()
}

fn f_measure(hits: usize, pred: usize, gold: usize) -> f64 {
    if hits == 0 {
        return 0.0;
    }
    let p = hits as f64 / pred as f64;
    let r = hits as f64 / gold as f64;
    2.0 * p * r / (p + r)
}

pub fn oracle_f1(pred: &[&str], gold: &[&str]) -> f64 {
    match (pred.is_empty(), gold.is_empty()) {
        (true, true) => 1.0,
        (true, _) | (_, true) => 0.0,
        _ => f_measure(multiset_overlap(pred, gold), pred.len(), gold.len()),
    }
}

/// Full-table LCS.
pub fn oracle_lcs(a: &[&str], b: &[&str]) -> usize {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            t[i][j] = if a[i - 1] == b[j - 1] { t[i - 1][j - 1] + 1 } else { t[i - 1][j].max(t[i][j - 1]) };
        }
    }
    t[a.len()][b.len()]
}

pub fn oracle_rouge_l(pred: &[&str], gold: &[&str]) -> f64 {
    match (pred.is_empty(), gold.is_empty()) {
        (true, true) => 1.0,
        (true, _) | (_, true) => 0.0,
        _ => f_measure(oracle_lcs(pred, gold), pred.len(), gold.len()),
    }
}

/// Modified unigram precision with brevity penalty `exp(1 - r/c)` when `c <= r`.
pub fn oracle_bleu1(pred: &[&str], gold: &[&str]) -> f64 {
    let (c, r) = (pred.len() as f64, gold.len() as f64);
    match (pred.is_empty(), gold.is_empty()) {
        (true, true) => return 1.0,
        (true, false) => return 0.0,
        _ => {}
    }
    let precision = multiset_overlap(pred, gold) as f64 / c;
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    precision * bp
}

/// Synthetic page screenshots of assorted sizes.
pub fn screenshot_corpus(n: usize, seed: u64) -> Vec<ImageAsset> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let w = rng.gen_range(48..200);
            let h = rng.gen_range(40..900);
            let page = synthetic_page(w, h, rng.gen());
            asset_from_rgba(format!("shot{i}"), ImageKind::FullpageSegment, &page).unwrap()
        })
        .collect()
}

pub const VOCAB: [&str; 24] = [
    "solar",
    "eclipse",
    "orbit",
    "league",
    "final",
    "score",
    "market",
    "shares",
    "model",
    "release",
    "museum",
    "gallery",
    "tower",
    "bridge",
    "engine",
    "coupe",
    "season",
    "episode",
    "runway",
    "collection",
    "paper",
    "award",
    "team",
    "record",
];

/// Multi-paragraph article of exactly `tokens` word tokens with punctuation.
pub fn article(tokens: usize, seed: u64) -> String {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = String::new();
    let mut in_para = 0;
    for i in 0..tokens {
        if i > 0 {
            if in_para >= rng.gen_range(40..160) {
                out.push_str(".\n\n");
                in_para = 0;
            } else if rng.gen_bool(0.08) {
                out.push_str(", ");
            } else {
                out.push(' ');
            }
        }
        out.push_str(VOCAB[rng.gen_range(0..VOCAB.len())]);
        in_para += 1;
    }
    out.push('.');
    out
}

pub fn random_requery(rng: &mut StdRng) -> String {
    let n = rng.gen_range(1..6);
    (0..n).map(|_| VOCAB[rng.gen_range(0..VOCAB.len())]).collect::<Vec<_>>().join(" ")
}

pub fn annotations(labels: &[WebsiteLabel]) -> Vec<WebsiteAnnotation> {
    labels
        .iter()
        .enumerate()
        .map(|(i, &label)| WebsiteAnnotation {
            url: format!("https://site{i}.example/"),
            title: String::new(),
            snippet: String::new(),
            top_screenshot: ImageAsset::from_bytes(format!("s{i}"), ImageKind::TopSectionScreenshot, 1, 1, Vec::new()),
            label,
        })
        .collect()
}

/// True when `output` is the `"\n\n"` join of some in-order selection of chunk texts.
pub fn is_chunk_subsequence(output: &str, chunks: &[&str]) -> bool {
    if output.is_empty() {
        return true;
    }
    let mut rest = output;
    let mut first = true;
    for chunk in chunks {
        let candidate = if first { chunk.to_string() } else { format!("\n\n{chunk}") };
        if let Some(tail) = rest.strip_prefix(candidate.as_str()) {
            if tail.is_empty() || tail.starts_with("\n\n") {
                rest = tail;
                first = false;
                if rest.is_empty() {
                    return true;
                }
            }
        }
    }
    false
}
