//! Requery-relevant text selection under a token budget.
//!
//! Pages are cut into paragraph-aligned chunks, scored against the requery
//! by a pluggable [`RelevanceScorer`], and packed greedily by score. Tokens
//! are counted with the metrics tokenizer.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::metrics::{count_tokens, normalize_tokens};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub text: String,
    /// Character index of the chunk's first character in the source text.
    pub start_offset: usize,
    pub token_count: usize,
    pub score: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("scorer {scorer} failed on chunk {chunk_index}: {message}")]
    Scorer { scorer: String, chunk_index: usize, message: String },
    #[error("unknown scorer {0:?}")]
    UnknownScorer(String),
}

/// Relevance of a chunk to a requery. Scores must be non-negative and
/// deterministic; implementations are called concurrently.
pub trait RelevanceScorer: Send + Sync {
    fn name(&self) -> &str;

    fn score(&self, requery: &str, chunk: &str) -> Result<f64, String>;

    /// Scores a whole chunk list. Corpus-aware scorers override this.
    fn score_all(&self, requery: &str, chunks: &[Chunk]) -> Result<Vec<f64>, RetrievalError> {
        chunks
            .iter()
            .enumerate()
            .map(|(i, c)| {
                self.score(requery, &c.text).map_err(|message| RetrievalError::Scorer {
                    scorer: self.name().to_string(),
                    chunk_index: i,
                    message,
                })
            })
            .collect()
    }
}

/// BM25 term weighting with document frequencies taken over the page's chunks.
#[derive(Debug, Clone)]
pub struct LexicalScorer {
    pub k1: f64,
    pub b: f64,
    pub exec: Execution,
}

impl Default for LexicalScorer {
    fn default() -> Self {
        LexicalScorer { k1: 1.2, b: 0.75, exec: Execution::default() }
    }
}

impl LexicalScorer {
    fn idf(n_docs: f64, df: f64) -> f64 {
        ((n_docs - df + 0.5) / (df + 0.5) + 1.0).ln()
    }
}

impl RelevanceScorer for LexicalScorer {
    fn name(&self) -> &str {
        "lexical"
    }

    fn score(&self, requery: &str, chunk: &str) -> Result<f64, String> {
        let one = [Chunk { text: chunk.to_string(), start_offset: 0, token_count: count_tokens(chunk), score: 0.0 }];
        self.score_all(requery, &one).map(|v| v[0]).map_err(|e| e.to_string())
    }

    fn score_all(&self, requery: &str, chunks: &[Chunk]) -> Result<Vec<f64>, RetrievalError> {
        let query_terms: HashSet<String> = normalize_tokens(requery).tokens().iter().cloned().collect();
        if chunks.is_empty() {
            return Ok(Vec::new());
        }
        if query_terms.is_empty() {
            return Ok(vec![0.0; chunks.len()]);
        }
        let docs: Vec<Vec<String>> = self.exec.map(chunks, |c| normalize_tokens(&c.text).tokens().to_vec());
        let mut df: HashMap<&str, usize> = HashMap::new();
        for doc in &docs {
            let unique: HashSet<&str> = doc.iter().map(String::as_str).collect();
            for t in unique {
                *df.entry(t).or_insert(0) += 1;
            }
        }
        let n_docs = docs.len() as f64;
        let avg_len = (docs.iter().map(Vec::len).sum::<usize>() as f64 / n_docs).max(1.0);
        let scores = self.exec.map(&docs, |doc| {
            let mut tf: HashMap<&str, usize> = HashMap::new();
            for t in doc {
                *tf.entry(t.as_str()).or_insert(0) += 1;
            }
            let len_norm = 1.0 - self.b + self.b * doc.len() as f64 / avg_len;
            let mut total = 0.0;
            // Iterate query terms in a fixed order so float sums are reproducible.
            let mut terms: Vec<&String> = query_terms.iter().collect();
            terms.sort();
            for term in terms {
                let f = tf.get(term.as_str()).copied().unwrap_or(0) as f64;
                if f == 0.0 {
                    continue;
                }
                let idf = Self::idf(n_docs, df[term.as_str()] as f64);
                total += idf * f * (self.k1 + 1.0) / (f + self.k1 * len_norm);
            }
            total
        });
        Ok(scores)
    }
}

/// Named scorers available to the pipeline; `"lexical"` is always present.
#[derive(Clone)]
pub struct ScorerRegistry {
    scorers: BTreeMap<String, Arc<dyn RelevanceScorer>>,
}

impl Default for ScorerRegistry {
    fn default() -> Self {
        let mut scorers: BTreeMap<String, Arc<dyn RelevanceScorer>> = BTreeMap::new();
        scorers.insert("lexical".into(), Arc::new(LexicalScorer::default()));
        ScorerRegistry { scorers }
    }
}

impl ScorerRegistry {
    pub fn register(&mut self, name: impl Into<String>, scorer: Arc<dyn RelevanceScorer>) {
        self.scorers.insert(name.into(), scorer);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn RelevanceScorer>, RetrievalError> {
        self.scorers.get(name).cloned().ok_or_else(|| RetrievalError::UnknownScorer(name.to_string()))
    }
}

/// Byte spans of paragraphs, each extended over its trailing blank-line
/// separator so the spans tile `raw`.
fn paragraph_spans(raw: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = 0;
    let bytes = raw.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'\n' {
            // Look for a blank line: newline, optional spaces, newline.
            let mut j = i + 1;
            while j < bytes.len() && (bytes[j] == b' ' || bytes[j] == b'\t' || bytes[j] == b'\r') {
                j += 1;
            }
            if j < bytes.len() && bytes[j] == b'\n' {
                while j < bytes.len() && bytes[j].is_ascii_whitespace() {
                    j += 1;
                }
                spans.push((start, j));
                start = j;
                i = j;
                continue;
            }
        }
        i += 1;
    }
    if start < raw.len() {
        spans.push((start, raw.len()));
    }
    spans
}

/// Splits one span into pieces of at most `target` tokens at word boundaries.
fn split_span(raw: &str, (start, end): (usize, usize), target: usize) -> Vec<(usize, usize, usize)> {
    let text = &raw[start..end];
    let mut pieces = Vec::new();
    let mut piece_start = start;
    let mut tokens = 0;
    let mut cursor = 0;
    for word in text.split_whitespace() {
        let at = cursor + text[cursor..].find(word).expect("word comes from text");
        cursor = at + word.len();
        let counts = count_tokens(word);
        if tokens + counts > target && tokens > 0 {
            pieces.push((piece_start, start + at, tokens));
            piece_start = start + at;
            tokens = 0;
        }
        tokens += counts;
    }
    pieces.push((piece_start, end, tokens));
    pieces
}

/// Paragraph-aligned chunks of at most `target_tokens` tokens each. Chunks
/// tile the input: concatenating their texts gives back `raw` whenever it
/// contains at least one token.
pub fn chunk_text(raw: &str, target_tokens: usize) -> Vec<Chunk> {
    assert!(target_tokens > 0, "target_tokens must be positive");
    let mut units: Vec<(usize, usize, usize)> = Vec::new();
    for span in paragraph_spans(raw) {
        units.extend(split_span(raw, span, target_tokens));
    }

    // Greedy merge of consecutive units up to the target.
    let mut merged: Vec<(usize, usize, usize)> = Vec::new();
    for (s, e, n) in units {
        match merged.last_mut() {
            Some(last) if last.2 + n <= target_tokens => {
                last.1 = e;
                last.2 += n;
            }
            _ => merged.push((s, e, n)),
        }
    }
    // Zero-token leftovers (pure punctuation or whitespace) join a neighbour.
    let mut tiled: Vec<(usize, usize, usize)> = Vec::new();
    let mut pending_start = None;
    for (s, e, n) in merged {
        if n == 0 {
            match tiled.last_mut() {
                Some(last) => last.1 = e,
                None => pending_start = pending_start.or(Some(s)),
            }
            continue;
        }
        tiled.push((pending_start.take().unwrap_or(s), e, n));
    }

    let mut char_offset = 0;
    let mut byte_cursor = 0;
    tiled
        .into_iter()
        .map(|(s, e, n)| {
            char_offset += raw[byte_cursor..s].chars().count();
            byte_cursor = s;
            Chunk { text: raw[s..e].to_string(), start_offset: char_offset, token_count: n, score: 0.0 }
        })
        .collect()
}

/// Assigns each chunk its relevance to `requery`.
pub fn score_chunks(
    mut chunks: Vec<Chunk>,
    requery: &str,
    scorer: &dyn RelevanceScorer,
) -> Result<Vec<Chunk>, RetrievalError> {
    let scores = scorer.score_all(requery, &chunks)?;
    for (i, (chunk, score)) in chunks.iter_mut().zip(scores).enumerate() {
        if score.is_nan() || score < 0.0 {
            return Err(RetrievalError::Scorer {
                scorer: scorer.name().to_string(),
                chunk_index: i,
                message: format!("negative or NaN score {score}"),
            });
        }
        chunk.score = score;
    }
    Ok(chunks)
}

/// Highest-scoring chunks that fit the budget, in document order. Selection
/// stops at the first chunk that would overflow; ties go to the earlier chunk.
pub fn select_chunks(chunks: &[Chunk], budget: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..chunks.len()).collect();
    order.sort_by(|&a, &b| chunks[b].score.total_cmp(&chunks[a].score).then(a.cmp(&b)));
    let mut used = 0;
    let mut picked = Vec::new();
    for i in order {
        if used + chunks[i].token_count > budget {
            break;
        }
        used += chunks[i].token_count;
        picked.push(i);
    }
    picked.sort_unstable();
    picked
}

pub fn join_chunks<'a>(chunks: impl IntoIterator<Item = &'a Chunk>) -> String {
    chunks.into_iter().map(|c| c.text.trim()).collect::<Vec<_>>().join("\n\n")
}

/// At most `budget` tokens of `raw` relevant to `requery`. Text that already
/// fits is returned verbatim.
pub fn retrieve_relevant(
    raw: &str,
    requery: &str,
    budget: usize,
    chunk_tokens: usize,
    scorer: &dyn RelevanceScorer,
) -> Result<String, RetrievalError> {
    if count_tokens(raw) <= budget {
        return Ok(raw.to_string());
    }
    let chunks = score_chunks(chunk_text(raw, chunk_tokens), requery, scorer)?;
    let picked = select_chunks(&chunks, budget);
    Ok(join_chunks(picked.iter().map(|&i| &chunks[i])))
}
