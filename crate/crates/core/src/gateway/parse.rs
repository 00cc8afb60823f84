use std::sync::LazyLock;

use regex::Regex;

use crate::metrics::RerankChoice;

static CHOICE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)<\s*website\s*(\d+)\s*>").expect("static regex"));

/// First `<Website n>` in the output, case- and space-insensitive. A first
/// match outside `[1, k]` makes the whole output unparseable.
pub fn parse_rerank_choice(raw: &str, k: usize) -> RerankChoice {
    let Some(caps) = CHOICE.captures(raw) else {
        return RerankChoice::Unparseable;
    };
    match caps[1].parse::<usize>() {
        Ok(n) if (1..=k).contains(&n) => RerankChoice::Index(n),
        _ => RerankChoice::Unparseable,
    }
}

const QUOTES: &[(char, char)] =
    &[('"', '"'), ('\'', '\''), ('`', '`'), ('\u{201c}', '\u{201d}'), ('\u{2018}', '\u{2019}')];

fn strip_label(s: &str) -> &str {
    match s.get(..7) {
        Some(head) if head.eq_ignore_ascii_case("answer:") => s[7..].trim(),
        _ => s,
    }
}

fn strip_quotes(s: &str) -> &str {
    for &(open, close) in QUOTES {
        if let Some(inner) = s.strip_prefix(open).and_then(|rest| rest.strip_suffix(close)) {
            return inner.trim();
        }
    }
    s
}

/// Trims whitespace, a leading `Answer:` label and one pair of surrounding
/// quotes. Nothing else is rewritten.
pub fn postprocess_answer(raw: &str) -> String {
    strip_quotes(strip_label(raw.trim())).to_string()
}
