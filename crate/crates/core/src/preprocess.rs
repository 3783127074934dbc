//! Raw book text to token sequence, plus lexicon coverage and the
//! corpus eligibility gate.

use std::collections::HashSet;
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::Lexicon;

/// Minimum fraction of distinct words found in the lexicon.
pub const MIN_UNIQUE_COVERAGE: f64 = 0.60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoilerplateFlag {
    Stripped,
    NoMarkers,
    NoEndMarker,
}

/// Keeps the text between the `*** START OF` and `*** END OF` marker lines.
pub fn strip_boilerplate(text: &str) -> (String, BoilerplateFlag) {
    let lines: Vec<&str> = text.lines().collect();
    let has = |line: &str, marker: &str| line.to_ascii_uppercase().contains(marker);
    let Some(start) = lines.iter().position(|l| has(l, "*** START OF")) else {
        return (text.to_string(), BoilerplateFlag::NoMarkers);
    };
    let end = lines[start + 1..]
        .iter()
        .position(|l| has(l, "*** END OF"))
        .map(|i| start + 1 + i);
    match end {
        Some(end) => (lines[start + 1..end].join("\n"), BoilerplateFlag::Stripped),
        None => (lines[start + 1..].join("\n"), BoilerplateFlag::NoEndMarker),
    }
}

fn irregular_negations() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(won|can|shan)['’]t\b").unwrap())
}

fn suffixes() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)(\p{L})(n['’]t|['’](?:ll|re|ve|m|s|d))\b").unwrap())
}

/// Expands unambiguous contractions and deletes ambiguous ones (`'s`, `'d`).
pub fn expand_contractions(text: &str) -> String {
    let text = irregular_negations().replace_all(text, |caps: &regex::Captures| {
        let stem = &caps[1];
        let base = match stem.to_ascii_lowercase().as_str() {
            "won" => "will",
            "can" => "can",
            _ => "shall",
        };
        let base = if stem.starts_with(char::is_uppercase) {
            let mut c = base.chars();
            c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
        } else {
            base.to_string()
        };
        format!("{base} not")
    });
    suffixes()
        .replace_all(&text, |caps: &regex::Captures| {
            let suffix = caps[2].to_ascii_lowercase().replace('’', "'");
            let expansion = match suffix.as_str() {
                "n't" => " not",
                "'ll" => " will",
                "'re" => " are",
                "'ve" => " have",
                "'m" => " am",
                _ => "",
            };
            format!("{}{}", &caps[1], expansion)
        })
        .into_owned()
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenSequence {
    pub source_id: String,
    pub tokens: Vec<String>,
}

impl TokenSequence {
    pub fn new(source_id: impl Into<String>, tokens: Vec<String>) -> Self {
        Self {
            source_id: source_id.into(),
            tokens,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// One token per line.
    pub fn to_lines(&self) -> String {
        let mut out = String::with_capacity(self.tokens.iter().map(|t| t.len() + 1).sum());
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        out
    }
}

/// Lowercases, splits on whitespace, trims edge punctuation, and drops
/// anything still containing a digit or non-letter character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let lower = raw.to_lowercase();
            let trimmed = lower.trim_matches(|c: char| !c.is_alphanumeric());
            if trimmed.is_empty() || !trimmed.chars().all(char::is_alphabetic) {
                return None;
            }
            Some(trimmed.to_string())
        })
        .collect()
}

/// Full preprocessing chain for one document.
pub fn preprocess(source_id: impl Into<String>, raw: &str) -> (TokenSequence, BoilerplateFlag) {
    let (body, flag) = strip_boilerplate(raw);
    let tokens = tokenize(&expand_contractions(&body));
    (TokenSequence::new(source_id, tokens), flag)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageStats {
    pub unique_coverage: f64,
    pub token_coverage: f64,
    pub total_tokens: usize,
    pub unique_types: usize,
}

pub fn coverage(tokens: &TokenSequence, lex: &Lexicon) -> Result<CoverageStats> {
    if tokens.is_empty() {
        return Err(Error::UndefinedCoverage);
    }
    let types: HashSet<&str> = tokens.tokens.iter().map(String::as_str).collect();
    let type_hits = types.iter().filter(|t| lex.contains(t)).count();
    let token_hits = tokens.tokens.iter().filter(|t| lex.contains(t)).count();
    Ok(CoverageStats {
        unique_coverage: type_hits as f64 / types.len() as f64,
        token_coverage: token_hits as f64 / tokens.len() as f64,
        total_tokens: tokens.len(),
        unique_types: types.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ineligibility {
    Coverage,
    EmptyWindow,
}

impl fmt::Display for Ineligibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ineligibility::Coverage => "coverage",
            Ineligibility::EmptyWindow => "empty_window",
        })
    }
}

/// Eligibility gate: unique coverage of at least 60% and a lexicon hit in
/// every window. Returns every failed criterion.
pub fn eligible(stats: &CoverageStats, window_hits: &[bool]) -> std::result::Result<(), Vec<Ineligibility>> {
    let mut reasons = Vec::new();
    if stats.unique_coverage < MIN_UNIQUE_COVERAGE {
        reasons.push(Ineligibility::Coverage);
    }
    if window_hits.iter().any(|hit| !hit) {
        reasons.push(Ineligibility::EmptyWindow);
    }
    if reasons.is_empty() {
        Ok(())
    } else {
        Err(reasons)
    }
}
