//! Windowed ousiometric scores over word-time and shuffled-text surrogates.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::sig6;
use crate::lexicon::{Dimension, Lexicon, PdsScore};
use crate::preprocess::TokenSequence;
use crate::stats::compensated_sum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub window_size: usize,
    pub skip: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window_size: 50,
            skip: 50,
        }
    }
}

impl WindowConfig {
    pub fn new(window_size: usize, skip: usize) -> Result<Self> {
        if window_size == 0 || skip == 0 {
            return Err(Error::InvalidWindow(format!(
                "window size and skip must be at least 1 (got {window_size}, {skip})"
            )));
        }
        Ok(Self { window_size, skip })
    }

    pub fn non_overlapping(window_size: usize) -> Result<Self> {
        Self::new(window_size, window_size)
    }

    pub fn is_non_overlapping(&self) -> bool {
        self.skip == self.window_size
    }

    /// Number of full windows in `n_tokens` tokens; trailing tokens that
    /// do not fill a window are dropped.
    pub fn window_count(&self, n_tokens: usize) -> usize {
        if n_tokens < self.window_size {
            0
        } else {
            (n_tokens - self.window_size) / self.skip + 1
        }
    }

    /// Sampling rate of the series in windows per word.
    pub fn sampling_rate(&self) -> f64 {
        1.0 / self.skip as f64
    }
}

/// Per-window scores before the missing-window check.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowScores {
    pub source_id: String,
    pub dimension: Dimension,
    pub config: WindowConfig,
    pub values: Vec<Option<f64>>,
}

impl WindowScores {
    pub fn hit_flags(&self) -> Vec<bool> {
        self.values.iter().map(Option::is_some).collect()
    }

    pub fn into_series(self) -> Result<OusioSeries> {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(index, v)| v.ok_or(Error::MissingWindow { index }))
            .collect::<Result<Vec<_>>>()?;
        Ok(OusioSeries {
            source_id: self.source_id,
            dimension: self.dimension,
            config: self.config,
            values,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OusioSeries {
    pub source_id: String,
    pub dimension: Dimension,
    pub config: WindowConfig,
    pub values: Vec<f64>,
}

impl OusioSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Word index at which window `index` starts.
    pub fn word_time(&self, index: usize) -> usize {
        index * self.config.skip
    }

    /// CSV with columns `window_index, word_time_start, score`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["window_index", "word_time_start", "score"])?;
        for (i, v) in self.values.iter().enumerate() {
            wtr.write_record([i.to_string(), self.word_time(i).to_string(), sig6(*v)])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// A plain series read back from CSV: scores and the inferred skip.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesCsv {
    pub values: Vec<f64>,
    pub skip: Option<usize>,
}

/// Reads a CSV with a `score` column and optional `word_time_start` column.
pub fn read_series_csv<R: Read>(input: R) -> Result<SeriesCsv> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let score_col = find("score").ok_or_else(|| Error::InvalidData("series CSV has no \"score\" column".into()))?;
    let time_col = find("word_time_start");
    let mut values = Vec::new();
    let mut times = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let parse = |col: usize| -> Result<f64> {
            let raw = record.get(col).unwrap_or_default();
            raw.parse::<f64>()
                .map_err(|_| Error::InvalidData(format!("row {}: unparsable value {raw:?}", row + 1)))
        };
        let v = parse(score_col)?;
        if !v.is_finite() {
            return Err(Error::InvalidData(format!("row {}: non-finite score", row + 1)));
        }
        values.push(v);
        if let Some(c) = time_col {
            times.push(parse(c)?);
        }
    }
    let skip = (times.len() >= 2)
        .then(|| times[1] - times[0])
        .filter(|s| *s >= 1.0 && s.fract() == 0.0)
        .map(|s| s as usize);
    Ok(SeriesCsv { values, skip })
}

/// Lexicon scores aligned with a token sequence (`None` for misses).
pub fn token_scores(tokens: &TokenSequence, lex: &Lexicon) -> Vec<Option<PdsScore>> {
    tokens.tokens.iter().map(|t| lex.get(t).copied()).collect()
}

/// Window means over per-token values. Each window value is the mean over
/// lexicon hits, which equals the count-weighted mean over distinct words.
pub fn score_windows(values: &[Option<f64>], cfg: WindowConfig) -> Vec<Option<f64>> {
    (0..cfg.window_count(values.len()))
        .map(|w| {
            let start = w * cfg.skip;
            let hits: Vec<f64> = values[start..start + cfg.window_size].iter().flatten().copied().collect();
            (!hits.is_empty()).then(|| compensated_sum(hits.iter().copied()) / hits.len() as f64)
        })
        .collect()
}

pub fn window_scores_from(
    source_id: &str,
    scores: &[Option<PdsScore>],
    cfg: WindowConfig,
    dim: Dimension,
) -> Result<WindowScores> {
    if cfg.window_count(scores.len()) == 0 {
        return Err(Error::EmptySeries {
            tokens: scores.len(),
            window_size: cfg.window_size,
        });
    }
    let projected: Vec<Option<f64>> = scores.iter().map(|s| s.map(|s| s.component(dim))).collect();
    Ok(WindowScores {
        source_id: source_id.to_string(),
        dimension: dim,
        config: cfg,
        values: score_windows(&projected, cfg),
    })
}

pub fn window_scores(
    tokens: &TokenSequence,
    lex: &Lexicon,
    cfg: WindowConfig,
    dim: Dimension,
) -> Result<WindowScores> {
    window_scores_from(&tokens.source_id, &token_scores(tokens, lex), cfg, dim)
}

/// Fisher-Yates shuffle keyed by `seed`. Any two slices of equal length
/// shuffled with the same seed receive the same permutation.
pub fn shuffle_in_place<T>(items: &mut [T], seed: u64) {
    items.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
}

pub fn shuffle(tokens: &TokenSequence, seed: u64) -> TokenSequence {
    let mut out = tokens.clone();
    shuffle_in_place(&mut out.tokens, seed);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(words: &[&str]) -> TokenSequence {
        TokenSequence::new("t", words.iter().map(|s| s.to_string()).collect())
    }

    fn lex(entries: &[(&str, f64)]) -> Lexicon {
        Lexicon::from_entries(entries.iter().map(|(w, d)| (*w, PdsScore { power: -d, danger: *d, structure: 0.0 })))
    }

    #[test]
    fn weighted_mean_example() {
        let cfg = WindowConfig::new(4, 4).unwrap();
        let ws = window_scores(&seq(&["a", "a", "b", "x"]), &lex(&[("a", 0.2), ("b", 0.8)]), cfg, Dimension::Danger)
            .unwrap();
        let s = ws.into_series().unwrap();
        assert_eq!(s.len(), 1);
        assert!((s.values[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn constant_scores_give_constant_series() {
        let l = lex(&[("a", 0.3), ("b", 0.3)]);
        let words: Vec<&str> = (0..40).map(|i| if i % 3 == 0 { "a" } else { "b" }).collect();
        let s = window_scores(&seq(&words), &l, WindowConfig::new(10, 5).unwrap(), Dimension::Danger)
            .unwrap()
            .into_series()
            .unwrap();
        assert!(s.values.iter().all(|v| (*v - 0.3).abs() < 1e-15));
    }

    #[test]
    fn trailing_tokens_dropped() {
        let cfg = WindowConfig::default();
        assert_eq!(cfg.window_count(120), 2);
        assert_eq!(cfg.window_count(49), 0);
        assert_eq!(cfg.window_count(50), 1);
        assert_eq!(WindowConfig::new(5000, 200).unwrap().window_count(10_000), 26);
        let words = vec!["a"; 120];
        let s = window_scores(&seq(&words), &lex(&[("a", 0.1)]), cfg, Dimension::Power).unwrap();
        assert_eq!(s.values.len(), 2);
    }

    #[test]
    fn errors() {
        assert!(matches!(WindowConfig::new(0, 5), Err(Error::InvalidWindow(_))));
        assert!(matches!(WindowConfig::new(5, 0), Err(Error::InvalidWindow(_))));
        let cfg = WindowConfig::default();
        assert!(matches!(
            window_scores(&seq(&["a"; 10]), &lex(&[("a", 0.1)]), cfg, Dimension::Power),
            Err(Error::EmptySeries { .. })
        ));
        let cfg = WindowConfig::new(2, 2).unwrap();
        let ws = window_scores(&seq(&["a", "a", "z", "z"]), &lex(&[("a", 0.1)]), cfg, Dimension::Power).unwrap();
        assert_eq!(ws.hit_flags(), [true, false]);
        assert!(matches!(ws.into_series(), Err(Error::MissingWindow { index: 1 })));
    }

    #[test]
    fn shuffle_examples() {
        let one = seq(&["solo"]);
        assert_eq!(shuffle(&one, 3), one);
        let words: Vec<String> = (0..200).map(|i| format!("w{}", i % 17)).collect();
        let t = TokenSequence::new("t", words);
        assert_eq!(shuffle(&t, 11), shuffle(&t, 11));
        assert_ne!(shuffle(&t, 11), shuffle(&t, 12));
    }

    #[test]
    fn parallel_arrays_share_permutation() {
        let mut a: Vec<usize> = (0..500).collect();
        let mut b: Vec<String> = (0..500).map(|i| i.to_string()).collect();
        shuffle_in_place(&mut a, 99);
        shuffle_in_place(&mut b, 99);
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_string() == *y));
    }

    #[test]
    fn csv_round_trip() {
        let s = OusioSeries {
            source_id: "b".into(),
            dimension: Dimension::Danger,
            config: WindowConfig::default(),
            values: vec![0.1, -0.25, 0.3333333333],
        };
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, "window_index,word_time_start,score\n0,0,0.1\n1,50,-0.25\n2,100,0.333333\n");
        let back = read_series_csv(buf.as_slice()).unwrap();
        assert_eq!(back.skip, Some(50));
        assert_eq!(back.values, [0.1, -0.25, 0.333333]);
    }

    fn arb_text() -> impl Strategy<Value = Vec<usize>> {
        proptest::collection::vec(0usize..12, 20..300)
    }

    fn vocab_lex() -> (Vec<String>, Lexicon) {
        let words: Vec<String> = (0..12).map(|i| format!("w{}", char::from(b'a' + i as u8))).collect();
        // first 8 words are in the lexicon
        let lex = Lexicon::from_entries(words.iter().take(8).enumerate().map(|(i, w)| {
            let v = (i as f64 * 0.37).sin() * 0.6;
            (w.clone(), PdsScore { power: v * 0.5, danger: v, structure: 0.0 })
        }));
        (words, lex)
    }

    proptest! {
        #[test]
        fn shuffle_preserves_multiset(ids in arb_text(), seed in any::<u64>()) {
            let (vocab, _) = vocab_lex();
            let t = TokenSequence::new("p", ids.iter().map(|&i| vocab[i].clone()).collect());
            let s = shuffle(&t, seed);
            let mut a = t.tokens.clone();
            let mut b = s.tokens.clone();
            a.sort();
            b.sort();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn window_invariants(ids in arb_text(), seed in any::<u64>(), w in 1usize..30, k in 1usize..30) {
            let (vocab, lex) = vocab_lex();
            let t = TokenSequence::new("p", ids.iter().map(|&i| vocab[i].clone()).collect());
            let cfg = WindowConfig::new(w, k).unwrap();
            let Ok(ws) = window_scores(&t, &lex, cfg, Dimension::Danger) else {
                prop_assert!(t.len() < w);
                return Ok(());
            };
            // shuffled text keeps series length
            let shuffled = window_scores(&shuffle(&t, seed), &lex, cfg, Dimension::Danger).unwrap();
            prop_assert_eq!(ws.values.len(), shuffled.values.len());

            let used: Vec<f64> = t.tokens.iter().filter_map(|w| lex.get(w)).map(|s| s.danger).collect();
            let (lo, hi) = used.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
            for v in ws.values.iter().flatten() {
                prop_assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
            }

            // permuting tokens inside the first window leaves its score unchanged
            let mut inner = t.clone();
            inner.tokens[..w].reverse();
            let again = window_scores(&inner, &lex, cfg, Dimension::Danger).unwrap();
            match (ws.values[0], again.values[0]) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
                (a, b) => prop_assert_eq!(a, b),
            }
        }

        #[test]
        fn grand_mean_matches_text_mean(per_window in proptest::collection::vec(proptest::collection::vec(0usize..8, 5), 1..20)) {
            // every window has exactly five lexicon tokens and five misses
            let (vocab, lex) = vocab_lex();
            let mut tokens = Vec::new();
            for hits in &per_window {
                for &h in hits {
                    tokens.push(vocab[h].clone());
                    tokens.push(vocab[8 + h % 4].clone());
                }
            }
            let t = TokenSequence::new("g", tokens);
            let s = window_scores(&t, &lex, WindowConfig::non_overlapping(10).unwrap(), Dimension::Danger)
                .unwrap()
                .into_series()
                .unwrap();
            let grand = s.values.iter().sum::<f64>() / s.len() as f64;
            let all: Vec<f64> = t.tokens.iter().filter_map(|w| lex.get(w)).map(|s| s.danger).collect();
            let whole = all.iter().sum::<f64>() / all.len() as f64;
            prop_assert!((grand - whole).abs() < 1e-12);
        }
    }
}
