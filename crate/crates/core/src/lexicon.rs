//! Word-score lexicons and the valence/arousal/dominance to
//! power/danger/structure transform.
//!
//! Two tabular layouts are accepted, both with a header row and either tab
//! or comma separators:
//!
//! ```text
//! word    power   danger  [structure]
//! word    valence arousal dominance
//! ```
//!
//! VAD rows are rescaled to `[-1/2, 1/2]` and rotated into the ousiometric
//! frame on load; power/danger rows are stored verbatim.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw valence/arousal/dominance ratings, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VadScore {
    pub valence: f64,
    pub arousal: f64,
    pub dominance: f64,
}

/// VAD ratings shifted to `[-1/2, 1/2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedVad {
    pub valence: f64,
    pub arousal: f64,
    pub dominance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PdsScore {
    pub power: f64,
    pub danger: f64,
    pub structure: f64,
}

/// The ousiometric axis a series is built on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Power,
    Danger,
}

impl Dimension {
    pub const ALL: [Dimension; 2] = [Dimension::Power, Dimension::Danger];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Power => "power",
            Dimension::Danger => "danger",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Dimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "power" => Ok(Dimension::Power),
            "danger" => Ok(Dimension::Danger),
            other => Err(Error::Config(format!("unknown dimension {other:?}"))),
        }
    }
}

impl PdsScore {
    pub fn component(&self, dim: Dimension) -> f64 {
        match dim {
            Dimension::Power => self.power,
            Dimension::Danger => self.danger,
        }
    }
}

/// SVD basis taking rescaled VAD to goodness/energy/structure.
const SVD_BASIS: [[f64; 3]; 3] = [
    [0.86, -0.15, 0.48],
    [-0.16, 0.83, 0.54],
    [0.48, 0.55, -0.69],
];

/// Clockwise rotation by pi/4 in the goodness-energy plane.
const ROTATION: [[f64; 3]; 3] = [
    [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2, 0.0],
    [-std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2, 0.0],
    [0.0, 0.0, 1.0],
];

fn mat_vec(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (o, row) in out.iter_mut().zip(m) {
        *o = row[0] * v[0] + row[1] * v[1] + row[2] * v[2];
    }
    out
}

/// Shifts each rating from `[0, 1]` to `[-1/2, 1/2]`.
pub fn normalize_vad(raw: VadScore) -> Result<NormalizedVad> {
    for (name, value) in [
        ("valence", raw.valence),
        ("arousal", raw.arousal),
        ("dominance", raw.dominance),
    ] {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidLexiconEntry {
                word: String::new(),
                detail: format!("{name} {value} outside [0, 1]"),
            });
        }
    }
    Ok(NormalizedVad {
        valence: raw.valence - 0.5,
        arousal: raw.arousal - 0.5,
        dominance: raw.dominance - 0.5,
    })
}

pub fn denormalize_vad(v: NormalizedVad) -> VadScore {
    VadScore {
        valence: v.valence + 0.5,
        arousal: v.arousal + 0.5,
        dominance: v.dominance + 0.5,
    }
}

pub fn vad_to_pds(v: NormalizedVad) -> PdsScore {
    let ges = mat_vec(&SVD_BASIS, [v.valence, v.arousal, v.dominance]);
    let [power, danger, structure] = mat_vec(&ROTATION, ges);
    PdsScore {
        power,
        danger,
        structure,
    }
}

/// Immutable word to score map.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: HashMap<String, PdsScore>,
    duplicates: usize,
    skipped: usize,
}

impl Lexicon {
    /// Builds a lexicon from `(word, score)` pairs. Words are lowercased;
    /// later duplicates replace earlier ones. Words with non-letter
    /// characters are skipped.
    pub fn from_entries<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = (S, PdsScore)>,
        S: AsRef<str>,
    {
        let mut lex = Lexicon::default();
        for (word, score) in entries {
            lex.insert(word.as_ref(), score);
        }
        lex
    }

    fn insert(&mut self, word: &str, score: PdsScore) {
        let word = word.trim().to_lowercase();
        if word.is_empty() || !word.chars().all(char::is_alphabetic) {
            self.skipped += 1;
            return;
        }
        if self.entries.insert(word, score).is_some() {
            self.duplicates += 1;
        }
    }

    pub fn get(&self, word: &str) -> Option<&PdsScore> {
        self.entries.get(word)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Rows whose word had already been seen.
    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    /// Rows dropped because the word was empty or not purely alphabetic.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &PdsScore)> {
        self.entries.iter().map(|(w, s)| (w.as_str(), s))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: Read>(mut reader: R) -> Result<Self> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let text = text.strip_prefix('\u{feff}').unwrap_or(text);
        let header = text.lines().next().ok_or(Error::EmptyLexicon)?;
        let delimiter = if header.contains('\t') { b'\t' } else { b',' };
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .has_headers(true)
            .trim(csv::Trim::All)
            .quoting(delimiter == b',')
            .from_reader(text.as_bytes());

        let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.to_lowercase()).collect();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let word_col = col("word").ok_or_else(|| Error::LexiconFormat("missing column \"word\"".into()))?;
        let layout = match (col("power"), col("danger"), col("valence"), col("arousal"), col("dominance")) {
            (Some(p), Some(d), ..) => Layout::Pds {
                power: p,
                danger: d,
                structure: col("structure"),
            },
            (_, _, Some(v), Some(a), Some(d)) => Layout::Vad {
                valence: v,
                arousal: a,
                dominance: d,
            },
            _ => {
                return Err(Error::LexiconFormat(
                    "expected columns {word, power, danger} or {word, valence, arousal, dominance}".into(),
                ))
            }
        };

        let mut lex = Lexicon::default();
        let mut rows = 0usize;
        for record in rdr.records() {
            let record = record?;
            if record.iter().all(str::is_empty) {
                continue;
            }
            rows += 1;
            let word = record.get(word_col).unwrap_or_default();
            let field = |idx: usize| -> Result<f64> {
                let raw = record.get(idx).unwrap_or_default();
                raw.parse::<f64>().map_err(|_| Error::InvalidLexiconEntry {
                    word: word.to_string(),
                    detail: format!("unparsable number {raw:?} in column {:?}", headers[idx]),
                })
            };
            let score = match layout {
                Layout::Pds {
                    power,
                    danger,
                    structure,
                } => PdsScore {
                    power: field(power)?,
                    danger: field(danger)?,
                    structure: structure.map(field).transpose()?.unwrap_or(0.0),
                },
                Layout::Vad {
                    valence,
                    arousal,
                    dominance,
                } => {
                    let raw = VadScore {
                        valence: field(valence)?,
                        arousal: field(arousal)?,
                        dominance: field(dominance)?,
                    };
                    let normalized = normalize_vad(raw).map_err(|e| match e {
                        Error::InvalidLexiconEntry { detail, .. } => Error::InvalidLexiconEntry {
                            word: word.to_string(),
                            detail,
                        },
                        other => other,
                    })?;
                    vad_to_pds(normalized)
                }
            };
            lex.insert(word, score);
        }
        if rows == 0 || lex.is_empty() {
            return Err(Error::EmptyLexicon);
        }
        if lex.duplicates > 0 {
            log::warn!("lexicon contained {} duplicate words; last entry kept", lex.duplicates);
        }
        Ok(lex)
    }
}

#[derive(Clone, Copy)]
enum Layout {
    Pds {
        power: usize,
        danger: usize,
        structure: Option<usize>,
    },
    Vad {
        valence: usize,
        arousal: usize,
        dominance: usize,
    },
}
