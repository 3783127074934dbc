//! Synthetic corpora: Zipf-distributed vocabularies with random word scores.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ousio::{Lexicon, PdsScore};
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub struct Vocabulary {
    pub words: Vec<String>,
    pub scores: Vec<PdsScore>,
    cdf: Vec<f64>,
}

/// `index` written in base 26 with letters, so every word is alphabetic.
fn word(mut index: usize) -> String {
    let mut w = String::new();
    loop {
        w.insert(0, (b'a' + (index % 26) as u8) as char);
        index /= 26;
        if index == 0 {
            return format!("w{w}");
        }
        index -= 1;
    }
}

impl Vocabulary {
    /// `size` words with frequency proportional to `1 / rank` and scores
    /// drawn from N(0, 0.15).
    pub fn zipf<R: Rng>(rng: &mut R, size: usize) -> Self {
        let normal = Normal::new(0.0, 0.15).unwrap();
        let weights: Vec<f64> = (1..=size).map(|r| 1.0 / r as f64).collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let cdf = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        let scores = (0..size)
            .map(|_| PdsScore {
                power: normal.sample(rng),
                danger: normal.sample(rng),
                structure: 0.0,
            })
            .collect();
        Self {
            words: (0..size).map(word).collect(),
            scores,
            cdf,
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R, n: usize) -> Vec<String> {
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let i = self.cdf.partition_point(|c| *c < u).min(self.words.len() - 1);
                self.words[i].clone()
            })
            .collect()
    }

    pub fn lexicon(&self) -> Lexicon {
        Lexicon::from_entries(self.words.iter().cloned().zip(self.scores.iter().copied()))
    }

    pub fn lexicon_tsv(&self) -> String {
        let mut s = String::from("word\tpower\tdanger\n");
        for (w, p) in self.words.iter().zip(&self.scores) {
            writeln!(s, "{w}\t{:.6}\t{:.6}", p.power, p.danger).unwrap();
        }
        s
    }
}

/// Tokens laid out as a Gutenberg-style file with header and footer.
pub fn book_text(tokens: &[String]) -> String {
    let mut s = String::from("The Project Gutenberg eBook of a Test\n\n*** START OF THE PROJECT GUTENBERG EBOOK TEST ***\n");
    for (i, chunk) in tokens.chunks(12).enumerate() {
        let mut line = chunk.join(" ");
        if i % 3 == 2 {
            line.push('.');
        } else {
            line.push(',');
        }
        s.push_str(&line);
        s.push('\n');
    }
    s.push_str("*** END OF THE PROJECT GUTENBERG EBOOK TEST ***\nLicense text follows.\n");
    s
}

/// Every file under `dir` with its bytes, keyed by relative path.
pub fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.push((path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}
