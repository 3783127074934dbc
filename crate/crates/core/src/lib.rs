//! Ousiometric fluctuation analysis for book-length text.
//!
//! A book is turned into power and danger time series over cumulative
//! word-time, each series is decomposed into intrinsic mode functions
//! (IMFs) with ensemble empirical mode decomposition, and the IMF
//! variances are compared against an ensemble of shuffled-text
//! surrogates to find the lowest IMF order at which word order matters.
//!
//! Module map:
//!
//! - [`lexicon`]: word scores and the VAD to power/danger/structure transform
//! - [`preprocess`]: boilerplate stripping, contractions, tokenization, coverage
//! - [`series`]: windowed scores and shuffled surrogates
//! - [`emd`]: sifting, EMD, EEMD and partial reconstruction
//! - [`hht`]: analytic signal, instantaneous frequency, characteristic period
//! - [`cutoff`]: null ensemble, variance rescaling and cutoff detection
//! - [`corpus`]: per-book pipeline, aggregation and output writers

pub mod corpus;
pub mod cutoff;
pub mod emd;
pub mod error;
pub mod format;
pub mod hht;
pub mod lexicon;
pub mod par;
pub mod preprocess;
pub mod series;
pub mod stats;

pub use error::{Error, Result};
pub use lexicon::{Dimension, Lexicon, PdsScore, VadScore};
pub use par::Execution;
