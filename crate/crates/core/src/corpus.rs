//! Per-book pipeline, manifest handling, corpus aggregation and writers.
//!
//! [`process_book`] never fails for data reasons: every stage that can go
//! wrong for a particular book records a [`Reason`] on the [`BookRecord`]
//! and the batch moves on. Only I/O on the output side is fatal.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cutoff::{
    build_null_from_scores, detect_cutoff, imf_variance, period_ratios, trend_variance, Classification,
    CutoffResult, NullConfig, NullEnsemble, RescalingMode,
};
use crate::emd::{eemd, Decomposition, EemdConfig};
use crate::error::{Error, Result};
use crate::format::{round6, sig6};
use crate::hht::{spectrum, FrequencyBins};
use crate::lexicon::{Dimension, Lexicon};
use crate::preprocess::{coverage, eligible, preprocess, BoilerplateFlag, CoverageStats, Ineligibility};
use crate::series::{token_scores, window_scores_from, OusioSeries, WindowConfig};
use crate::stats::percentile;

/// Title keywords; the last word of each is matched as a prefix.
pub const TITLE_KEYWORDS: [&str; 7] = ["poem", "manual", "play", "collection", "short stor", "report", "essay"];

/// Percentiles reported per group.
pub const AGGREGATE_PERCENTILES: [f64; 5] = [9.0, 25.0, 50.0, 75.0, 91.0];

/// One manifest row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookMeta {
    pub book_id: String,
    pub path: PathBuf,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub lcc: Vec<String>,
}

impl BookMeta {
    pub fn new(book_id: impl Into<String>, path: impl Into<PathBuf>) -> Self {
        Self {
            book_id: book_id.into(),
            path: path.into(),
            title: String::new(),
            lcc: Vec::new(),
        }
    }
}

/// LCC class: the leading letter.
pub fn lcc_class(label: &str) -> Option<String> {
    let c = label.trim().chars().next()?;
    c.is_ascii_alphabetic().then(|| c.to_ascii_uppercase().to_string())
}

/// LCC subclass: the leading letter pair, absent for one-letter labels.
pub fn lcc_subclass(label: &str) -> Option<String> {
    let pair: String = label.trim().chars().take(2).collect();
    (pair.len() == 2 && pair.chars().all(|c| c.is_ascii_alphabetic())).then(|| pair.to_ascii_uppercase())
}

fn check_book_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id != "."
        && id != ".."
        && id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidData(format!(
            "book id {id:?} must be non-empty ASCII letters, digits, '-', '_' or '.'"
        )))
    }
}

#[derive(Deserialize)]
struct ManifestRow {
    book_id: String,
    path: String,
    #[serde(default)]
    title: String,
    #[serde(default)]
    lcc: String,
}

/// Reads a tab-separated manifest with header `book_id path title lcc`.
/// `lcc` holds `;`-separated labels. Relative paths resolve against the
/// manifest's directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<BookMeta>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    parse_manifest(file, path.parent().unwrap_or(Path::new("")))
}

pub fn parse_manifest<R: Read>(reader: R, base: &Path) -> Result<Vec<BookMeta>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut seen = BTreeSet::new();
    let mut books = Vec::new();
    for row in rdr.deserialize() {
        let row: ManifestRow = row?;
        check_book_id(&row.book_id)?;
        if !seen.insert(row.book_id.clone()) {
            return Err(Error::InvalidData(format!("duplicate book id {:?} in manifest", row.book_id)));
        }
        let p = PathBuf::from(&row.path);
        books.push(BookMeta {
            path: if p.is_absolute() { p } else { base.join(p) },
            title: row.title,
            lcc: row
                .lcc
                .split(';')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect(),
            book_id: row.book_id,
        });
    }
    Ok(books)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub window: WindowConfig,
    pub eemd: EemdConfig,
    pub null: NullConfig,
    pub dimensions: Vec<Dimension>,
    pub modes: Vec<RescalingMode>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            window: WindowConfig::default(),
            eemd: EemdConfig::default(),
            null: NullConfig::default(),
            dimensions: Dimension::ALL.to_vec(),
            modes: RescalingMode::ALL.to_vec(),
        }
    }
}

impl AnalysisConfig {
    /// Seeds both the EEMD noise and the shuffle sequence.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.eemd.seed = seed;
        self.null.seed = seed;
        self
    }

    pub fn with_execution(mut self, execution: crate::Execution) -> Self {
        self.eemd.execution = execution;
        self.null.execution = execution;
        self
    }

    pub fn validate(&self) -> Result<()> {
        WindowConfig::new(self.window.window_size, self.window.skip)?;
        self.eemd.validate()?;
        if self.null.realizations == 0 {
            return Err(Error::Config("at least one shuffle is required".into()));
        }
        if self.dimensions.is_empty() || self.modes.is_empty() {
            return Err(Error::Config("no dimension or rescaling mode selected".into()));
        }
        Ok(())
    }
}

/// Why a book, or one dimension of it, produced no cutoff result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    Unreadable,
    Coverage,
    EmptyWindow,
    TooShort,
    EemdFailed,
    NullFailed,
    CutoffFailed,
}

impl Reason {
    pub fn as_str(self) -> &'static str {
        match self {
            Reason::Unreadable => "unreadable",
            Reason::Coverage => "coverage",
            Reason::EmptyWindow => "empty_window",
            Reason::TooShort => "too_short",
            Reason::EemdFailed => "eemd_failed",
            Reason::NullFailed => "null_failed",
            Reason::CutoffFailed => "cutoff_failed",
        }
    }
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl From<Ineligibility> for Reason {
    fn from(i: Ineligibility) -> Self {
        match i {
            Ineligibility::Coverage => Reason::Coverage,
            Ineligibility::EmptyWindow => Reason::EmptyWindow,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DimensionRecord {
    pub n_imfs: Option<usize>,
    pub failure: Option<(Reason, String)>,
    pub results: BTreeMap<RescalingMode, CutoffResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BookRecord {
    pub book_id: String,
    pub title: String,
    pub lcc: Vec<String>,
    /// Tokens after preprocessing.
    pub word_count: usize,
    pub boilerplate: Option<BoilerplateFlag>,
    pub coverage: Option<CoverageStats>,
    pub eligible: bool,
    /// Book-level and per-dimension failure reasons, deduplicated.
    pub reasons: Vec<Reason>,
    pub dimensions: BTreeMap<Dimension, DimensionRecord>,
}

impl BookRecord {
    fn empty(meta: &BookMeta) -> Self {
        Self {
            book_id: meta.book_id.clone(),
            title: meta.title.clone(),
            lcc: meta.lcc.clone(),
            word_count: 0,
            boilerplate: None,
            coverage: None,
            eligible: false,
            reasons: Vec::new(),
            dimensions: BTreeMap::new(),
        }
    }

    pub fn result(&self, dim: Dimension, mode: RescalingMode) -> Option<&CutoffResult> {
        self.dimensions.get(&dim)?.results.get(&mode)
    }

    fn fail(&mut self, dim: Dimension, reason: Reason, err: &Error) {
        log::warn!("{}: {dim}: {reason}: {err}", self.book_id);
        self.dimensions.entry(dim).or_default().failure = Some((reason, err.to_string()));
        if !self.reasons.contains(&reason) {
            self.reasons.push(reason);
        }
    }
}

/// Intermediate products kept for the diagnostics files.
#[derive(Debug, Clone)]
pub struct DimensionAnalysis {
    pub series: OusioSeries,
    pub decomposition: Option<Decomposition>,
    pub null: Option<NullEnsemble>,
}

#[derive(Debug, Clone)]
pub struct BookAnalysis {
    pub record: BookRecord,
    pub dimensions: BTreeMap<Dimension, DimensionAnalysis>,
    pub window: WindowConfig,
}

/// Reads and analyzes one book. Unreadable files yield a record with
/// reason `unreadable`; invalid UTF-8 is replaced.
pub fn process_book(meta: &BookMeta, lex: &Lexicon, cfg: &AnalysisConfig) -> BookAnalysis {
    match fs::read(&meta.path) {
        Ok(bytes) => analyze_text(meta, &String::from_utf8_lossy(&bytes), lex, cfg),
        Err(e) => {
            log::warn!("{}: cannot read {}: {e}", meta.book_id, meta.path.display());
            let mut record = BookRecord::empty(meta);
            record.reasons.push(Reason::Unreadable);
            BookAnalysis {
                record,
                dimensions: BTreeMap::new(),
                window: cfg.window,
            }
        }
    }
}

/// Full pipeline on raw book text for every configured dimension and mode.
/// One set of shuffles serves all dimensions.
pub fn analyze_text(meta: &BookMeta, raw: &str, lex: &Lexicon, cfg: &AnalysisConfig) -> BookAnalysis {
    let mut record = BookRecord::empty(meta);
    let mut dims = BTreeMap::new();
    let (tokens, flag) = preprocess(&meta.book_id, raw);
    record.word_count = tokens.len();
    record.boilerplate = Some(flag);
    let done = |record, dims| BookAnalysis {
        record,
        dimensions: dims,
        window: cfg.window,
    };

    let Ok(stats) = coverage(&tokens, lex) else {
        record.reasons.push(Reason::Coverage);
        return done(record, dims);
    };
    record.coverage = Some(stats);
    let scores = token_scores(&tokens, lex);
    let mut windows = Vec::with_capacity(cfg.dimensions.len());
    for &dim in &cfg.dimensions {
        match window_scores_from(&meta.book_id, &scores, cfg.window, dim) {
            Ok(w) => windows.push(w),
            Err(_) => {
                record.reasons.push(Reason::TooShort);
                return done(record, dims);
            }
        }
    }
    if let Err(reasons) = eligible(&stats, &windows[0].hit_flags()) {
        record.reasons.extend(reasons.into_iter().map(Reason::from));
        return done(record, dims);
    }
    record.eligible = true;

    let mut decomposed = Vec::new();
    for w in windows {
        let dim = w.dimension;
        let series = w.into_series().expect("every window has a hit");
        let decomposition = match eemd(&series.values, &cfg.eemd) {
            Ok(d) => {
                record.dimensions.entry(dim).or_default().n_imfs = Some(d.imf_count());
                decomposed.push(dim);
                Some(d)
            }
            Err(e) => {
                let reason = match e {
                    Error::TooShort { .. } => Reason::TooShort,
                    _ => Reason::EemdFailed,
                };
                record.fail(dim, reason, &e);
                None
            }
        };
        dims.insert(
            dim,
            DimensionAnalysis {
                series,
                decomposition,
                null: None,
            },
        );
    }
    if decomposed.is_empty() {
        return done(record, dims);
    }

    match build_null_from_scores(&meta.book_id, &scores, cfg.window, &decomposed, &cfg.null) {
        Ok(nulls) => {
            for (dim, null) in nulls {
                dims.get_mut(&dim).expect("decomposed").null = Some(null);
            }
        }
        Err(e) => {
            for &dim in &decomposed {
                record.fail(dim, Reason::NullFailed, &e);
            }
            return done(record, dims);
        }
    }

    for &dim in &decomposed {
        let a = &dims[&dim];
        let (target, null) = (a.decomposition.as_ref().expect("decomposed"), a.null.as_ref().expect("null built"));
        for &mode in &cfg.modes {
            match detect_cutoff(target, null, mode, cfg.window, record.word_count) {
                Ok(r) => {
                    record.dimensions.entry(dim).or_default().results.insert(mode, r);
                }
                Err(e) => record.fail(dim, Reason::CutoffFailed, &e),
            }
        }
    }
    done(record, dims)
}

/// Relative paths of the per-dimension diagnostics files.
fn diagnostics_paths(book_id: &str, dim: Dimension) -> [(&'static str, String); 5] {
    let p = |kind: &str| format!("{book_id}/{dim}_{kind}.csv");
    [
        ("series", p("series")),
        ("imfs", p("imfs")),
        ("spectra", p("spectra")),
        ("variances", p("variances")),
        ("period_ratios", p("period_ratios")),
    ]
}

fn opt6(x: Option<f64>) -> Value {
    x.map_or(Value::Null, |v| json!(round6(v)))
}

fn result_json(r: &CutoffResult) -> Value {
    json!({
        "classification": r.classification,
        "cutoff_order": r.cutoff_order,
        "period_words": opt6(r.period_words),
        "variance": opt6(r.variance),
        "rescale_factor": round6(r.rescale_factor),
        "borrowed_orders": r.borrowed_orders,
        "period_exceeds_length": r.period_exceeds_length,
    })
}

/// The per-book JSON document. `with_diagnostics` adds the relative paths
/// written by [`write_book`].
pub fn record_json(a: &BookAnalysis, with_diagnostics: bool) -> Value {
    let r = &a.record;
    let dimensions: serde_json::Map<String, Value> = r
        .dimensions
        .iter()
        .map(|(dim, d)| {
            let modes: serde_json::Map<String, Value> =
                d.results.iter().map(|(m, res)| (m.to_string(), result_json(res))).collect();
            let mut v = json!({
                "n_imfs": d.n_imfs,
                "failure": d.failure.as_ref().map(|(reason, detail)| json!({"reason": reason, "detail": detail})),
                "modes": modes,
            });
            if with_diagnostics && a.dimensions.contains_key(dim) {
                let paths: serde_json::Map<String, Value> = diagnostics_paths(&r.book_id, *dim)
                    .into_iter()
                    .filter(|(kind, _)| *kind == "series" || d.n_imfs.is_some())
                    .filter(|(kind, _)| !matches!(*kind, "variances" | "period_ratios") || d.failure.is_none())
                    .map(|(k, p)| (k.to_string(), json!(p)))
                    .collect();
                v["diagnostics"] = Value::Object(paths);
            }
            (dim.to_string(), v)
        })
        .collect();
    json!({
        "book_id": r.book_id,
        "title": r.title,
        "lcc": r.lcc,
        "word_count": r.word_count,
        "eligible": r.eligible,
        "reasons": r.reasons,
        "boilerplate": r.boilerplate,
        "coverage": r.coverage.map(|c| json!({
            "unique": round6(c.unique_coverage),
            "token": round6(c.token_coverage),
            "unique_types": c.unique_types,
        })),
        "dimensions": dimensions,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::file(path, e))?))
}

/// Writes `<out>/<book_id>.json` and the diagnostics CSVs under
/// `<out>/<book_id>/`. Returns the JSON path.
pub fn write_book(out: &Path, a: &BookAnalysis) -> Result<PathBuf> {
    let id = &a.record.book_id;
    if !a.dimensions.is_empty() {
        let dir = out.join(id);
        fs::create_dir_all(&dir).map_err(|e| Error::file(&dir, e))?;
    }
    for (dim, d) in &a.dimensions {
        let paths = diagnostics_paths(id, *dim).map(|(_, p)| out.join(p));
        d.series.write_csv(create(&paths[0])?)?;
        let Some(target) = &d.decomposition else { continue };
        target.write_csv(create(&paths[1])?)?;
        write_spectra(create(&paths[2])?, target, a.window)?;
        let record = &a.record.dimensions[dim];
        if let (Some(null), None) = (&d.null, &record.failure) {
            write_variance_table(create(&paths[3])?, target, null, &record.results)?;
            write_period_ratios(create(&paths[4])?, target, null, a.window)?;
        }
    }
    let path = out.join(format!("{id}.json"));
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &record_json(a, true))?;
    writeln!(w)?;
    w.flush()?;
    Ok(path)
}

/// HHT energy per frequency bin for every IMF with a defined spectrum.
pub fn write_spectra<W: Write>(out: W, d: &Decomposition, window: WindowConfig) -> Result<()> {
    let bins = FrequencyBins::standard();
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["imf", "freq_low", "freq_high", "energy"])?;
    for imf in &d.imfs {
        if let Ok(s) = spectrum(&imf.values, bins, window.sampling_rate()) {
            s.write_rows(&mut wtr, imf.order, bins)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Target and null variances per order, with the rescaled target variance
/// for each mode. The trend is the last row.
pub fn write_variance_table<W: Write>(
    out: W,
    target: &Decomposition,
    null: &NullEnsemble,
    results: &BTreeMap<RescalingMode, CutoffResult>,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["order", "target_variance", "null_median", "null_p99", "support", "borrowed_from"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    header.extend(results.keys().map(|m| format!("rescaled_{m}")));
    wtr.write_record(&header)?;
    for imf in &target.imfs {
        let v = imf_variance(&imf.values)?;
        let (p99, borrowed) = null.threshold(imf.order);
        let t = null.thresholds.get(imf.order - 1);
        let mut row = vec![
            imf.order.to_string(),
            sig6(v),
            t.and_then(|t| t.median).map(sig6).unwrap_or_default(),
            sig6(p99),
            t.map_or(0, |t| t.support).to_string(),
            borrowed.map(|o| o.to_string()).unwrap_or_default(),
        ];
        row.extend(results.values().map(|r| sig6(v * r.rescale_factor)));
        wtr.write_record(&row)?;
    }
    let trend: Vec<f64> = null.realizations.iter().map(|r| r.trend_variance).collect();
    let v = trend_variance(&target.residual)?;
    let mut row = vec![
        "trend".to_string(),
        sig6(v),
        percentile(&trend, 50.0).map(sig6).unwrap_or_default(),
        sig6(null.trend_p99),
        trend.len().to_string(),
        String::new(),
    ];
    row.extend(results.values().map(|r| sig6(v * r.rescale_factor)));
    wtr.write_record(&row)?;
    wtr.flush()?;
    Ok(())
}

pub fn write_period_ratios<W: Write>(
    out: W,
    target: &Decomposition,
    null: &NullEnsemble,
    window: WindowConfig,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["order", "target_period", "null_median_period", "median_ratio", "support"])?;
    let f = |x: Option<f64>| x.map(sig6).unwrap_or_default();
    for r in period_ratios(target, null, window) {
        wtr.write_record([
            r.order.to_string(),
            f(r.target_period),
            f(r.null_median_period),
            f(r.median_ratio),
            r.support.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Per-realization, per-order null variances and periods.
pub fn write_null_table<W: Write>(out: W, null: &NullEnsemble) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["seed", "order", "variance", "period"])?;
    for r in &null.realizations {
        for (j, v) in r.imf_variances.iter().enumerate() {
            let p = r.imf_periods[j].map(sig6).unwrap_or_default();
            wtr.write_record([r.seed.to_string(), (j + 1).to_string(), sig6(*v), p])?;
        }
        wtr.write_record([r.seed.to_string(), "trend".into(), sig6(r.trend_variance), String::new()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Per-order null thresholds.
pub fn write_null_thresholds<W: Write>(out: W, null: &NullEnsemble) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["order", "support", "median", "p99", "borrowed_from"])?;
    for t in &null.thresholds {
        wtr.write_record([
            t.order.to_string(),
            t.support.to_string(),
            t.median.map(sig6).unwrap_or_default(),
            sig6(t.p99),
            t.borrowed_from.map(|o| o.to_string()).unwrap_or_default(),
        ])?;
    }
    wtr.write_record([
        "trend".to_string(),
        null.realizations.len().to_string(),
        String::new(),
        sig6(null.trend_p99),
        String::new(),
    ])?;
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    All,
    LccClass,
    LccSubclass,
    TitleKeyword,
}

impl Grouping {
    pub const ALL: [Grouping; 4] = [
        Grouping::All,
        Grouping::LccClass,
        Grouping::LccSubclass,
        Grouping::TitleKeyword,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Grouping::All => "all",
            Grouping::LccClass => "lcc_class",
            Grouping::LccSubclass => "lcc_subclass",
            Grouping::TitleKeyword => "title_keyword",
        }
    }

    /// Groups a record belongs to; a book can sit in several.
    pub fn keys(self, record: &BookRecord) -> BTreeSet<String> {
        match self {
            Grouping::All => BTreeSet::from(["all".to_string()]),
            Grouping::LccClass => record.lcc.iter().filter_map(|l| lcc_class(l)).collect(),
            Grouping::LccSubclass => record.lcc.iter().filter_map(|l| lcc_subclass(l)).collect(),
            Grouping::TitleKeyword => TITLE_KEYWORDS
                .iter()
                .filter(|k| title_matches(&record.title, k))
                .map(|k| k.to_string())
                .collect(),
        }
    }
}

fn title_words(s: &str) -> Vec<String> {
    s.to_lowercase()
        .split(|c: char| !c.is_alphabetic())
        .filter(|w| !w.is_empty())
        .map(String::from)
        .collect()
}

/// Case-insensitive keyword match on title words: every keyword word but
/// the last must match a title word exactly, the last as a prefix.
pub fn title_matches(title: &str, keyword: &str) -> bool {
    let words = title_words(title);
    let key = title_words(keyword);
    let Some((last, head)) = key.split_last() else {
        return false;
    };
    words.windows(key.len()).any(|w| w[..head.len()] == *head && w[head.len()].starts_with(last.as_str()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Percentiles {
    pub p9: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p91: f64,
}

impl Percentiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        let [p9, p25, p50, p75, p91] = AGGREGATE_PERCENTILES.map(|q| percentile(values, q));
        Some(Self {
            p9: p9?,
            p25: p25?,
            p50: p50?,
            p75: p75?,
            p91: p91?,
        })
    }

    fn fields(p: Option<Self>) -> [String; 5] {
        match p {
            Some(p) => [p.p9, p.p25, p.p50, p.p75, p.p91].map(sig6),
            None => Default::default(),
        }
    }
}

/// One group under one dimension and mode. Period and variance
/// percentiles are over fluctuation-class books.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub grouping: Grouping,
    pub group: String,
    pub dimension: Dimension,
    pub mode: RescalingMode,
    pub books: usize,
    pub trend_only: usize,
    pub fluctuation: usize,
    pub period: Option<Percentiles>,
    pub variance: Option<Percentiles>,
}

/// Aggregates analyzed books by `grouping`. Rows come out sorted by group,
/// dimension and mode; records without a result for a dimension and mode
/// are left out of that row.
pub fn aggregate(records: &[BookRecord], grouping: Grouping) -> Vec<AggregateRow> {
    let mut cells: BTreeMap<(String, Dimension, RescalingMode), Vec<&CutoffResult>> = BTreeMap::new();
    let mut groups = BTreeSet::new();
    for r in records {
        for key in grouping.keys(r) {
            groups.insert(key.clone());
            for (dim, d) in &r.dimensions {
                for (mode, res) in &d.results {
                    cells.entry((key.clone(), *dim, *mode)).or_default().push(res);
                }
            }
        }
    }
    for g in &groups {
        if !cells.keys().any(|(k, _, _)| k == g) {
            log::warn!("{}: group {g:?} has no analyzed books, omitted", grouping.as_str());
        }
    }
    cells
        .into_iter()
        .map(|((group, dimension, mode), results)| {
            let fluct: Vec<&CutoffResult> = results.iter().copied().filter(|r| r.is_fluctuation()).collect();
            let periods: Vec<f64> = fluct.iter().filter_map(|r| r.period_words).collect();
            let variances: Vec<f64> = fluct.iter().filter_map(|r| r.variance).collect();
            AggregateRow {
                grouping,
                group,
                dimension,
                mode,
                books: results.len(),
                trend_only: results.len() - fluct.len(),
                fluctuation: fluct.len(),
                period: Percentiles::of(&periods),
                variance: Percentiles::of(&variances),
            }
        })
        .collect()
}

pub fn aggregate_all(records: &[BookRecord]) -> Vec<AggregateRow> {
    Grouping::ALL.iter().flat_map(|g| aggregate(records, *g)).collect()
}

pub fn write_aggregates_csv<W: Write>(out: W, rows: &[AggregateRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header: Vec<String> = [
        "grouping",
        "group",
        "dimension",
        "mode",
        "books",
        "trend_only",
        "fluctuation",
    ]
    .map(String::from)
    .to_vec();
    for what in ["period", "variance"] {
        header.extend(AGGREGATE_PERCENTILES.iter().map(|q| format!("{what}_p{q}")));
    }
    wtr.write_record(&header)?;
    for r in rows {
        let mut row = vec![
            r.grouping.as_str().to_string(),
            r.group.clone(),
            r.dimension.to_string(),
            r.mode.to_string(),
            r.books.to_string(),
            r.trend_only.to_string(),
            r.fluctuation.to_string(),
        ];
        row.extend(Percentiles::fields(r.period));
        row.extend(Percentiles::fields(r.variance));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// One line per book: id, eligibility, reasons and the median-mode outcome
/// per dimension.
pub fn write_book_index<W: Write>(out: W, records: &[BookRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["book_id", "word_count", "eligible", "reasons", "dimension", "mode", "classification", "cutoff_order", "period_words", "variance"])?;
    for r in records {
        let reasons = r.reasons.iter().map(|x| x.as_str()).collect::<Vec<_>>().join(";");
        let base = [r.book_id.clone(), r.word_count.to_string(), r.eligible.to_string(), reasons];
        let mut any = false;
        for (dim, d) in &r.dimensions {
            for (mode, res) in &d.results {
                any = true;
                let class = match res.classification {
                    Classification::TrendOnly => "trend_only",
                    Classification::Fluctuation => "fluctuation",
                };
                let mut row = base.to_vec();
                row.extend([
                    dim.to_string(),
                    mode.to_string(),
                    class.to_string(),
                    res.cutoff_order.map(|o| o.to_string()).unwrap_or_default(),
                    res.period_words.map(sig6).unwrap_or_default(),
                    res.variance.map(sig6).unwrap_or_default(),
                ]);
                wtr.write_record(&row)?;
            }
        }
        if !any {
            let mut row = base.to_vec();
            row.extend(std::iter::repeat_n(String::new(), 6));
            wtr.write_record(&row)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Analyzes every book and, when `out` is given, writes per-book files,
/// `books.csv` and `aggregates.csv`. Records are returned in manifest
/// order regardless of scheduling.
pub fn run_corpus(
    books: &[BookMeta],
    lex: &Lexicon,
    cfg: &AnalysisConfig,
    out: Option<&Path>,
) -> Result<(Vec<BookRecord>, Vec<AggregateRow>)> {
    cfg.validate()?;
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    }
    let records = cfg.null.execution.map_slice(books, |meta| {
        let a = process_book(meta, lex, cfg);
        if let Some(dir) = out {
            write_book(dir, &a)?;
        }
        Ok(a.record)
    });
    let records: Vec<BookRecord> = records.into_iter().collect::<Result<_>>()?;
    let rows = aggregate_all(&records);
    if let Some(dir) = out {
        write_book_index(create(&dir.join("books.csv"))?, &records)?;
        write_aggregates_csv(create(&dir.join("aggregates.csv"))?, &rows)?;
    }
    Ok((records, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(class: Classification, period: Option<f64>) -> CutoffResult {
        CutoffResult {
            mode: RescalingMode::MedianFirst,
            classification: class,
            cutoff_order: period.map(|_| 3),
            period_words: period,
            variance: period.map(|p| p / 1e6),
            n_imfs: 8,
            rescale_factor: 1.0,
            borrowed_orders: vec![],
            period_exceeds_length: false,
        }
    }

    fn record(id: &str, title: &str, lcc: &[&str], period: Option<f64>) -> BookRecord {
        let class = if period.is_some() {
            Classification::Fluctuation
        } else {
            Classification::TrendOnly
        };
        let mut d = DimensionRecord {
            n_imfs: Some(8),
            ..Default::default()
        };
        d.results.insert(RescalingMode::MedianFirst, result(class, period));
        BookRecord {
            book_id: id.into(),
            title: title.into(),
            lcc: lcc.iter().map(|s| s.to_string()).collect(),
            word_count: 10_000,
            boilerplate: None,
            coverage: None,
            eligible: true,
            reasons: vec![],
            dimensions: BTreeMap::from([(Dimension::Danger, d)]),
        }
    }

    #[test]
    fn lcc_labels() {
        assert_eq!(lcc_class("PS3511"), Some("P".into()));
        assert_eq!(lcc_subclass("ps"), Some("PS".into()));
        assert_eq!(lcc_subclass("Q"), None);
        assert_eq!(lcc_subclass("P3"), None);
        assert_eq!(lcc_class(""), None);
    }

    #[test]
    fn keyword_prefixes() {
        assert!(title_matches("Poems of the Sea", "poem"));
        assert!(title_matches("THE POEM", "poem"));
        assert!(!title_matches("Apoem", "poem"));
        assert!(title_matches("Short Stories for Boys", "short stor"));
        assert!(title_matches("Five Short-Story Sketches", "short stor"));
        assert!(!title_matches("Stories, Short and Tall", "short stor"));
        assert!(title_matches("Plays; Pleasant and Unpleasant", "play"));
        assert!(!title_matches("", "essay"));
    }

    #[test]
    fn manifest_rows() {
        let text = "book_id\tpath\ttitle\tlcc\n\
                    b1\tbooks/one.txt\tPoems \"Old\"\tPR; PS\n\
                    b2\t/abs/two.txt\t\t\n";
        let books = parse_manifest(text.as_bytes(), Path::new("/data")).unwrap();
        assert_eq!(books.len(), 2);
        assert_eq!(books[0].path, PathBuf::from("/data/books/one.txt"));
        assert_eq!(books[0].title, "Poems \"Old\"");
        assert_eq!(books[0].lcc, ["PR", "PS"]);
        assert_eq!(books[1].path, PathBuf::from("/abs/two.txt"));
        assert!(books[1].lcc.is_empty());
    }

    #[test]
    fn manifest_rejects_bad_ids() {
        let dup = "book_id\tpath\na\tx\na\ty\n";
        assert!(matches!(parse_manifest(dup.as_bytes(), Path::new("")), Err(Error::InvalidData(_))));
        let slash = "book_id\tpath\n../a\tx\n";
        assert!(matches!(parse_manifest(slash.as_bytes(), Path::new("")), Err(Error::InvalidData(_))));
    }

    #[test]
    fn single_record_percentiles_collapse() {
        let rows = aggregate(&[record("a", "Poems", &["PS"], Some(1400.0))], Grouping::All);
        assert_eq!(rows.len(), 1);
        let p = rows[0].period.unwrap();
        assert!([p.p9, p.p25, p.p50, p.p75, p.p91].iter().all(|v| *v == 1400.0));
        assert_eq!((rows[0].books, rows[0].fluctuation, rows[0].trend_only), (1, 1, 0));
    }

    #[test]
    fn groups_and_counts() {
        let records = [
            record("a", "Poems of the Sea", &["PS"], Some(1000.0)),
            record("b", "Collected Essays", &["PR", "PS"], None),
            record("c", "A Play", &["Q"], Some(3000.0)),
        ];
        let by_sub = aggregate(&records, Grouping::LccSubclass);
        let keys: Vec<&str> = by_sub.iter().map(|r| r.group.as_str()).collect();
        assert_eq!(keys, ["PR", "PS"]);
        let ps = &by_sub[1];
        assert_eq!((ps.books, ps.trend_only, ps.fluctuation), (2, 1, 1));
        let by_class = aggregate(&records, Grouping::LccClass);
        assert_eq!(by_class.iter().map(|r| r.group.as_str()).collect::<Vec<_>>(), ["P", "Q"]);
        let by_kw = aggregate(&records, Grouping::TitleKeyword);
        assert_eq!(
            by_kw.iter().map(|r| r.group.as_str()).collect::<Vec<_>>(),
            ["essay", "play", "poem"]
        );
        let all = &aggregate(&records, Grouping::All)[0];
        assert_eq!(all.books, all.trend_only + all.fluctuation);
        let p = all.period.unwrap();
        assert_eq!(p.p50, 2000.0);
        assert!(p.p9 <= p.p25 && p.p25 <= p.p50 && p.p50 <= p.p75 && p.p75 <= p.p91);
    }

    #[test]
    fn aggregation_ignores_record_order() {
        let mut records = vec![
            record("a", "Poems", &["PS"], Some(1000.0)),
            record("b", "Essays", &["PR"], None),
            record("c", "Reports", &["PS"], Some(5000.0)),
        ];
        let before = aggregate_all(&records);
        records.reverse();
        assert_eq!(aggregate_all(&records), before);
    }

    #[test]
    fn aggregates_csv_layout() {
        let rows = aggregate(&[record("a", "Poems", &["PS"], Some(1234.5678))], Grouping::All);
        let mut buf = Vec::new();
        write_aggregates_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("grouping,group,dimension,mode,books"));
        assert_eq!(
            lines.next().unwrap(),
            "all,all,danger,median,1,0,1,1234.57,1234.57,1234.57,1234.57,1234.57,\
             0.00123457,0.00123457,0.00123457,0.00123457,0.00123457"
        );
    }

    #[test]
    fn unreadable_book_is_recorded() {
        let meta = BookMeta::new("missing", "/nonexistent/ousio/book.txt");
        let a = process_book(&meta, &Lexicon::default(), &AnalysisConfig::default());
        assert_eq!(a.record.reasons, [Reason::Unreadable]);
        assert!(!a.record.eligible);
    }
}
