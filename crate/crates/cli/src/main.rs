use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use ousio::corpus::{self, AnalysisConfig, BookMeta};
use ousio::cutoff::{build_null_from_scores, imf_variance, NullConfig, RescalingMode};
use ousio::emd::{eemd, DecompositionMeta, EemdConfig};
use ousio::format::round6;
use ousio::hht::{characteristic_period, FrequencyBins};
use ousio::preprocess::{coverage, eligible, preprocess};
use ousio::series::{read_series_csv, token_scores, window_scores_from, WindowConfig};
use ousio::{Dimension, Error, Execution, Lexicon};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;

/// Ousiometric fluctuation analysis of book-length text.
#[derive(Parser, Debug)]
#[command(name = "ousio", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Options,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Text file to windowed score series CSV, one file per dimension
    Score { book: PathBuf },
    /// Series CSV to IMF CSV, spectra CSV and a JSON summary
    Decompose { series: PathBuf },
    /// Full cutoff analysis of one book: result JSON plus diagnostics
    Cutoff { book: PathBuf },
    /// Every book in a manifest TSV, then aggregates
    Corpus { manifest: PathBuf },
    /// Shuffled-text null ensemble tables for one book
    Null { book: PathBuf },
}

#[derive(Args, Debug)]
struct Options {
    /// Word score lexicon (TSV or CSV with power/danger or VAD columns)
    #[arg(long, global = true, value_name = "PATH")]
    lexicon: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = DimArg::Both)]
    dimension: DimArg,
    /// Words per window
    #[arg(long, global = true, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    window: u64,
    /// Words between window starts [default: window size]
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    skip: Option<u64>,
    /// EEMD ensemble members
    #[arg(long, global = true, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    ensemble: u64,
    /// EEMD noise standard deviation relative to the series; 0 gives plain EMD
    #[arg(long, global = true, default_value_t = 0.2)]
    noise: f64,
    /// Shuffled realizations in the null ensemble
    #[arg(long, global = true, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    shuffles: u64,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = ModeArg::All)]
    mode: ModeArg,
    /// Output directory
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Worker threads; 1 runs everything on the main thread
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DimArg {
    Power,
    Danger,
    Both,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Median,
    P01,
    None,
    All,
}

/// Failure with its exit status.
struct Failure(u8, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::InvalidWindow(_) => EXIT_USAGE,
            _ => EXIT_DATA,
        };
        Failure(code, e.to_string())
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure(EXIT_USAGE, msg.into())
}

impl Options {
    fn dimensions(&self) -> Vec<Dimension> {
        match self.dimension {
            DimArg::Power => vec![Dimension::Power],
            DimArg::Danger => vec![Dimension::Danger],
            DimArg::Both => Dimension::ALL.to_vec(),
        }
    }

    fn modes(&self) -> Vec<RescalingMode> {
        match self.mode {
            ModeArg::Median => vec![RescalingMode::MedianFirst],
            ModeArg::P01 => vec![RescalingMode::FirstPercentileFirst],
            ModeArg::None => vec![RescalingMode::NoRescaling],
            ModeArg::All => RescalingMode::ALL.to_vec(),
        }
    }

    fn execution(&self) -> Execution {
        match self.threads {
            Some(1) => Execution::Sequential,
            _ => Execution::Parallel,
        }
    }

    fn window(&self) -> Result<WindowConfig, Failure> {
        let w = self.window as usize;
        Ok(WindowConfig::new(w, self.skip.map_or(w, |s| s as usize))?)
    }

    fn eemd(&self) -> Result<EemdConfig, Failure> {
        let cfg = EemdConfig {
            ensemble_size: self.ensemble as usize,
            noise_ratio: self.noise,
            seed: self.seed,
            execution: self.execution(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn analysis(&self) -> Result<AnalysisConfig, Failure> {
        let cfg = AnalysisConfig {
            window: self.window()?,
            eemd: self.eemd()?,
            null: NullConfig {
                realizations: self.shuffles as usize,
                seed: self.seed,
                execution: self.execution(),
            },
            dimensions: self.dimensions(),
            modes: self.modes(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn lexicon(&self) -> Result<Lexicon, Failure> {
        let path = self.lexicon.as_ref().ok_or_else(|| usage("--lexicon is required for this command"))?;
        let lex = Lexicon::load(path)?;
        log::info!("lexicon: {} words from {}", lex.len(), path.display());
        Ok(lex)
    }

    fn out_dir(&self) -> Result<&Path, Failure> {
        fs::create_dir_all(&self.out).map_err(|e| Failure(EXIT_DATA, format!("{}: {e}", self.out.display())))?;
        Ok(&self.out)
    }
}

/// Source id derived from a file name, restricted to filename-safe characters.
fn source_id(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy()).unwrap_or_default();
    let id: String = stem
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect();
    if id.is_empty() || id.chars().all(|c| c == '.') {
        "book".into()
    } else {
        id
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure(EXIT_DATA, format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure(EXIT_DATA, format!("{}: {e}", path.display())))?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

fn score(book: &Path, opts: &Options) -> Result<(), Failure> {
    let lex = opts.lexicon()?;
    let window = opts.window()?;
    let id = source_id(book);
    let (tokens, flag) = preprocess(&id, &read_text(book)?);
    log::info!("{id}: {} tokens, boilerplate {flag:?}", tokens.len());
    let scores = token_scores(&tokens, &lex);
    let out = opts.out_dir()?;
    for dim in opts.dimensions() {
        let series = window_scores_from(&id, &scores, window, dim)?.into_series()?;
        let path = out.join(format!("{id}_{dim}.csv"));
        series.write_csv(create(&path)?)?;
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

fn decompose(input: &Path, opts: &Options) -> Result<(), Failure> {
    let cfg = opts.eemd()?;
    let file = File::open(input).map_err(|e| Failure(EXIT_DATA, format!("{}: {e}", input.display())))?;
    let csv = read_series_csv(file)?;
    let skip = match (opts.skip, csv.skip) {
        (Some(s), _) => s as usize,
        (None, Some(s)) => s,
        (None, None) => opts.window()?.skip,
    };
    let sampling_rate = 1.0 / skip as f64;
    let d = eemd(&csv.values, &cfg)?;
    let id = source_id(input);
    let out = opts.out_dir()?;
    d.write_csv(create(&out.join(format!("{id}_imfs.csv")))?)?;
    corpus::write_spectra(
        create(&out.join(format!("{id}_spectra.csv")))?,
        &d,
        WindowConfig::new(skip, skip)?,
    )?;
    let bins = FrequencyBins::standard();
    let imfs: Vec<_> = d
        .imfs
        .iter()
        .map(|imf| {
            json!({
                "order": imf.order,
                "variance": imf_variance(&imf.values).map(round6).ok(),
                "period_words": characteristic_period(&imf.values, bins, sampling_rate).map(round6).ok(),
            })
        })
        .collect();
    let meta = DecompositionMeta::new(&d, Some(cfg));
    let doc = json!({ "source_id": id, "skip": skip, "decomposition": meta, "imfs": imfs });
    let mut w = create(&out.join(format!("{id}_decomposition.json")))?;
    serde_json::to_writer_pretty(&mut w, &doc).map_err(Error::from)?;
    writeln!(w).and_then(|_| w.flush()).map_err(Error::from)?;
    Ok(())
}

fn cutoff(book: &Path, opts: &Options) -> Result<(), Failure> {
    let lex = opts.lexicon()?;
    let cfg = opts.analysis()?;
    let meta = BookMeta::new(source_id(book), book);
    if !book.is_file() {
        return Err(Failure(EXIT_DATA, format!("{}: not a readable file", book.display())));
    }
    let analysis = corpus::process_book(&meta, &lex, &cfg);
    let path = corpus::write_book(opts.out_dir()?, &analysis)?;
    log::info!("wrote {}", path.display());
    let r = &analysis.record;
    if r.dimensions.values().all(|d| d.results.is_empty()) {
        let reasons: Vec<&str> = r.reasons.iter().map(|x| x.as_str()).collect();
        return Err(Failure(EXIT_DATA, format!("{}: no result ({})", r.book_id, reasons.join(", "))));
    }
    Ok(())
}

fn run_corpus(manifest: &Path, opts: &Options) -> Result<(), Failure> {
    let lex = opts.lexicon()?;
    let cfg = opts.analysis()?;
    let books = corpus::read_manifest(manifest)?;
    let (records, rows) = corpus::run_corpus(&books, &lex, &cfg, Some(opts.out_dir()?))?;
    let analyzed = records.iter().filter(|r| r.dimensions.values().any(|d| !d.results.is_empty())).count();
    log::info!("{analyzed} of {} books analyzed, {} aggregate rows", records.len(), rows.len());
    Ok(())
}

fn null(book: &Path, opts: &Options) -> Result<(), Failure> {
    let lex = opts.lexicon()?;
    let cfg = opts.analysis()?;
    let id = source_id(book);
    let (tokens, _) = preprocess(&id, &read_text(book)?);
    let stats = coverage(&tokens, &lex)?;
    let scores = token_scores(&tokens, &lex);
    let hits = window_scores_from(&id, &scores, cfg.window, cfg.dimensions[0])?.hit_flags();
    if let Err(reasons) = eligible(&stats, &hits) {
        let reasons: Vec<String> = reasons.iter().map(ToString::to_string).collect();
        log::warn!("{id}: not eligible ({}), building the null anyway", reasons.join(", "));
    }
    let nulls = build_null_from_scores(&id, &scores, cfg.window, &cfg.dimensions, &cfg.null)?;
    let out = opts.out_dir()?;
    for (dim, null) in &nulls {
        corpus::write_null_table(create(&out.join(format!("{id}_{dim}_null.csv")))?, null)?;
        corpus::write_null_thresholds(create(&out.join(format!("{id}_{dim}_null_thresholds.csv")))?, null)?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Some(n) = cli.opts.threads {
        ousio::par::init_threads(n as usize).map_err(usage)?;
    }
    let opts = &cli.opts;
    match &cli.command {
        Command::Score { book } => score(book, opts),
        Command::Decompose { series } => decompose(series, opts),
        Command::Cutoff { book } => cutoff(book, opts),
        Command::Corpus { manifest } => run_corpus(manifest, opts),
        Command::Null { book } => null(book, opts),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
