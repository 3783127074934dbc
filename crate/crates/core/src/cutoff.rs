//! Shuffled-text null ensemble and cutoff-order detection.
//!
//! The target series (EEMD of the original text) is compared order by
//! order against plain-EMD decompositions of shuffled copies of the same
//! text. Target IMF variances are first rescaled so that the first IMF
//! matches a representative null value; the cutoff is the lowest order
//! whose rescaled variance exceeds the null's 99th percentile.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::emd::{emd, Decomposition};
use crate::error::{Error, Result};
use crate::hht::{characteristic_period, FrequencyBins};
use crate::lexicon::{Dimension, Lexicon, PdsScore};
use crate::par::Execution;
use crate::preprocess::TokenSequence;
use crate::series::{shuffle_in_place, token_scores, window_scores_from, WindowConfig};
use crate::stats::{mean, percentile};

pub const DEFAULT_REALIZATIONS: usize = 100;
/// Percentile of the null variance distribution a target order must exceed.
pub const NULL_PERCENTILE: f64 = 99.0;
/// Fraction of shuffled realizations that must decompose successfully.
pub const MIN_SUCCESS_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RescalingMode {
    #[serde(rename = "median")]
    MedianFirst,
    #[serde(rename = "p01")]
    FirstPercentileFirst,
    #[serde(rename = "none")]
    NoRescaling,
}

impl RescalingMode {
    pub const ALL: [RescalingMode; 3] = [
        RescalingMode::MedianFirst,
        RescalingMode::FirstPercentileFirst,
        RescalingMode::NoRescaling,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RescalingMode::MedianFirst => "median",
            RescalingMode::FirstPercentileFirst => "p01",
            RescalingMode::NoRescaling => "none",
        }
    }

    /// First IMF order eligible as a cutoff.
    pub fn first_scanned_order(self) -> usize {
        match self {
            RescalingMode::NoRescaling => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for RescalingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RescalingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "median" => Ok(RescalingMode::MedianFirst),
            "p01" => Ok(RescalingMode::FirstPercentileFirst),
            "none" => Ok(RescalingMode::NoRescaling),
            other => Err(Error::Config(format!("unknown rescaling mode {other:?}"))),
        }
    }
}

/// Mean of squares; IMFs are zero-mean by construction so no mean is removed.
pub fn imf_variance(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::EmptyVariance);
    }
    Ok(x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64)
}

/// Variance of the trend about its own mean. The trend carries the series
/// level, which is identical for original and shuffled text.
pub fn trend_variance(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::EmptyVariance);
    }
    let m = mean(x);
    Ok(x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64)
}

/// Per-order summary of one shuffled-text decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullRealization {
    pub seed: u64,
    pub imf_variances: Vec<f64>,
    pub trend_variance: f64,
    pub imf_periods: Vec<Option<f64>>,
}

impl NullRealization {
    pub fn from_decomposition(seed: u64, d: &Decomposition, sampling_rate: f64) -> Result<Self> {
        let bins = FrequencyBins::standard();
        Ok(Self {
            seed,
            imf_variances: d.imfs.iter().map(|i| imf_variance(&i.values)).collect::<Result<_>>()?,
            trend_variance: trend_variance(&d.residual)?,
            imf_periods: d
                .imfs
                .iter()
                .map(|i| characteristic_period(&i.values, bins, sampling_rate).ok())
                .collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderThreshold {
    pub order: usize,
    /// Realizations with an IMF at this order.
    pub support: usize,
    pub median: Option<f64>,
    /// 99th percentile used for the test at this order.
    pub p99: f64,
    /// Set when `support` was too small and the threshold was borrowed.
    pub borrowed_from: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullEnsemble {
    pub requested: usize,
    pub realizations: Vec<NullRealization>,
    pub thresholds: Vec<OrderThreshold>,
    pub trend_p99: f64,
    pub first_median: f64,
    pub first_p01: f64,
    pub min_support: usize,
}

impl NullEnsemble {
    pub fn from_realizations(realizations: Vec<NullRealization>, requested: usize) -> Result<Self> {
        let required = ((requested as f64 * MIN_SUCCESS_FRACTION).ceil() as usize).max(1);
        if realizations.len() < required {
            return Err(Error::NullFailed {
                succeeded: realizations.len(),
                requested,
                required,
            });
        }
        let min_support = realizations.len().div_ceil(2);
        let first: Vec<f64> = realizations.iter().filter_map(|r| r.imf_variances.first().copied()).collect();
        if first.len() < min_support {
            return Err(Error::NullFailed {
                succeeded: first.len(),
                requested,
                required: min_support,
            });
        }
        let max_order = realizations.iter().map(|r| r.imf_variances.len()).max().unwrap_or(0);
        let mut thresholds: Vec<OrderThreshold> = Vec::with_capacity(max_order);
        let mut last_supported: Option<(usize, f64)> = None;
        for order in 1..=max_order {
            let values: Vec<f64> = realizations
                .iter()
                .filter_map(|r| r.imf_variances.get(order - 1).copied())
                .collect();
            let median = percentile(&values, 50.0);
            let t = if values.len() >= min_support {
                let p99 = percentile(&values, NULL_PERCENTILE).expect("non-empty");
                last_supported = Some((order, p99));
                OrderThreshold {
                    order,
                    support: values.len(),
                    median,
                    p99,
                    borrowed_from: None,
                }
            } else {
                let (from, p99) = last_supported.expect("order 1 is always supported");
                OrderThreshold {
                    order,
                    support: values.len(),
                    median,
                    p99,
                    borrowed_from: Some(from),
                }
            };
            thresholds.push(t);
        }
        let trends: Vec<f64> = realizations.iter().map(|r| r.trend_variance).collect();
        Ok(Self {
            requested,
            trend_p99: percentile(&trends, NULL_PERCENTILE).expect("non-empty"),
            first_median: percentile(&first, 50.0).expect("non-empty"),
            first_p01: percentile(&first, 1.0).expect("non-empty"),
            thresholds,
            realizations,
            min_support,
        })
    }

    /// Threshold for `order`; orders past every realization borrow the
    /// last supported one and are flagged.
    pub fn threshold(&self, order: usize) -> (f64, Option<usize>) {
        match self.thresholds.get(order - 1) {
            Some(t) => (t.p99, t.borrowed_from),
            None => {
                let last = self
                    .thresholds
                    .iter()
                    .rev()
                    .find(|t| t.borrowed_from.is_none())
                    .expect("order 1 is always supported");
                (last.p99, Some(last.order))
            }
        }
    }

    pub fn reference_first_variance(&self, mode: RescalingMode) -> Option<f64> {
        match mode {
            RescalingMode::MedianFirst => Some(self.first_median),
            RescalingMode::FirstPercentileFirst => Some(self.first_p01),
            RescalingMode::NoRescaling => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullConfig {
    pub realizations: usize,
    pub seed: u64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for NullConfig {
    fn default() -> Self {
        Self {
            realizations: DEFAULT_REALIZATIONS,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

/// Builds null ensembles for several dimensions from the same set of
/// permutations. Realization `k` (1-based) uses shuffle seed `seed + k`.
pub fn build_null_from_scores(
    source_id: &str,
    scores: &[Option<PdsScore>],
    window: WindowConfig,
    dims: &[Dimension],
    cfg: &NullConfig,
) -> Result<BTreeMap<Dimension, NullEnsemble>> {
    if cfg.realizations == 0 {
        return Err(Error::Config("null ensemble needs at least one realization".into()));
    }
    let sampling_rate = window.sampling_rate();
    let per_seed: Vec<Vec<Result<NullRealization>>> = cfg.execution.map_range(cfg.realizations, |i| {
        let seed = cfg.seed.wrapping_add(i as u64 + 1);
        let mut shuffled = scores.to_vec();
        shuffle_in_place(&mut shuffled, seed);
        dims.iter()
            .map(|&dim| {
                let series = window_scores_from(source_id, &shuffled, window, dim)?.into_series()?;
                let d = emd(&series.values)?;
                NullRealization::from_decomposition(seed, &d, sampling_rate)
            })
            .collect()
    });
    let mut out = BTreeMap::new();
    for (j, &dim) in dims.iter().enumerate() {
        let mut ok = Vec::with_capacity(cfg.realizations);
        for results in &per_seed {
            match &results[j] {
                Ok(r) => ok.push(r.clone()),
                Err(e) => log::debug!("{source_id}: {dim} null realization failed: {e}"),
            }
        }
        out.insert(dim, NullEnsemble::from_realizations(ok, cfg.realizations)?);
    }
    Ok(out)
}

pub fn build_null(
    tokens: &TokenSequence,
    lex: &Lexicon,
    window: WindowConfig,
    dim: Dimension,
    cfg: &NullConfig,
) -> Result<NullEnsemble> {
    let scores = token_scores(tokens, lex);
    let mut map = build_null_from_scores(&tokens.source_id, &scores, window, &[dim], cfg)?;
    Ok(map.remove(&dim).expect("requested dimension"))
}

/// Multiplies every target variance by `Var_R1 / Var_T1` for the mode.
pub fn rescale(target: &[f64], null: &NullEnsemble, mode: RescalingMode) -> Result<Vec<f64>> {
    let f = rescale_factor(target, null, mode)?;
    Ok(target.iter().map(|v| v * f).collect())
}

pub fn rescale_factor(target: &[f64], null: &NullEnsemble, mode: RescalingMode) -> Result<f64> {
    let Some(reference) = null.reference_first_variance(mode) else {
        return Ok(1.0);
    };
    match target.first() {
        Some(&first) if first > 0.0 => Ok(reference / first),
        _ => Err(Error::RescalingUndefined),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    TrendOnly,
    Fluctuation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffResult {
    pub mode: RescalingMode,
    pub classification: Classification,
    /// Lowest exceeding order; `imf_count + 1` denotes the trend.
    pub cutoff_order: Option<usize>,
    pub period_words: Option<f64>,
    /// Raw (unrescaled) variance of the cutoff IMF.
    pub variance: Option<f64>,
    pub n_imfs: usize,
    pub rescale_factor: f64,
    /// Orders whose null threshold was borrowed from a lower order.
    pub borrowed_orders: Vec<usize>,
    pub period_exceeds_length: bool,
}

impl CutoffResult {
    pub fn is_fluctuation(&self) -> bool {
        self.classification == Classification::Fluctuation
    }
}

/// Scans target orders upward (skipping the first IMF without rescaling)
/// and then the trend; the first exceedance of the null 99th percentile is
/// the cutoff. Only a proper IMF counts as a fluctuation.
pub fn detect_cutoff(
    target: &Decomposition,
    null: &NullEnsemble,
    mode: RescalingMode,
    window: WindowConfig,
    book_length: usize,
) -> Result<CutoffResult> {
    let n_imfs = target.imf_count();
    let variances: Vec<f64> = target.imfs.iter().map(|i| imf_variance(&i.values)).collect::<Result<_>>()?;
    let mut result = CutoffResult {
        mode,
        classification: Classification::TrendOnly,
        cutoff_order: None,
        period_words: None,
        variance: None,
        n_imfs,
        rescale_factor: 1.0,
        borrowed_orders: Vec::new(),
        period_exceeds_length: false,
    };
    if n_imfs == 0 {
        return Ok(result);
    }
    let factor = rescale_factor(&variances, null, mode)?;
    result.rescale_factor = factor;

    for order in mode.first_scanned_order()..=n_imfs {
        let (p99, borrowed) = null.threshold(order);
        if borrowed.is_some() {
            result.borrowed_orders.push(order);
        }
        if variances[order - 1] * factor > p99 {
            let period = characteristic_period(
                &target.imfs[order - 1].values,
                FrequencyBins::standard(),
                window.sampling_rate(),
            )?;
            if period >= book_length as f64 {
                log::warn!("cutoff period {period:.0} words exceeds book length {book_length}");
            }
            result.classification = Classification::Fluctuation;
            result.cutoff_order = Some(order);
            result.period_words = Some(period);
            result.variance = Some(variances[order - 1]);
            result.period_exceeds_length = period >= book_length as f64;
            return Ok(result);
        }
    }
    if trend_variance(&target.residual)? * factor > null.trend_p99 {
        result.cutoff_order = Some(n_imfs + 1);
    }
    Ok(result)
}

/// Original-to-shuffled period comparison at one order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodRatio {
    pub order: usize,
    pub target_period: Option<f64>,
    pub null_median_period: Option<f64>,
    /// Median over realizations of target period / realization period.
    pub median_ratio: Option<f64>,
    pub support: usize,
}

pub fn period_ratios(target: &Decomposition, null: &NullEnsemble, window: WindowConfig) -> Vec<PeriodRatio> {
    let bins = FrequencyBins::standard();
    target
        .imfs
        .iter()
        .map(|imf| {
            let target_period = characteristic_period(&imf.values, bins, window.sampling_rate()).ok();
            let periods: Vec<f64> = null
                .realizations
                .iter()
                .filter_map(|r| r.imf_periods.get(imf.order - 1).copied().flatten())
                .collect();
            let ratios: Vec<f64> = target_period
                .map(|t| periods.iter().map(|p| t / p).collect())
                .unwrap_or_default();
            PeriodRatio {
                order: imf.order,
                target_period,
                null_median_period: percentile(&periods, 50.0),
                median_ratio: percentile(&ratios, 50.0),
                support: periods.len(),
            }
        })
        .collect()
}
