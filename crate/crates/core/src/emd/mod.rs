//! Empirical mode decomposition and its noise-assisted ensemble variant.
//!
//! [`emd`] peels intrinsic mode functions off a series one at a time by
//! sifting, highest frequency first, until the residue no longer has two
//! maxima and two minima. The telescoping construction makes
//! `sum(imfs) + residual == x` exact up to rounding.
//!
//! [`eemd`] runs [`emd`] on `x + noise` for every ensemble member and
//! averages per order. Member noise comes from a ChaCha stream keyed by
//! `(seed, member)`, so the result does not depend on how members are
//! scheduled across threads.

mod sift;
pub mod spline;

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use sift::{
    envelope_mean, find_extrema, satisfies_imf_counts, sift, zero_crossings, Extrema, SiftOutcome, MAX_SIFTS,
    SD_THRESHOLD,
};

use crate::error::{Error, Result};
use crate::format::sig6;
use crate::par::Execution;
use crate::stats;

pub const MIN_LENGTH: usize = 8;
/// Hard cap on extracted IMFs; never reached for series shorter than 2^64.
const MAX_IMFS: usize = 64;
/// EEMD members reduced per batch; bounds peak memory for long series.
const EEMD_BATCH: usize = 16;
/// Allowed relative deviation of the reconstructed mean from the input mean.
pub const EEMD_MEAN_TOLERANCE: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Imf {
    /// 1-based extraction order.
    pub order: usize,
    pub values: Vec<f64>,
    /// Sifting iterations (summed over members for EEMD).
    pub sifts: usize,
    /// Members whose sifting hit the iteration cap at this order.
    pub unconverged: usize,
}

impl Imf {
    pub fn is_converged(&self) -> bool {
        self.unconverged == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub imfs: Vec<Imf>,
    pub residual: Vec<f64>,
    pub input_length: usize,
}

impl Decomposition {
    pub fn imf_count(&self) -> usize {
        self.imfs.len()
    }

    /// Sum of the IMFs with order `>= from_order` plus the residual.
    /// `from_order = imf_count + 1` yields the residual alone.
    pub fn partial_reconstruction(&self, from_order: usize) -> Result<Vec<f64>> {
        let max = self.imfs.len() + 1;
        if from_order == 0 || from_order > max {
            return Err(Error::OrderOutOfRange { order: from_order, max });
        }
        let mut out = self.residual.clone();
        for imf in &self.imfs[from_order - 1..] {
            for (o, v) in out.iter_mut().zip(&imf.values) {
                *o += v;
            }
        }
        Ok(out)
    }

    pub fn reconstruct(&self) -> Vec<f64> {
        self.partial_reconstruction(1).expect("order 1 is always valid")
    }

    /// CSV with columns `window_index, imf_1..imf_M, residual`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["window_index".to_string()];
        header.extend(self.imfs.iter().map(|imf| format!("imf_{}", imf.order)));
        header.push("residual".into());
        wtr.write_record(&header)?;
        for i in 0..self.input_length {
            let mut row = Vec::with_capacity(header.len());
            row.push(i.to_string());
            row.extend(self.imfs.iter().map(|imf| sig6(imf.values[i])));
            row.push(sig6(self.residual[i]));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Plain EMD.
pub fn emd(x: &[f64]) -> Result<Decomposition> {
    if x.len() < MIN_LENGTH {
        return Err(Error::TooShort {
            len: x.len(),
            min: MIN_LENGTH,
        });
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidData(format!("non-finite sample at index {i}")));
    }
    let mut residue = x.to_vec();
    let mut imfs = Vec::new();
    while imfs.len() < MAX_IMFS && find_extrema(&residue)?.can_sift() {
        let out = sift(&residue)?;
        for (r, c) in residue.iter_mut().zip(&out.imf) {
            *r -= c;
        }
        imfs.push(Imf {
            order: imfs.len() + 1,
            values: out.imf,
            sifts: out.iterations,
            unconverged: usize::from(!out.converged),
        });
    }
    Ok(Decomposition {
        imfs,
        residual: residue,
        input_length: x.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EemdConfig {
    pub ensemble_size: usize,
    /// Noise standard deviation as a multiple of the input's.
    pub noise_ratio: f64,
    pub seed: u64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for EemdConfig {
    fn default() -> Self {
        Self {
            ensemble_size: 100,
            noise_ratio: 0.2,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

impl EemdConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.ensemble_size == 0 {
            return Err(Error::Config("ensemble size must be at least 1".into()));
        }
        if !(self.noise_ratio >= 0.0 && self.noise_ratio.is_finite()) {
            return Err(Error::Config(format!("noise ratio {} must be >= 0", self.noise_ratio)));
        }
        Ok(())
    }
}

/// White noise for one ensemble member.
pub fn member_noise(seed: u64, member: usize, n: usize, std: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(member as u64);
    (0..n)
        .map(|_| std * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
        .collect()
}

/// Ensemble EMD with the mean-preservation success check.
pub fn eemd(x: &[f64], cfg: &EemdConfig) -> Result<Decomposition> {
    let out = ensemble_emd(x, cfg)?;
    check_mean(x, &out)?;
    Ok(out)
}

/// Ensemble EMD without the mean check. The averaged member noise stays in
/// the components, so `reconstruct()` is `x` plus that average.
pub fn ensemble_emd(x: &[f64], cfg: &EemdConfig) -> Result<Decomposition> {
    cfg.validate()?;
    let noise_std = cfg.noise_ratio * stats::std_dev(x);
    if noise_std == 0.0 {
        emd(x)
    } else {
        ensemble_average(x, cfg, noise_std)
    }
}

fn ensemble_average(x: &[f64], cfg: &EemdConfig, noise_std: f64) -> Result<Decomposition> {
    let n = x.len();
    let mut imf_sums: Vec<Vec<f64>> = Vec::new();
    let mut sifts: Vec<usize> = Vec::new();
    let mut unconverged: Vec<usize> = Vec::new();
    let mut residual = vec![0.0; n];

    let mut start = 0;
    while start < cfg.ensemble_size {
        let batch = EEMD_BATCH.min(cfg.ensemble_size - start);
        let members = cfg.execution.map_range(batch, |k| {
            let noise = member_noise(cfg.seed, start + k, n, noise_std);
            let noisy: Vec<f64> = x.iter().zip(&noise).map(|(a, b)| a + b).collect();
            emd(&noisy)
        });
        for member in members {
            let member = member?;
            for imf in member.imfs {
                let j = imf.order - 1;
                if j == imf_sums.len() {
                    imf_sums.push(vec![0.0; n]);
                    sifts.push(0);
                    unconverged.push(0);
                }
                for (s, v) in imf_sums[j].iter_mut().zip(&imf.values) {
                    *s += v;
                }
                sifts[j] += imf.sifts;
                unconverged[j] += imf.unconverged;
            }
            for (r, v) in residual.iter_mut().zip(&member.residual) {
                *r += v;
            }
        }
        start += batch;
    }

    let scale = 1.0 / cfg.ensemble_size as f64;
    let imfs = imf_sums
        .into_iter()
        .enumerate()
        .map(|(j, mut values)| {
            values.iter_mut().for_each(|v| *v *= scale);
            Imf {
                order: j + 1,
                values,
                sifts: sifts[j],
                unconverged: unconverged[j],
            }
        })
        .collect();
    residual.iter_mut().for_each(|v| *v *= scale);
    Ok(Decomposition {
        imfs,
        residual,
        input_length: n,
    })
}

/// Fails unless the mean of the summed components is within 10% of the
/// input mean.
pub fn check_mean(x: &[f64], d: &Decomposition) -> Result<()> {
    let original_mean = stats::mean(x);
    let reconstructed_mean = stats::mean(&d.reconstruct());
    if (reconstructed_mean - original_mean).abs() <= EEMD_MEAN_TOLERANCE * original_mean.abs() {
        Ok(())
    } else {
        Err(Error::DecompositionFailed {
            original_mean,
            reconstructed_mean,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DecompositionMeta {
    pub input_length: usize,
    pub orders: Vec<usize>,
    pub sift_counts: Vec<usize>,
    pub unconverged: Vec<usize>,
    pub method: &'static str,
    pub config: Option<EemdConfig>,
}

impl DecompositionMeta {
    pub fn new(d: &Decomposition, config: Option<EemdConfig>) -> Self {
        Self {
            input_length: d.input_length,
            orders: d.imfs.iter().map(|i| i.order).collect(),
            sift_counts: d.imfs.iter().map(|i| i.sifts).collect(),
            unconverged: d.imfs.iter().map(|i| i.unconverged).collect(),
            method: if config.is_some() { "eemd" } else { "emd" },
            config,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone(n: usize, period: f64) -> Vec<f64> {
        (0..n).map(|t| (2.0 * PI * t as f64 / period).sin()).collect()
    }

    #[test]
    fn ramp_has_no_imfs() {
        let x: Vec<f64> = (0..100).map(|t| 0.5 * t as f64 - 3.0).collect();
        let d = emd(&x).unwrap();
        assert_eq!(d.imf_count(), 0);
        assert_eq!(d.residual, x);
    }

    #[test]
    fn too_short() {
        assert!(matches!(emd(&[1.0; 7]), Err(Error::TooShort { len: 7, min: 8 })));
    }

    #[test]
    fn reconstruction_is_exact() {
        let x: Vec<f64> = tone(700, 13.0)
            .iter()
            .zip(tone(700, 90.0))
            .enumerate()
            .map(|(t, (a, b))| a + 2.0 * b + 0.01 * t as f64)
            .collect();
        let d = emd(&x).unwrap();
        assert!(d.imf_count() >= 2);
        let rec = d.reconstruct();
        let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = x.iter().zip(&rec).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err / scale < 1e-10);
        assert!(!find_extrema(&d.residual).unwrap().can_sift());
    }

    #[test]
    fn partial_reconstruction_edges() {
        let x: Vec<f64> = tone(400, 9.0).iter().zip(tone(400, 70.0)).map(|(a, b)| a + b).collect();
        let d = emd(&x).unwrap();
        let m = d.imf_count();
        assert_eq!(d.partial_reconstruction(m + 1).unwrap(), d.residual);
        assert!(d.partial_reconstruction(0).is_err());
        assert!(d.partial_reconstruction(m + 2).is_err());
        let full = d.partial_reconstruction(1).unwrap();
        assert!(full.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-10));
        // difference of two partial sums is the skipped IMFs
        let upper = d.partial_reconstruction(2).unwrap();
        for i in 0..x.len() {
            assert!((full[i] - upper[i] - d.imfs[0].values[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_ensemble_equals_emd() {
        let x: Vec<f64> = tone(300, 11.0).iter().zip(tone(300, 60.0)).map(|(a, b)| a + b).collect();
        let cfg = EemdConfig {
            ensemble_size: 1,
            noise_ratio: 0.0,
            ..EemdConfig::default()
        };
        assert_eq!(eemd(&x, &cfg).unwrap(), emd(&x).unwrap());
    }

    #[test]
    fn constant_series() {
        let d = eemd(&[2.5; 64], &EemdConfig::default()).unwrap();
        assert_eq!(d.imf_count(), 0);
        assert_eq!(d.residual, vec![2.5; 64]);
    }

    #[test]
    fn eemd_is_deterministic_and_schedule_free() {
        let x: Vec<f64> = tone(256, 10.0).iter().zip(tone(256, 50.0)).map(|(a, b)| a + b + 1.0).collect();
        let cfg = EemdConfig {
            ensemble_size: 20,
            seed: 5,
            ..EemdConfig::default()
        };
        let a = eemd(&x, &cfg).unwrap();
        let b = eemd(&x, &cfg).unwrap();
        let c = eemd(&x, &EemdConfig { execution: Execution::Sequential, ..cfg }).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        let other = eemd(&x, &cfg.with_seed(6)).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn eemd_mean_check() {
        let x: Vec<f64> = tone(256, 10.0).iter().map(|v| v + 1.0).collect();
        let d = eemd(&x, &EemdConfig { ensemble_size: 10, ..EemdConfig::default() }).unwrap();
        assert!((stats::mean(&d.reconstruct()) - 1.0).abs() < 0.1);

        let mut bad = d.clone();
        bad.residual.iter_mut().for_each(|v| *v += 0.5);
        assert!(matches!(check_mean(&x, &bad), Err(Error::DecompositionFailed { .. })));
    }

    #[test]
    fn member_noise_is_keyed() {
        assert_eq!(member_noise(1, 3, 10, 1.0), member_noise(1, 3, 10, 1.0));
        assert_ne!(member_noise(1, 3, 10, 1.0), member_noise(1, 4, 10, 1.0));
        assert_ne!(member_noise(1, 3, 10, 1.0), member_noise(2, 3, 10, 1.0));
        let big = member_noise(9, 0, 20_000, 0.5);
        assert!((stats::std_dev(&big) - 0.5).abs() < 0.02);
    }

    #[test]
    fn config_validation() {
        assert!(EemdConfig { ensemble_size: 0, ..Default::default() }.validate().is_err());
        assert!(EemdConfig { noise_ratio: -0.1, ..Default::default() }.validate().is_err());
    }
}
