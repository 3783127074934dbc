//! Hilbert-Huang spectral analysis of IMFs: analytic signal,
//! instantaneous frequency, and the characteristic period taken from the
//! highest-energy logarithmic frequency bin.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::OnceLock;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::format::sig6;

/// Lowest bin edge, word^-1.
pub const MIN_FREQUENCY: f64 = 1e-6;
/// Highest bin edge, word^-1.
pub const MAX_FREQUENCY: f64 = 1.0;
pub const BINS_PER_DECADE: usize = 20;
pub const BIN_COUNT: usize = 6 * BINS_PER_DECADE;

/// Log-spaced frequency bins shared by every analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyBins {
    edges: Vec<f64>,
}

impl FrequencyBins {
    /// The fixed 120-bin grid over `[1e-6, 1]` word^-1.
    pub fn standard() -> &'static FrequencyBins {
        static BINS: OnceLock<FrequencyBins> = OnceLock::new();
        BINS.get_or_init(|| {
            let edges = (0..=BIN_COUNT)
                .map(|i| match i {
                    0 => MIN_FREQUENCY,
                    i if i == BIN_COUNT => MAX_FREQUENCY,
                    i => 10f64.powf(-6.0 + i as f64 / BINS_PER_DECADE as f64),
                })
                .collect();
            FrequencyBins { edges }
        })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn count(&self) -> usize {
        self.edges.len() - 1
    }

    /// Bin holding `f`; the top edge belongs to the last bin.
    pub fn bin_of(&self, f: f64) -> Option<usize> {
        let (lo, hi) = (self.edges[0], self.edges[self.edges.len() - 1]);
        if !(f >= lo && f <= hi) {
            return None;
        }
        Some((self.edges.partition_point(|&e| e <= f) - 1).min(self.count() - 1))
    }

    /// Geometric center of bin `i`.
    pub fn center(&self, i: usize) -> f64 {
        (self.edges[i] * self.edges[i + 1]).sqrt()
    }
}

/// `x + i H[x]` via the FFT: positive frequencies doubled, negative zeroed.
pub fn analytic_signal(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    for (k, c) in buf.iter_mut().enumerate() {
        let gain = if k == 0 || (n.is_multiple_of(2) && k == half) {
            1.0
        } else if k <= (n - 1) / 2 {
            2.0
        } else {
            0.0
        };
        *c *= gain / n as f64;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf
}

/// Discrete Hilbert transform (imaginary part of the analytic signal).
pub fn hilbert(x: &[f64]) -> Vec<f64> {
    analytic_signal(x).into_iter().map(|c| c.im).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instantaneous {
    /// Cycles per word when `sampling_rate` is in samples per word.
    pub frequency: Vec<f64>,
    pub amplitude: Vec<f64>,
}

/// Frequency from the derivative of the unwrapped phase (central
/// differences inside, one-sided at the ends) and amplitude from the
/// analytic-signal modulus.
pub fn instantaneous_frequency(imf: &[f64], sampling_rate: f64) -> Instantaneous {
    let z = analytic_signal(imf);
    let amplitude: Vec<f64> = z.iter().map(|c| c.norm()).collect();
    let n = z.len();
    let mut phase: Vec<f64> = z.iter().map(|c| c.arg()).collect();
    for i in 1..n {
        let mut d = phase[i] - phase[i - 1];
        d -= 2.0 * PI * (d / (2.0 * PI)).round();
        phase[i] = phase[i - 1] + d;
    }
    let scale = sampling_rate / (2.0 * PI);
    let frequency = (0..n)
        .map(|i| match (i, n) {
            (_, 1) => 0.0,
            (0, _) => (phase[1] - phase[0]) * scale,
            (i, n) if i == n - 1 => (phase[i] - phase[i - 1]) * scale,
            (i, _) => (phase[i + 1] - phase[i - 1]) * 0.5 * scale,
        })
        .collect();
    Instantaneous { frequency, amplitude }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HhtSpectrum {
    pub energies: Vec<f64>,
    pub dominant_bin: usize,
    pub characteristic_period: f64,
}

impl HhtSpectrum {
    /// CSV rows `(imf, bin_low, bin_high, energy)`.
    pub fn write_rows<W: Write>(&self, wtr: &mut csv::Writer<W>, order: usize, bins: &FrequencyBins) -> Result<()> {
        for (i, e) in self.energies.iter().enumerate() {
            wtr.write_record([order.to_string(), sig6(bins.edges[i]), sig6(bins.edges[i + 1]), sig6(*e)])?;
        }
        Ok(())
    }
}

/// Amplitude-squared energy per bin; non-positive frequencies and those
/// outside the grid are left out.
pub fn spectrum(imf: &[f64], bins: &FrequencyBins, sampling_rate: f64) -> Result<HhtSpectrum> {
    if imf.iter().all(|v| *v == 0.0) {
        return Err(Error::UndefinedPeriod);
    }
    let inst = instantaneous_frequency(imf, sampling_rate);
    let mut energies = vec![0.0; bins.count()];
    for (f, a) in inst.frequency.iter().zip(&inst.amplitude) {
        if *f > 0.0 {
            if let Some(b) = bins.bin_of(*f) {
                energies[b] += a * a;
            }
        }
    }
    // first maximum wins, i.e. the lower-frequency bin on ties
    let (dominant_bin, top) = energies
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, be), (i, &e)| if e > be { (i, e) } else { (bi, be) });
    if top <= 0.0 {
        return Err(Error::UndefinedPeriod);
    }
    Ok(HhtSpectrum {
        characteristic_period: 1.0 / bins.center(dominant_bin),
        energies,
        dominant_bin,
    })
}

/// Period in words of the highest-energy bin.
pub fn characteristic_period(imf: &[f64], bins: &FrequencyBins, sampling_rate: f64) -> Result<f64> {
    spectrum(imf, bins, sampling_rate).map(|s| s.characteristic_period)
}
