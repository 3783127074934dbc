//! Extrema detection, spline envelopes and the sifting iteration.

use super::spline::NaturalSpline;
use crate::error::{Error, Result};

/// Sifting stops once the Cauchy-type SD falls below this value and the
/// extrema/zero-crossing condition holds.
pub const SD_THRESHOLD: f64 = 0.2;
pub const MAX_SIFTS: usize = 100;
/// Extrema mirrored across each boundary before spline fitting.
const MIRRORED: usize = 2;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Extrema {
    pub maxima: Vec<(usize, f64)>,
    pub minima: Vec<(usize, f64)>,
}

impl Extrema {
    pub fn count(&self) -> usize {
        self.maxima.len() + self.minima.len()
    }

    /// Enough extrema for both envelopes.
    pub fn can_sift(&self) -> bool {
        self.maxima.len() >= 2 && self.minima.len() >= 2
    }
}

/// Strict interior extrema. A flat run bounded by lower (higher) values on
/// both sides is a single maximum (minimum) at the floor of its midpoint.
pub fn find_extrema(x: &[f64]) -> Result<Extrema> {
    if x.len() < 3 {
        return Err(Error::TooShort { len: x.len(), min: 3 });
    }
    let mut ext = Extrema::default();
    let n = x.len();
    let mut i = 1;
    while i < n - 1 {
        let before = x[i - 1];
        let mut j = i;
        while j + 1 < n && x[j + 1] == x[i] {
            j += 1;
        }
        if j + 1 >= n {
            break;
        }
        let after = x[j + 1];
        let mid = (i + j) / 2;
        if x[i] > before && x[i] > after {
            ext.maxima.push((mid, x[i]));
        } else if x[i] < before && x[i] < after {
            ext.minima.push((mid, x[i]));
        }
        i = j + 1;
    }
    Ok(ext)
}

/// Sign changes, treating zero as non-negative.
pub fn zero_crossings(x: &[f64]) -> usize {
    x.windows(2).filter(|w| (w[0] < 0.0) != (w[1] < 0.0)).count()
}

/// Extrema count and zero-crossing count differ by at most one.
pub fn satisfies_imf_counts(x: &[f64]) -> bool {
    match find_extrema(x) {
        Ok(ext) => ext.count().abs_diff(zero_crossings(x)) <= 1,
        Err(_) => false,
    }
}

fn envelope(points: &[(usize, f64)], n: usize) -> NaturalSpline {
    let last = (n - 1) as f64;
    let k = MIRRORED.min(points.len());
    let mut xs = Vec::with_capacity(points.len() + 2 * k);
    let mut ys = Vec::with_capacity(points.len() + 2 * k);
    for &(p, v) in points[..k].iter().rev() {
        xs.push(-(p as f64));
        ys.push(v);
    }
    for &(p, v) in points {
        xs.push(p as f64);
        ys.push(v);
    }
    for &(p, v) in points[points.len() - k..].iter().rev() {
        xs.push(2.0 * last - p as f64);
        ys.push(v);
    }
    NaturalSpline::fit(xs, ys)
}

/// Mean of the upper and lower cubic-spline envelopes, or `None` when
/// there are fewer than two maxima or two minima.
pub fn envelope_mean(x: &[f64]) -> Result<Option<Vec<f64>>> {
    let ext = find_extrema(x)?;
    Ok(envelope_mean_from(x.len(), &ext))
}

fn envelope_mean_from(n: usize, ext: &Extrema) -> Option<Vec<f64>> {
    if !ext.can_sift() {
        return None;
    }
    let mut mean = vec![0.0; n];
    envelope(&ext.maxima, n).accumulate_grid(&mut mean, 0.5);
    envelope(&ext.minima, n).accumulate_grid(&mut mean, 0.5);
    Some(mean)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiftOutcome {
    pub imf: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Repeatedly subtracts the envelope mean until the IMF conditions hold or
/// [`MAX_SIFTS`] iterations have run.
pub fn sift(x: &[f64]) -> Result<SiftOutcome> {
    let mut h = x.to_vec();
    let mut ext = find_extrema(&h)?;
    if !ext.can_sift() {
        return Err(Error::InsufficientExtrema);
    }
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_SIFTS {
        let Some(mean) = envelope_mean_from(h.len(), &ext) else {
            break;
        };
        iterations += 1;
        let mut num = 0.0;
        let mut den = 0.0;
        for (hv, mv) in h.iter_mut().zip(&mean) {
            den += *hv * *hv;
            num += mv * mv;
            *hv -= mv;
        }
        let sd = if den > 0.0 { num / den } else { 0.0 };
        ext = find_extrema(&h)?;
        if sd < SD_THRESHOLD && ext.count().abs_diff(zero_crossings(&h)) <= 1 {
            converged = true;
            break;
        }
    }
    Ok(SiftOutcome {
        imf: h,
        iterations,
        converged,
    })
}
