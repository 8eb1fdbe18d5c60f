//! Discrete Fourier transform of weekly activity and dominant-period detection.
//!
//! The transform follows the 1-based convention
//! `X[k] = Σ_{n=1..N} x_n · exp(−2πi·k·n/N)` for `k = 1..N`, so `k = N` is the
//! DC bin.

use std::f64::consts::PI;

use nalgebra::Complex;

use crate::data::WeeklySeries;
use crate::error::{Error, Result};

/// Reported when the second-largest in-range magnitude is zero.
pub const PEAK_RATIO_CAP: f64 = 1e12;

/// Relative tolerance under which two magnitudes count as tied.
const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// `coefficients[k - 1]` holds `X[k]`.
    coefficients: Vec<Complex<f64>>,
    /// `Σ |x_n|` of the transformed samples; zero-spectrum threshold scale.
    scale: f64,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// `X[k]` for `1 ≤ k ≤ N`.
    pub fn coefficient(&self, k: usize) -> Complex<f64> {
        self.coefficients[k - 1]
    }

    pub fn magnitude(&self, k: usize) -> f64 {
        self.coefficient(k).norm()
    }

    pub fn coefficients(&self) -> &[Complex<f64>] {
        &self.coefficients
    }

    /// `(k, |X[k]|)` for every bin.
    pub fn magnitudes(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.coefficients.iter().enumerate().map(|(i, c)| (i + 1, c.norm()))
    }
}

/// Direct O(N²) evaluation over raw samples.
pub fn dft_values(x: &[f64]) -> Result<Spectrum> {
    let n = x.len();
    if n < 4 {
        return Err(Error::Domain(format!("DFT needs at least 4 samples, got {n}")));
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("sample {} is not finite", i + 1)));
    }
    let coefficients = (1..=n)
        .map(|k| {
            let mut acc = Complex::new(0.0, 0.0);
            for (idx, &xn) in x.iter().enumerate() {
                // Reduce k·n mod N before scaling to keep the phase exact.
                let kn = (k * (idx + 1)) % n;
                let angle = -2.0 * PI * kn as f64 / n as f64;
                acc += Complex::new(angle.cos(), angle.sin()) * xn;
            }
            acc
        })
        .collect();
    Ok(Spectrum {
        coefficients,
        scale: x.iter().map(|v| v.abs()).sum(),
    })
}

pub fn dft(series: &WeeklySeries) -> Result<Spectrum> {
    dft_values(&series.activity)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodEstimate {
    pub period_weeks: f64,
    pub peak_k: usize,
    pub peak_ratio: f64,
}

/// Largest-magnitude bin over `min_k..=⌊N/2⌋`, ties toward the smaller `k`.
pub fn dominant_period(spec: &Spectrum, min_k: usize) -> Result<PeriodEstimate> {
    if min_k < 1 {
        return Err(Error::Domain("min_k must be at least 1".into()));
    }
    let n = spec.len();
    let hi = n / 2;
    if min_k > hi {
        return Err(Error::Domain(format!("min_k {min_k} exceeds N/2 = {hi}")));
    }
    let mut best_k = min_k;
    let mut best = spec.magnitude(min_k);
    for k in min_k + 1..=hi {
        let m = spec.magnitude(k);
        if m > best * (1.0 + TIE_TOL) {
            best = m;
            best_k = k;
        }
    }
    if spec.scale == 0.0 || best <= 1e-12 * spec.scale {
        return Err(Error::NoPeriod("spectrum is zero over the searched range".into()));
    }
    let second = (min_k..=hi)
        .filter(|&k| k != best_k)
        .map(|k| spec.magnitude(k))
        .fold(0.0f64, f64::max);
    let peak_ratio = if second > 0.0 {
        (best / second).min(PEAK_RATIO_CAP)
    } else {
        PEAK_RATIO_CAP
    };
    Ok(PeriodEstimate {
        period_weeks: n as f64 / best_k as f64,
        peak_k: best_k,
        peak_ratio,
    })
}

/// Subtracts the series mean, transforms, and locates the dominant period.
pub fn detect_period(series: &WeeklySeries, min_k: usize) -> Result<(Spectrum, PeriodEstimate)> {
    let n = series.len() as f64;
    let mean = series.activity.iter().sum::<f64>() / n;
    let detrended: Vec<f64> = series.activity.iter().map(|a| a - mean).collect();
    let peak = series.activity.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    if detrended.iter().all(|v| v.abs() <= 1e-12 * peak.max(f64::MIN_POSITIVE)) {
        return Err(Error::NoPeriod(format!("series for {} is constant", series.region)));
    }
    let spec = dft_values(&detrended)?;
    let est = dominant_period(&spec, min_k)?;
    Ok((spec, est))
}
