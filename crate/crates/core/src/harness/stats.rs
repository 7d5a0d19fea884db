//! Empirical CDF, Kolmogorov–Smirnov distance, histograms and correlation.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Asymptotic 1% critical value of the one-sample KS statistic times `√n`.
pub const KS_ONE_PERCENT: f64 = 1.6276;

/// `1.6276 / √n`.
pub fn ks_critical_value(n: usize) -> f64 {
    KS_ONE_PERCENT / (n as f64).sqrt()
}

/// Right-continuous empirical distribution function.
#[derive(Debug, Clone, PartialEq)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    /// `#{samples ≤ t} / n`.
    pub fn eval(&self, t: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= t) as f64 / self.sorted.len() as f64
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// `(value, rank / n)` at each sorted sample.
    pub fn steps(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let n = self.sorted.len() as f64;
        self.sorted
            .iter()
            .enumerate()
            .map(move |(i, &v)| (v, (i + 1) as f64 / n))
    }
}

pub fn ecdf(samples: &[f64]) -> Result<Ecdf> {
    if samples.is_empty() {
        return Err(Error::Empty("ecdf samples"));
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("ecdf samples"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Ecdf { sorted })
}

/// `sup_t |F_n(t) - F(t)|`, checking both one-sided limits at every jump.
pub fn ks_distance_cdf(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// KS distance between the samples and `N(0, variance)`.
pub fn ks_distance(samples: &[f64], variance: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("ks samples"));
    }
    if !(variance.is_finite() && variance > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "variance must be positive, got {variance}"
        )));
    }
    let normal =
        Normal::new(0.0, variance.sqrt()).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(ks_distance_cdf(samples, |t| normal.cdf(t)))
}

/// Sample mean and unbiased variance (`0` for a single sample).
pub fn mean_variance(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    if samples.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = samples.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, ss / (n - 1.0))
}

/// Equal-width bins over `[min, max]`, normalised to unit area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub width: f64,
    pub counts: Vec<u64>,
    pub densities: Vec<f64>,
}

impl Histogram {
    pub fn edges(&self, bin: usize) -> (f64, f64) {
        (
            self.lo + bin as f64 * self.width,
            self.lo + (bin + 1) as f64 * self.width,
        )
    }

    pub fn area(&self) -> f64 {
        self.densities.iter().sum::<f64>() * self.width
    }
}

/// Density histogram. All-equal samples are reported as
/// [`Error::DegenerateSample`] since no bin width exists.
pub fn histogram(samples: &[f64], bin_count: usize) -> Result<Histogram> {
    if bin_count == 0 {
        return Err(Error::InvalidConfig(
            "histogram needs at least one bin".into(),
        ));
    }
    if samples.is_empty() {
        return Err(Error::Empty("histogram samples"));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("histogram samples"));
    }
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Err(Error::DegenerateSample {
            value: lo,
            count: samples.len(),
        });
    }
    let width = (hi - lo) / bin_count as f64;
    let mut counts = vec![0u64; bin_count];
    for &v in samples {
        let bin = (((v - lo) / width) as usize).min(bin_count - 1);
        counts[bin] += 1;
    }
    let scale = 1.0 / (samples.len() as f64 * width);
    let densities = counts.iter().map(|&c| c as f64 * scale).collect();
    Ok(Histogram {
        lo,
        width,
        counts,
        densities,
    })
}

/// Default bin count `⌈√n⌉`.
pub fn default_bin_count(n: usize) -> usize {
    ((n as f64).sqrt().ceil() as usize).max(1)
}

/// Pearson correlation; `None` when either coordinate has zero spread.
pub fn pearson(pairs: &[(f64, f64)]) -> Option<f64> {
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndependenceReport {
    pub pairs: usize,
    /// `None` when the correlation is undefined (a constant coordinate).
    pub correlation: Option<f64>,
    /// `3/√pairs`.
    pub threshold: f64,
    pub independent: bool,
}

/// Flags `|corr| < 3/√n` between paired fluctuations.
pub fn independence_report(pairs: &[(f64, f64)]) -> Result<IndependenceReport> {
    if pairs.len() < 3 {
        return Err(Error::Mismatch(format!(
            "independence check needs at least 3 pairs, got {}",
            pairs.len()
        )));
    }
    let correlation = pearson(pairs);
    let threshold = 3.0 / (pairs.len() as f64).sqrt();
    Ok(IndependenceReport {
        pairs: pairs.len(),
        correlation,
        threshold,
        independent: correlation.is_some_and(|c| c.abs() < threshold),
    })
}
