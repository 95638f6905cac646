//! Null distributions of untrained Gaussian networks and goodness-of-fit tests.
//!
//! With weights drawn i.i.d. from `N(0, σ²)` and zero biases:
//!
//! - every link weight follows `N(0, σ²)`;
//! - the strength of a node with in-degree `I` and out-degree `J` follows `N(0, (I+J)σ²)`;
//! - for `n` independent strengths of common variance `σ_s²` (e.g. the in-strengths of
//!   one layer, which share no weights), `n·Y²/σ_s² ~ χ²(n−1)` where `Y` is the layer
//!   fluctuation.

mod montecarlo;
pub mod special;

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use special::{chi_squared_cdf, chi_squared_sf, kolmogorov_sf, normal_cdf};

pub use montecarlo::{
    monte_carlo_check, sample_trial, summarize_trials, MonteCarloConfig, MonteCarloReport,
    TrialOutcome, MIN_TRIALS,
};

pub const DEFAULT_SIGNIFICANCE: f64 = 0.01;
pub const MIN_KS_SAMPLES: usize = 8;
pub const MIN_EXPECTED_PER_BIN: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NullDistribution {
    Normal { mean: f64, variance: f64 },
    /// `scale · χ²(dof)`.
    ScaledChiSquared { dof: u32, scale: f64 },
}

impl NullDistribution {
    pub fn normal(mean: f64, variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite() && mean.is_finite()) {
            return Err(Error::parameter(format!(
                "normal needs finite mean and positive variance, got ({mean}, {variance})"
            )));
        }
        Ok(NullDistribution::Normal { mean, variance })
    }

    pub fn scaled_chi_squared(dof: u32, scale: f64) -> Result<Self> {
        if dof < 1 || !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::parameter(format!(
                "scaled chi-squared needs dof >= 1 and scale > 0, got ({dof}, {scale})"
            )));
        }
        Ok(NullDistribution::ScaledChiSquared { dof, scale })
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            NullDistribution::Normal { mean, variance } => {
                normal_cdf(x, mean, libm::sqrt(variance))
            }
            NullDistribution::ScaledChiSquared { dof, scale } => {
                if x <= 0.0 {
                    0.0
                } else {
                    chi_squared_cdf(x / scale, dof as f64)
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            NullDistribution::Normal { mean, .. } => mean,
            NullDistribution::ScaledChiSquared { dof, scale } => scale * dof as f64,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            NullDistribution::Normal { variance, .. } => variance,
            NullDistribution::ScaledChiSquared { dof, scale } => 2.0 * dof as f64 * scale * scale,
        }
    }

    /// Inverse CDF by bisection; `p` must lie in `(0, 1)`.
    pub fn quantile(&self, p: f64) -> f64 {
        let sd = libm::sqrt(self.variance());
        let (mut lo, mut hi) = match *self {
            NullDistribution::Normal { mean, .. } => (mean - 40.0 * sd, mean + 40.0 * sd),
            NullDistribution::ScaledChiSquared { .. } => (0.0, self.mean() + 60.0 * sd + 60.0),
        };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * libm::fabs(mid).max(1e-300) {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

/// `N(0, σ²)`, the distribution of every link weight.
pub fn link_weight_null(sigma: f64) -> Result<NullDistribution> {
    if !(sigma > 0.0) {
        return Err(Error::parameter(format!("sigma must be positive, got {sigma}")));
    }
    NullDistribution::normal(0.0, sigma * sigma)
}

/// `N(0, (I+J)σ²)` for a node with in-degree `I` and out-degree `J`.
pub fn node_strength_null(sigma: f64, in_degree: usize, out_degree: usize) -> Result<NullDistribution> {
    if !(sigma > 0.0) {
        return Err(Error::parameter(format!("sigma must be positive, got {sigma}")));
    }
    let k = in_degree + out_degree;
    if k == 0 {
        return Err(Error::parameter("node needs at least one incident link"));
    }
    NullDistribution::normal(0.0, k as f64 * sigma * sigma)
}

/// Null of the standardized statistic `n·Y²/σ_s²`, i.e. `χ²(n−1)`.
pub fn fluctuation_null(n: usize, strength_variance: f64) -> Result<NullDistribution> {
    check_fluctuation_args(n, strength_variance)?;
    NullDistribution::scaled_chi_squared((n - 1) as u32, 1.0)
}

/// Null of `Y²` itself: `(σ_s²/n)·χ²(n−1)`.
pub fn squared_fluctuation_null(n: usize, strength_variance: f64) -> Result<NullDistribution> {
    check_fluctuation_args(n, strength_variance)?;
    NullDistribution::scaled_chi_squared((n - 1) as u32, strength_variance / n as f64)
}

/// `n·Y²/σ_s²`, the quantity [`fluctuation_null`] describes.
pub fn fluctuation_statistic(fluctuation: f64, n: usize, strength_variance: f64) -> f64 {
    n as f64 * fluctuation * fluctuation / strength_variance
}

fn check_fluctuation_args(n: usize, strength_variance: f64) -> Result<()> {
    if n < 2 {
        return Err(Error::parameter(format!(
            "fluctuation needs at least 2 nodes per layer, got {n}"
        )));
    }
    if !(strength_variance > 0.0) {
        return Err(Error::parameter(format!(
            "strength variance must be positive, got {strength_variance}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Consistent,
    Rejected,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Consistent => "consistent",
            Verdict::Rejected => "rejected",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GofResult {
    pub statistic: f64,
    pub p_value: f64,
    pub sample_size: usize,
    pub significance: f64,
    pub verdict: Verdict,
}

impl GofResult {
    fn new(statistic: f64, p_value: f64, sample_size: usize, significance: f64) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        GofResult {
            statistic,
            p_value,
            sample_size,
            significance,
            verdict: if p_value < significance {
                Verdict::Rejected
            } else {
                Verdict::Consistent
            },
        }
    }
}

fn check_samples(samples: &[f64], significance: f64) -> Result<()> {
    if samples.iter().any(|v| v.is_nan()) {
        return Err(Error::parameter("samples contain NaN"));
    }
    if !(significance > 0.0 && significance < 1.0) {
        return Err(Error::parameter(format!(
            "significance must lie in (0, 1), got {significance}"
        )));
    }
    Ok(())
}

fn sorted(samples: &[f64]) -> Vec<f64> {
    let mut xs = samples.to_vec();
    xs.sort_unstable_by(f64::total_cmp);
    xs
}

/// Two-sided Kolmogorov–Smirnov distance between the sample ECDF and `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let xs = sorted(samples);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0, |d: f64, (i, &x)| {
        let f = cdf(x);
        let above = (i + 1) as f64 / n - f;
        let below = f - i as f64 / n;
        d.max(above).max(below)
    })
}

/// KS test with the asymptotic Kolmogorov p-value `Q(√n · D)`.
pub fn ks_test(samples: &[f64], null: &NullDistribution, significance: f64) -> Result<GofResult> {
    check_samples(samples, significance)?;
    if samples.len() < MIN_KS_SAMPLES {
        return Err(Error::parameter(format!(
            "KS test needs at least {MIN_KS_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    let d = ks_statistic(samples, |x| null.cdf(x));
    let n = samples.len();
    let p = kolmogorov_sf(libm::sqrt(n as f64) * d);
    Ok(GofResult::new(d, p, n, significance))
}

/// Pearson χ² test on bins that are equiprobable under `null`.
///
/// The bin count is reduced until every bin expects at least
/// [`MIN_EXPECTED_PER_BIN`] samples; fewer than two bins is an error.
pub fn chi2_gof(
    samples: &[f64],
    null: &NullDistribution,
    bins: usize,
    significance: f64,
) -> Result<GofResult> {
    check_samples(samples, significance)?;
    let n = samples.len();
    let bins = bins.min(n / MIN_EXPECTED_PER_BIN);
    if bins < 2 {
        return Err(Error::parameter(format!(
            "degenerate binning: {n} samples cannot fill 2 bins of {MIN_EXPECTED_PER_BIN}"
        )));
    }
    let edges: Vec<f64> = (1..bins)
        .map(|k| null.quantile(k as f64 / bins as f64))
        .collect();
    let mut counts = alloc::vec![0usize; bins];
    for &x in samples {
        counts[edges.partition_point(|&e| e <= x)] += 1;
    }
    let expected = n as f64 / bins as f64;
    let statistic: f64 = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    let p = chi_squared_sf(statistic, (bins - 1) as f64);
    Ok(GofResult::new(statistic, p, n, significance))
}
