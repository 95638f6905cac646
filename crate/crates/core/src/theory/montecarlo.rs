//! Monte Carlo check of the strength and fluctuation nulls on sampled untrained layers.
//!
//! A trial samples one layer of `K = I + J` nodes, each with `I` incoming weights drawn
//! from `N(0, σ²)` and zero bias. The in-strengths of all trials are pooled and tested
//! against `N(0, Iσ²)`; the per-trial statistic `K·Y²/(Iσ²)` is tested against `χ²(K−1)`.

use alloc::format;
use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};

use super::{chi2_gof, fluctuation_null, fluctuation_statistic, ks_test, GofResult, NullDistribution};
use crate::error::{Error, Result};
use crate::metrics::{fluctuation, mean_var};
use crate::rng::stream_rng;

pub const MIN_TRIALS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloConfig {
    /// Standard deviation the weights are drawn with.
    pub sigma: f64,
    /// Standard deviation the nulls are built from; `None` means `sigma`.
    pub null_sigma: Option<f64>,
    pub in_degree: usize,
    pub out_degree: usize,
    pub trials: usize,
    pub seed: u64,
    pub significance: f64,
    pub bins: usize,
}

impl MonteCarloConfig {
    pub fn new(sigma: f64, in_degree: usize, out_degree: usize, trials: usize, seed: u64) -> Self {
        MonteCarloConfig {
            sigma,
            null_sigma: None,
            in_degree,
            out_degree,
            trials,
            seed,
            significance: super::DEFAULT_SIGNIFICANCE,
            bins: 20,
        }
    }

    pub fn nodes_per_layer(&self) -> usize {
        self.in_degree + self.out_degree
    }

    pub fn declared_sigma(&self) -> f64 {
        self.null_sigma.unwrap_or(self.sigma)
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !(self.declared_sigma() > 0.0) {
            return Err(Error::parameter(format!(
                "sigma must be positive, got {} (declared {})",
                self.sigma,
                self.declared_sigma()
            )));
        }
        if self.trials < MIN_TRIALS {
            return Err(Error::parameter(format!(
                "Monte Carlo check needs at least {MIN_TRIALS} trials, got {}",
                self.trials
            )));
        }
        if self.in_degree == 0 {
            return Err(Error::parameter("in-degree must be at least 1"));
        }
        if self.nodes_per_layer() < 2 {
            return Err(Error::parameter(format!(
                "a layer of {} node(s) has no fluctuation; need at least 2",
                self.nodes_per_layer()
            )));
        }
        Ok(())
    }
}

/// In-strengths and fluctuation of one sampled layer.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub in_strengths: Vec<f64>,
    pub fluctuation: f64,
}

/// Samples trial `trial` from its own `(seed, trial)` stream.
pub fn sample_trial(config: &MonteCarloConfig, trial: usize) -> Result<TrialOutcome> {
    config.validate()?;
    let normal = Normal::new(0.0, config.sigma)
        .map_err(|e| Error::parameter(format!("normal({}) : {e}", config.sigma)))?;
    let mut rng = stream_rng(config.seed, trial as u64);
    let k = config.nodes_per_layer();
    let mut in_strengths = alloc::vec![0.0; k];
    // Row-major I x K draw order, matching how a weight matrix would be filled.
    for _ in 0..config.in_degree {
        for s in in_strengths.iter_mut() {
            *s += normal.sample(&mut rng);
        }
    }
    let fluctuation = fluctuation(&in_strengths);
    Ok(TrialOutcome {
        in_strengths,
        fluctuation,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloReport {
    pub config: MonteCarloConfig,
    pub strength_null: NullDistribution,
    pub fluctuation_null: NullDistribution,
    pub strength: GofResult,
    pub fluctuation: GofResult,
    pub strength_mean: f64,
    pub strength_variance: f64,
    pub mean_squared_fluctuation: f64,
    pub expected_mean_squared_fluctuation: f64,
}

/// Runs both tests on the outcomes of trials `0..trials`, given in trial order.
pub fn summarize_trials(
    config: &MonteCarloConfig,
    outcomes: &[TrialOutcome],
) -> Result<MonteCarloReport> {
    config.validate()?;
    if outcomes.len() != config.trials {
        return Err(Error::parameter(format!(
            "expected {} trial outcomes, got {}",
            config.trials,
            outcomes.len()
        )));
    }
    let k = config.nodes_per_layer();
    let declared = config.declared_sigma();
    let strength_variance = config.in_degree as f64 * declared * declared;
    let strength_null = NullDistribution::normal(0.0, strength_variance)?;
    let fluct_null = fluctuation_null(k, strength_variance)?;

    let strengths: Vec<f64> = outcomes
        .iter()
        .flat_map(|o| o.in_strengths.iter().copied())
        .collect();
    let stats: Vec<f64> = outcomes
        .iter()
        .map(|o| fluctuation_statistic(o.fluctuation, k, strength_variance))
        .collect();

    let strength = ks_test(&strengths, &strength_null, config.significance)?;
    let fluctuation = chi2_gof(&stats, &fluct_null, config.bins, config.significance)?;
    let (strength_mean, sampled_variance) = mean_var(&strengths);
    let mean_squared_fluctuation =
        outcomes.iter().map(|o| o.fluctuation * o.fluctuation).sum::<f64>() / outcomes.len() as f64;

    Ok(MonteCarloReport {
        config: *config,
        strength_null,
        fluctuation_null: fluct_null,
        strength,
        fluctuation,
        strength_mean,
        strength_variance: sampled_variance,
        mean_squared_fluctuation,
        expected_mean_squared_fluctuation: strength_variance * (k - 1) as f64 / k as f64,
    })
}

/// Samples `trials` untrained layers and tests in-strengths and fluctuations.
pub fn monte_carlo_check(config: &MonteCarloConfig) -> Result<MonteCarloReport> {
    config.validate()?;
    let outcomes = (0..config.trials)
        .map(|t| sample_trial(config, t))
        .collect::<Result<Vec<_>>>()?;
    summarize_trials(config, &outcomes)
}
