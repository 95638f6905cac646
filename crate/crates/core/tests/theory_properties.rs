use cntnet_core::rng::stream_rng;
use cntnet_core::theory::{
    ks_test, link_weight_null, monte_carlo_check, sample_trial, squared_fluctuation_null,
    MonteCarloConfig, Verdict,
};
use cntnet_core::train::init_gaussian;
use cntnet_core::{ActivationKind, LayerParams, LayerSpec};
use rand_distr::{Distribution, Normal};

const SIGMA: f64 = 0.1;
const IN_DEGREE: usize = 32;

/// 10^5 in-strengths of untrained layers: 3125 layers of 32 nodes.
fn in_strengths() -> Vec<f64> {
    let c = MonteCarloConfig::new(SIGMA, IN_DEGREE, 0, 3125, 2024);
    (0..c.trials)
        .flat_map(|t| sample_trial(&c, t).unwrap().in_strengths)
        .collect()
}

#[test]
fn in_strength_mean_near_zero() {
    let s = in_strengths();
    assert_eq!(s.len(), 100_000);
    let var = IN_DEGREE as f64 * SIGMA * SIGMA;
    let mean = s.iter().sum::<f64>() / s.len() as f64;
    assert!(mean.abs() <= 4.0 * (var / 1e5).sqrt(), "mean {mean}");
}

#[test]
fn in_strength_variance_matches() {
    let s = in_strengths();
    let (_, var) = cntnet_core::metrics::mean_var(&s);
    let expected = IN_DEGREE as f64 * SIGMA * SIGMA;
    assert!((var / expected - 1.0).abs() <= 0.05, "variance {var} vs {expected}");
}

#[test]
fn squared_fluctuation_mean_matches_null() {
    let c = MonteCarloConfig::new(SIGMA, IN_DEGREE, 0, 100_000, 77);
    let mean_sq: f64 = (0..c.trials)
        .map(|t| sample_trial(&c, t).unwrap().fluctuation.powi(2))
        .sum::<f64>()
        / c.trials as f64;
    let null = squared_fluctuation_null(IN_DEGREE, IN_DEGREE as f64 * SIGMA * SIGMA).unwrap();
    assert!((mean_sq / null.mean() - 1.0).abs() <= 0.02, "{mean_sq} vs {}", null.mean());
}

#[test]
fn init_weights_pass_ks_against_link_null() {
    let variance = 0.5;
    let spec = init_gaussian(&[LayerSpec::dense(250, 400, ActivationKind::Sigmoid)], variance, 9).unwrap();
    let LayerParams::Dense { weights, .. } = &spec.layers[0].params else { unreachable!() };
    assert_eq!(weights.as_slice().len(), 100_000);
    let r = ks_test(weights.as_slice(), &link_weight_null(variance.sqrt()).unwrap(), 0.01).unwrap();
    assert_eq!(r.verdict, Verdict::Consistent, "{r:?}");
}

#[test]
fn strength_test_has_power_against_wrong_sigma() {
    let mut c = MonteCarloConfig::new(SIGMA, IN_DEGREE, 0, 1000, 5);
    c.null_sigma = Some(2.0 * SIGMA);
    assert_eq!(monte_carlo_check(&c).unwrap().strength.verdict, Verdict::Rejected);
}

#[test]
fn gof_verdicts_reproducible() {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let draw = || -> Vec<f64> {
        let mut rng = stream_rng(3, 1);
        (0..5000).map(|_| normal.sample(&mut rng)).collect()
    };
    let null = link_weight_null(1.0).unwrap();
    assert_eq!(ks_test(&draw(), &null, 0.01).unwrap(), ks_test(&draw(), &null, 0.01).unwrap());
}
