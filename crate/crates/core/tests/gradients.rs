//! Backpropagation against central finite differences.

use cntnet_core::rng::stream_rng;
use cntnet_core::train::{batch_loss, init_gaussian_with, loss_and_gradients, Dataset, LossKind};
use cntnet_core::{ActivationKind, LayerParams, LayerSpec, NetworkSpec};
use rand::Rng;

const H: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;
/// Below this magnitude both derivatives are treated as zero.
const ABS_FLOOR: f64 = 1e-8;

fn perturbed_loss(
    spec: &NetworkSpec,
    data: &Dataset,
    batch: &[usize],
    loss: LossKind,
    layer: usize,
    index: usize,
    delta: f64,
) -> f64 {
    let mut s = spec.clone();
    let LayerParams::Dense { weights, bias } = &mut s.layers[layer].params else { unreachable!() };
    let n = weights.as_slice().len();
    if index < n {
        weights.as_mut_slice()[index] += delta;
    } else {
        bias[index - n] += delta;
    }
    batch_loss(&s, data, batch, loss).unwrap()
}

/// Checks every parameter; returns the worst relative error seen.
fn check(spec: &NetworkSpec, data: &Dataset, loss: LossKind) -> f64 {
    let batch: Vec<usize> = (0..data.len()).collect();
    let (_, grads) = loss_and_gradients(spec, data, &batch, loss).unwrap();
    let mut worst: f64 = 0.0;
    for (l, (gw, gb)) in grads.iter().enumerate() {
        let analytic: Vec<f64> = gw.as_slice().iter().chain(gb).copied().collect();
        for (idx, &g) in analytic.iter().enumerate() {
            let fd = (perturbed_loss(spec, data, &batch, loss, l, idx, H)
                - perturbed_loss(spec, data, &batch, loss, l, idx, -H))
                / (2.0 * H);
            let scale = g.abs().max(fd.abs());
            if scale < ABS_FLOOR {
                continue;
            }
            let rel = (g - fd).abs() / scale;
            assert!(
                rel <= REL_TOL,
                "layer {l} param {idx}: backprop {g:e} vs finite difference {fd:e} ({loss:?})"
            );
            worst = worst.max(rel);
        }
    }
    worst
}

fn random_case(seed: u64, hidden: ActivationKind, output: ActivationKind) -> (NetworkSpec, Vec<f64>, Vec<f64>) {
    let mut rng = stream_rng(seed, 99);
    let dims = [rng.random_range(2..5), rng.random_range(2..5), rng.random_range(2..5), rng.random_range(2..4)];
    let arch = [
        LayerSpec::dense(dims[0], dims[1], hidden),
        LayerSpec::dense(dims[1], dims[2], hidden),
        LayerSpec::dense(dims[2], dims[3], output),
    ];
    let mut spec = init_gaussian_with(&arch, 0.5, &mut rng).unwrap();
    for layer in &mut spec.layers {
        if let LayerParams::Dense { bias, .. } = &mut layer.params {
            bias.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
        }
    }
    let n = 3;
    let inputs: Vec<f64> = (0..n * dims[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
    let targets: Vec<f64> = (0..n * dims[3]).map(|_| rng.random_range(0.0..1.0)).collect();
    (spec, inputs, targets)
}

#[test]
fn twenty_random_nets_all_activations_both_losses() {
    let hidden_kinds = [ActivationKind::Linear, ActivationKind::Relu, ActivationKind::Sigmoid];
    let mut cases = 0;
    for seed in 0..20u64 {
        let hidden = hidden_kinds[seed as usize % 3];
        for output in ActivationKind::ALL {
            // MSE with every output activation
            let (spec, x, y) = random_case(seed, hidden, output);
            let d = Dataset::new(spec.input_dim(), x.clone(), spec.output_dim(), y.clone()).unwrap();
            check(&spec, &d, LossKind::Mse);
            cases += 1;

            // cross-entropy needs positive outputs and probability-like targets
            if matches!(output, ActivationKind::Softmax | ActivationKind::Sigmoid) {
                let classes = spec.output_dim();
                let labels: Vec<usize> = (0..x.len() / spec.input_dim()).map(|i| (i + seed as usize) % classes).collect();
                let d = Dataset::classification(spec.input_dim(), x, labels, classes).unwrap();
                check(&spec, &d, LossKind::CrossEntropy);
                cases += 1;
            }
        }
    }
    assert_eq!(cases, 20 * 4 + 20 * 2);
}

#[test]
fn sigmoid_three_layer_classifier() {
    let (spec, x, _) = random_case(1234, ActivationKind::Sigmoid, ActivationKind::Softmax);
    let classes = spec.output_dim();
    let labels = (0..x.len() / spec.input_dim()).map(|i| i % classes).collect();
    let d = Dataset::classification(spec.input_dim(), x, labels, classes).unwrap();
    let worst = check(&spec, &d, LossKind::CrossEntropy);
    assert!(worst < REL_TOL);
}
