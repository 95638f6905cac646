use cntnet_core::forward::{forward, forward_layer};
use cntnet_core::lowering::{lower_conv, lower_recurrent, toeplitz_dense_layer};
use cntnet_core::metrics::{
    disparity, fluctuation, layer_strengths, neuron_activation, neuron_strength,
    DEFAULT_DISPARITY_EPSILON,
};
use cntnet_core::netgraph::{lower_dense, LayeredGraph};
use cntnet_core::{ActivationKind, Layer, LayerParams, LayerSpec, Matrix, NetworkSpec};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-2.0f64..2.0, rows * cols)
        .prop_map(move |d| Matrix::new(rows, cols, d).unwrap())
}

fn activation() -> impl Strategy<Value = ActivationKind> {
    prop_oneof![
        Just(ActivationKind::Linear),
        Just(ActivationKind::Relu),
        Just(ActivationKind::Sigmoid),
    ]
}

/// Dense network with 1..=4 layers of width 1..=6 and random biases.
fn dense_net() -> impl Strategy<Value = NetworkSpec> {
    prop::collection::vec(1usize..=6, 2..=5).prop_flat_map(|dims| {
        let layers: Vec<_> = dims
            .windows(2)
            .map(|w| {
                let (i, o) = (w[0], w[1]);
                (matrix(i, o), prop::collection::vec(-1.0f64..1.0, o), activation())
                    .prop_map(|(m, b, a)| Layer::dense(m, b, a))
            })
            .collect();
        layers.prop_map(NetworkSpec::new)
    })
}

fn net_and_input() -> impl Strategy<Value = (NetworkSpec, Vec<f64>)> {
    dense_net().prop_flat_map(|net| {
        let d = net.input_dim();
        (Just(net), prop::collection::vec(-3.0f64..3.0, d))
    })
}

fn conv_layer(h: usize, w: usize, k: usize) -> impl Strategy<Value = Layer> {
    (matrix(k, k), -1.0f64..1.0).prop_map(move |(kernel, bias)| Layer {
        spec: LayerSpec::conv2d(h, w, k, 1, ActivationKind::Linear),
        params: LayerParams::Conv2D { kernel, bias },
    })
}

fn rnn_layer(d: usize, h: usize, t: usize) -> impl Strategy<Value = Layer> {
    (matrix(d, h), matrix(h, h), prop::collection::vec(-1.0f64..1.0, h)).prop_map(
        move |(w_xh, w_hh, bias)| Layer {
            spec: LayerSpec::recurrent(d, h, t, ActivationKind::Sigmoid),
            params: LayerParams::Recurrent { w_xh, w_hh, bias },
        },
    )
}

proptest! {
    #[test]
    fn lower_dense_is_lossless(net in dense_net()) {
        let g = lower_dense(&net).unwrap();
        prop_assert_eq!(g.node_count(), g.layer_sizes().iter().sum::<usize>());
        for (gap, layer) in net.layers.iter().enumerate() {
            let LayerParams::Dense { weights, bias } = &layer.params else { unreachable!() };
            prop_assert_eq!(&g.weight_matrix(gap), weights);
            prop_assert_eq!(g.dest_bias(gap), bias.as_slice());
            prop_assert_eq!(g.edges(gap).len(), weights.rows() * weights.cols());
        }
    }

    #[test]
    fn strength_additivity_and_fluctuation_bounds(net in dense_net()) {
        let g = lower_dense(&net).unwrap();
        for layer in 0..g.num_layers() {
            let st = layer_strengths(&g, layer).unwrap();
            for s in &st {
                prop_assert_eq!(s.s, s.s_in + s.s_out);
            }
            let values: Vec<f64> = st.iter().map(|s| s.s).collect();
            let y = fluctuation(&values);
            prop_assert!(y >= 0.0);
            let all_equal = values.iter().all(|v| *v == values[0]);
            prop_assert_eq!(y == 0.0, all_equal);
        }
    }

    #[test]
    fn disparity_bounds_for_positive_weights(w in prop::collection::vec(1e-3f64..5.0, 1..20)) {
        let d = disparity(&w, DEFAULT_DISPARITY_EPSILON).unwrap();
        let n = w.len() as f64;
        prop_assert!(d >= 1.0 / n - 1e-12 && d <= 1.0 + 1e-12, "{d}");
    }

    #[test]
    fn neuron_metrics_equal_trace((net, x) in net_and_input()) {
        let t = forward(&x, &net).unwrap();
        for l in 0..net.len() {
            prop_assert_eq!(&neuron_strength(&net, l, &x).unwrap(), &t.pre_activation[l]);
            prop_assert_eq!(&neuron_activation(&net, l, &x).unwrap(), &t.activation[l]);
        }
    }

    #[test]
    fn forward_is_deterministic_and_composes((net, x) in net_and_input()) {
        let a = forward(&x, &net).unwrap();
        let b = forward(&x, &net).unwrap();
        prop_assert_eq!(&a, &b);
        let mut z = x.clone();
        for (l, layer) in net.layers.iter().enumerate() {
            let (pre, act) = forward_layer(layer, &z).unwrap();
            prop_assert_eq!(&pre, &a.pre_activation[l]);
            prop_assert_eq!(&act, &a.activation[l]);
            z = act;
        }
    }

    #[test]
    fn activation_ranges_and_monotonicity(z in prop::collection::vec(-50.0f64..50.0, 1..10), bump in 0.0f64..3.0, at in 0usize..10) {
        let sig = cntnet_core::activate(ActivationKind::Sigmoid, &z);
        prop_assert!(sig.iter().all(|v| (0.0..=1.0).contains(v)));
        let relu = cntnet_core::activate(ActivationKind::Relu, &z);
        prop_assert!(relu.iter().all(|v| *v >= 0.0));
        let soft = cntnet_core::activate(ActivationKind::Softmax, &z);
        prop_assert!(soft.iter().all(|v| *v >= 0.0));
        prop_assert!((soft.iter().sum::<f64>() - 1.0).abs() < 1e-9);

        let i = at % z.len();
        let mut z2 = z.clone();
        z2[i] += bump;
        for kind in [ActivationKind::Sigmoid, ActivationKind::Relu] {
            let a = cntnet_core::activate(kind, &z);
            let b = cntnet_core::activate(kind, &z2);
            prop_assert!(b[i] >= a[i]);
        }
    }

    #[test]
    fn weight_sharing_conservation(layer in conv_layer(6, 5, 3)) {
        let g = lower_conv(&layer).unwrap();
        let LayerParams::Conv2D { kernel, .. } = &layer.params else { unreachable!() };
        let total: f64 = g.edges(0).iter().map(|e| e.weight).sum();
        let patches = g.layer_sizes()[1] as f64;
        let expected = patches * kernel.as_slice().iter().sum::<f64>();
        prop_assert!((total - expected).abs() < 1e-9);
    }

    #[test]
    fn conv_graph_matches_toeplitz(layer in conv_layer(7, 6, 3), z in prop::collection::vec(-1.0f64..1.0, 42)) {
        let g = lower_conv(&layer).unwrap();
        let dense = NetworkSpec::new(vec![toeplitz_dense_layer(&layer).unwrap()]);
        let gd = lower_dense(&dense).unwrap();
        for l in 0..2 {
            for (a, b) in layer_strengths(&g, l).unwrap().iter().zip(layer_strengths(&gd, l).unwrap()) {
                prop_assert!((a.s_in - b.s_in).abs() < 1e-9 && (a.s_out - b.s_out).abs() < 1e-9);
            }
        }
        let from_graph = g.propagate(0, &z).unwrap();
        let from_dense = neuron_strength(&dense, 0, &z).unwrap();
        for (a, b) in from_graph.iter().zip(&from_dense) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn unfolding_prefix_is_shorter_unfolding(
        (layer, d, h, t) in (1usize..4, 1usize..4, 2usize..5)
            .prop_flat_map(|(d, h, t)| (rnn_layer(d, h, t), Just(d), Just(h), Just(t)))
    ) {
        let full = lower_recurrent(&layer).unwrap();
        let LayerParams::Recurrent { w_xh, w_hh, bias } = layer.params.clone() else { unreachable!() };
        let shorter = lower_recurrent(&Layer {
            spec: LayerSpec::recurrent(d, h, t - 1, ActivationKind::Sigmoid),
            params: LayerParams::Recurrent { w_xh, w_hh, bias },
        }).unwrap();
        prop_assert_eq!(restrict_steps(&full, d, h, t - 1), shorter);
    }
}

/// Keeps the first `steps` steps of an unfolded cell of horizon `T`: layers `0..=steps`
/// with the input blocks of the dropped steps removed.
fn restrict_steps(g: &LayeredGraph, d: usize, h: usize, steps: usize) -> LayeredGraph {
    let horizon = g.num_layers() - 1;
    let dropped = (horizon - steps) * d;
    let mut sizes = Vec::new();
    for l in 0..=steps {
        // layer 0 = T·d inputs; layer t = h + (T - t)·d; dropped blocks sit at the end
        let keep = if l == steps && l > 0 { h } else { g.layer_sizes()[l] - dropped };
        sizes.push(keep);
    }
    let mut edges = Vec::new();
    let mut bias = Vec::new();
    for gap in 0..steps {
        edges.push(
            g.edges(gap)
                .iter()
                .filter(|e| e.src < sizes[gap] && e.dst < sizes[gap + 1])
                .copied()
                .collect(),
        );
        bias.push(g.dest_bias(gap)[..sizes[gap + 1]].to_vec());
    }
    LayeredGraph::new(sizes, edges, bias).unwrap()
}

/// `x · Ω[0] ··· Ω[ℓ]` by explicit triple loops.
fn matrix_chain(x: &[f64], mats: &[&Matrix]) -> Vec<f64> {
    let mut v = x.to_vec();
    for m in mats {
        let mut out = vec![0.0; m.cols()];
        for j in 0..m.cols() {
            for i in 0..m.rows() {
                out[j] += v[i] * m.get(i, j);
            }
        }
        v = out;
    }
    v
}

proptest! {
    #[test]
    fn linear_network_collapses_to_matrix_chain(
        (mats, x) in prop::collection::vec(1usize..=5, 5).prop_flat_map(|dims| {
            let ms: Vec<_> = dims.windows(2).map(|w| matrix(w[0], w[1])).collect();
            (ms, prop::collection::vec(-2.0f64..2.0, dims[0]))
        })
    ) {
        let net = NetworkSpec::new(
            mats.iter().map(|m| Layer::dense(m.clone(), vec![0.0; m.cols()], ActivationKind::Linear)).collect(),
        );
        for l in 0..4 {
            let refs: Vec<&Matrix> = mats[..=l].iter().collect();
            let expected = matrix_chain(&x, &refs);
            let got = neuron_strength(&net, l, &x).unwrap();
            for (a, b) in got.iter().zip(&expected) {
                prop_assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
            }
        }
    }
}
