//! Complex-network metrics at link, node/neuron and layer granularity.
//!
//! Layer indices follow two conventions. Link-weight statistics and neuron metrics take
//! the index of a layer of the [`NetworkSpec`] (the weight matrix `Ω[ℓ]` and its
//! `N[ℓ+1]` output neurons). Node strength, fluctuation and disparity take the index of
//! a layer of the [`LayeredGraph`], where layer 0 holds the network inputs. For dense
//! networks spec layer `ℓ` is the gap between graph layers `ℓ` and `ℓ + 1`.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::forward::{activate, forward_layer, layer_pre_activation};
use crate::netgraph::{Layer, LayerParams, LayeredGraph, NetworkSpec};

/// Strength below which disparity is reported as ill-conditioned.
pub const DEFAULT_DISPARITY_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetricKind {
    LinkWeightMean,
    LinkWeightVar,
    NodeStrength,
    NodeInStrength,
    NodeOutStrength,
    NeuronStrength,
    NeuronActivation,
    LayerFluctuation,
    NodeDisparity,
}

impl MetricKind {
    pub const ALL: [MetricKind; 9] = [
        MetricKind::LinkWeightMean,
        MetricKind::LinkWeightVar,
        MetricKind::NodeStrength,
        MetricKind::NodeInStrength,
        MetricKind::NodeOutStrength,
        MetricKind::NeuronStrength,
        MetricKind::NeuronActivation,
        MetricKind::LayerFluctuation,
        MetricKind::NodeDisparity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::LinkWeightMean => "link_weight_mean",
            MetricKind::LinkWeightVar => "link_weight_var",
            MetricKind::NodeStrength => "node_strength",
            MetricKind::NodeInStrength => "node_in_strength",
            MetricKind::NodeOutStrength => "node_out_strength",
            MetricKind::NeuronStrength => "neuron_strength",
            MetricKind::NeuronActivation => "neuron_activation",
            MetricKind::LayerFluctuation => "layer_fluctuation",
            MetricKind::NodeDisparity => "node_disparity",
        }
    }

    /// Metrics that need an input sample.
    pub fn is_input_dependent(self) -> bool {
        matches!(self, MetricKind::NeuronStrength | MetricKind::NeuronActivation)
    }

    /// Metrics with one value per layer rather than per node.
    pub fn is_layer_level(self) -> bool {
        matches!(
            self,
            MetricKind::LinkWeightMean | MetricKind::LinkWeightVar | MetricKind::LayerFluctuation
        )
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::parameter(format!("unknown metric `{s}`")))
    }
}

/// One metric value with its provenance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSample {
    pub metric: MetricKind,
    pub network_id: u32,
    pub layer: usize,
    pub node: Option<usize>,
    pub input_sample: Option<usize>,
    pub value: f64,
    /// Set when the value could not be computed (ill-conditioned disparity); `value` is NaN.
    pub flagged: bool,
}

impl MetricSample {
    fn new(metric: MetricKind, network_id: u32, layer: usize, value: f64) -> Self {
        MetricSample {
            metric,
            network_id,
            layer,
            node: None,
            input_sample: None,
            value,
            flagged: false,
        }
    }

    fn at_node(mut self, node: usize) -> Self {
        self.node = Some(node);
        self
    }

    fn at_input(mut self, input: usize) -> Self {
        self.input_sample = Some(input);
        self
    }

    pub fn sort_key(&self) -> (MetricKind, usize, Option<usize>, Option<usize>, u32) {
        (
            self.metric,
            self.layer,
            self.node,
            self.input_sample,
            self.network_id,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeStrength {
    pub s_in: f64,
    pub s_out: f64,
    pub s: f64,
}

fn layer_at(spec: &NetworkSpec, layer: usize) -> Result<&Layer> {
    spec.layers.get(layer).ok_or_else(|| {
        Error::structural(format!(
            "layer {layer} out of range for a {}-layer network",
            spec.len()
        ))
    })
}

/// The terms `ω_ij + β_j` averaged by the link-weight statistics.
fn link_terms(layer: &Layer) -> Result<Vec<f64>> {
    match &layer.params {
        LayerParams::Dense { weights, bias } => {
            let mut out = Vec::with_capacity(weights.rows() * weights.cols());
            for i in 0..weights.rows() {
                out.extend(weights.row(i).iter().zip(bias).map(|(w, b)| w + b));
            }
            Ok(out)
        }
        _ => {
            let graph = NetworkSpec::new(alloc::vec![layer.clone()]).lower()?;
            let mut out = Vec::new();
            for g in 0..graph.num_gaps() {
                let bias = graph.dest_bias(g);
                out.extend(graph.edges(g).iter().map(|e| e.weight + bias[e.dst]));
            }
            Ok(out)
        }
    }
}

/// Population mean and variance of `ω_ij + β_j` over every link of a layer.
pub fn link_weight_stats(spec: &NetworkSpec, layer: usize) -> Result<(f64, f64)> {
    let terms = link_terms(layer_at(spec, layer)?)?;
    if terms.is_empty() {
        return Err(Error::structural(format!("layer {layer} has no links")));
    }
    Ok(mean_var(&terms))
}

pub fn link_weight_mean(spec: &NetworkSpec, layer: usize) -> Result<f64> {
    link_weight_stats(spec, layer).map(|(m, _)| m)
}

pub fn link_weight_var(spec: &NetworkSpec, layer: usize) -> Result<f64> {
    link_weight_stats(spec, layer).map(|(_, v)| v)
}

/// Mean and population variance (two-pass).
pub fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

fn check_graph_layer(graph: &LayeredGraph, layer: usize) -> Result<()> {
    if layer >= graph.num_layers() {
        return Err(Error::structural(format!(
            "graph layer {layer} out of range ({} layers)",
            graph.num_layers()
        )));
    }
    Ok(())
}

/// In-, out- and total strength of every node in a graph layer.
pub fn layer_strengths(graph: &LayeredGraph, layer: usize) -> Result<Vec<NodeStrength>> {
    check_graph_layer(graph, layer)?;
    let s_in = graph.in_strengths(layer);
    let s_out = graph.out_strengths(layer);
    Ok(s_in
        .into_iter()
        .zip(s_out)
        .map(|(s_in, s_out)| NodeStrength {
            s_in,
            s_out,
            s: s_in + s_out,
        })
        .collect())
}

pub fn node_strength(graph: &LayeredGraph, layer: usize, node: usize) -> Result<NodeStrength> {
    let all = layer_strengths(graph, layer)?;
    all.get(node).copied().ok_or_else(|| {
        Error::structural(format!(
            "node {node} out of range for graph layer {layer} ({} nodes)",
            all.len()
        ))
    })
}

/// Pre-activation of spec layer `layer` for input `x`.
pub fn neuron_strength(spec: &NetworkSpec, layer: usize, x: &[f64]) -> Result<Vec<f64>> {
    layer_at(spec, layer)?;
    let mut z = x.to_vec();
    for l in &spec.layers[..layer] {
        z = forward_layer(l, &z)?.1;
    }
    layer_pre_activation(&spec.layers[layer], &z)
}

pub fn neuron_activation(spec: &NetworkSpec, layer: usize, x: &[f64]) -> Result<Vec<f64>> {
    let zeta = neuron_strength(spec, layer, x)?;
    Ok(activate(spec.layers[layer].spec.activation, &zeta))
}

/// Root-mean-square deviation of `values` from their mean (divides by the count).
pub fn fluctuation(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    libm::sqrt(mean_var(values).1)
}

/// Fluctuation of the total node strengths of a graph layer.
pub fn layer_fluctuation(graph: &LayeredGraph, layer: usize) -> Result<f64> {
    let s: Vec<f64> = layer_strengths(graph, layer)?.iter().map(|n| n.s).collect();
    Ok(fluctuation(&s))
}

/// `Σ (ω_i / s)²` with `s = Σ ω_i`; `None` when `|s| ≤ epsilon`.
pub fn disparity(weights: &[f64], epsilon: f64) -> Option<f64> {
    let s: f64 = weights.iter().sum();
    if libm::fabs(s) <= epsilon {
        return None;
    }
    Some(weights.iter().map(|w| (w / s) * (w / s)).sum())
}

/// Disparity over the incoming and outgoing edge weights of a node.
pub fn node_disparity(
    graph: &LayeredGraph,
    layer: usize,
    node: usize,
    epsilon: f64,
) -> Result<f64> {
    check_graph_layer(graph, layer)?;
    let incident = graph.incident_weights(layer);
    let weights = incident.get(node).ok_or_else(|| {
        Error::structural(format!("node {node} out of range for graph layer {layer}"))
    })?;
    disparity(weights, epsilon).ok_or(Error::IllConditionedDisparity {
        layer,
        node,
        strength: weights.iter().sum(),
        epsilon,
    })
}

/// Every metric of a network: static ones once, neuron metrics once per input.
///
/// Ill-conditioned disparities are emitted as flagged samples with a NaN value.
/// The result is sorted by `(metric, layer, node, input_sample)`.
pub fn collect<S: AsRef<[f64]>>(
    spec: &NetworkSpec,
    network_id: u32,
    inputs: &[S],
) -> Result<Vec<MetricSample>> {
    let graph = spec.lower()?;
    let mut out = Vec::new();

    for layer in 0..spec.len() {
        let (mean, var) = link_weight_stats(spec, layer)?;
        out.push(MetricSample::new(MetricKind::LinkWeightMean, network_id, layer, mean));
        out.push(MetricSample::new(MetricKind::LinkWeightVar, network_id, layer, var));
    }

    for layer in 0..graph.num_layers() {
        let strengths = layer_strengths(&graph, layer)?;
        let incident = graph.incident_weights(layer);
        for (node, st) in strengths.iter().enumerate() {
            let base = |m, v| MetricSample::new(m, network_id, layer, v).at_node(node);
            out.push(base(MetricKind::NodeStrength, st.s));
            out.push(base(MetricKind::NodeInStrength, st.s_in));
            out.push(base(MetricKind::NodeOutStrength, st.s_out));
            let mut d = base(
                MetricKind::NodeDisparity,
                disparity(&incident[node], DEFAULT_DISPARITY_EPSILON).unwrap_or(f64::NAN),
            );
            d.flagged = d.value.is_nan();
            out.push(d);
        }
        let s: Vec<f64> = strengths.iter().map(|n| n.s).collect();
        out.push(MetricSample::new(
            MetricKind::LayerFluctuation,
            network_id,
            layer,
            fluctuation(&s),
        ));
    }

    for (idx, x) in inputs.iter().enumerate() {
        let mut z = x.as_ref().to_vec();
        for (layer, l) in spec.layers.iter().enumerate() {
            let (zeta, a) = forward_layer(l, &z)?;
            for (node, (&zv, &av)) in zeta.iter().zip(&a).enumerate() {
                out.push(
                    MetricSample::new(MetricKind::NeuronStrength, network_id, layer, zv)
                        .at_node(node)
                        .at_input(idx),
                );
                out.push(
                    MetricSample::new(MetricKind::NeuronActivation, network_id, layer, av)
                        .at_node(node)
                        .at_input(idx),
                );
            }
            z = a;
        }
    }

    out.sort_by_key(|s| s.sort_key());
    Ok(out)
}
