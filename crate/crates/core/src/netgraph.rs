//! Networks as layered directed graphs.
//!
//! A [`NetworkSpec`] is the layer-by-layer description of a network together with its
//! parameters. [`LayeredGraph`] is the graph view every static metric is computed on:
//! nodes grouped by layer, weighted edges only between consecutive layers, and one bias
//! per destination node.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::lowering;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActivationKind {
    Linear,
    Relu,
    Sigmoid,
    Softmax,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 4] = [
        ActivationKind::Linear,
        ActivationKind::Relu,
        ActivationKind::Sigmoid,
        ActivationKind::Softmax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Linear => "linear",
            ActivationKind::Relu => "relu",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Softmax => "softmax",
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" | "identity" => Ok(ActivationKind::Linear),
            "relu" => Ok(ActivationKind::Relu),
            "sigmoid" => Ok(ActivationKind::Sigmoid),
            "softmax" => Ok(ActivationKind::Softmax),
            other => Err(Error::parameter(format!("unknown activation `{other}`"))),
        }
    }
}

/// Shape of a single layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Dense {
        in_dim: usize,
        out_dim: usize,
    },
    /// Single-channel, single-kernel valid convolution over a `height × width` input.
    Conv2D {
        height: usize,
        width: usize,
        kernel: usize,
        stride: usize,
    },
    /// Simple recurrent cell unrolled over `horizon` steps. The layer input is the
    /// concatenation of the `horizon` input vectors; the output is the last hidden state.
    Recurrent {
        input_dim: usize,
        hidden_dim: usize,
        horizon: usize,
    },
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Dense { .. } => "dense",
            LayerKind::Conv2D { .. } => "conv2d",
            LayerKind::Recurrent { .. } => "recurrent",
        }
    }

    /// `(out_height, out_width)` of a convolution, `None` if the kernel does not fit.
    pub fn conv_output(&self) -> Option<(usize, usize)> {
        match *self {
            LayerKind::Conv2D {
                height,
                width,
                kernel,
                stride,
            } => {
                if kernel == 0 || stride == 0 || kernel > height || kernel > width {
                    return None;
                }
                Some(((height - kernel) / stride + 1, (width - kernel) / stride + 1))
            }
            _ => None,
        }
    }

    pub fn in_dim(&self) -> usize {
        match *self {
            LayerKind::Dense { in_dim, .. } => in_dim,
            LayerKind::Conv2D { height, width, .. } => height.saturating_mul(width),
            LayerKind::Recurrent {
                input_dim, horizon, ..
            } => input_dim.saturating_mul(horizon),
        }
    }

    pub fn out_dim(&self) -> usize {
        match *self {
            LayerKind::Dense { out_dim, .. } => out_dim,
            LayerKind::Conv2D { .. } => self.conv_output().map_or(0, |(h, w)| h.saturating_mul(w)),
            LayerKind::Recurrent { hidden_dim, .. } => hidden_dim,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub activation: ActivationKind,
}

impl LayerSpec {
    pub fn dense(in_dim: usize, out_dim: usize, activation: ActivationKind) -> Self {
        LayerSpec {
            kind: LayerKind::Dense { in_dim, out_dim },
            activation,
        }
    }

    pub fn conv2d(
        height: usize,
        width: usize,
        kernel: usize,
        stride: usize,
        activation: ActivationKind,
    ) -> Self {
        LayerSpec {
            kind: LayerKind::Conv2D {
                height,
                width,
                kernel,
                stride,
            },
            activation,
        }
    }

    pub fn recurrent(
        input_dim: usize,
        hidden_dim: usize,
        horizon: usize,
        activation: ActivationKind,
    ) -> Self {
        LayerSpec {
            kind: LayerKind::Recurrent {
                input_dim,
                hidden_dim,
                horizon,
            },
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.kind.in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.kind.out_dim()
    }
}

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(Error::structural(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows.saturating_mul(cols),
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from nested rows; panics on ragged input (test convenience).
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// `x · M` for a row vector `x` of length `rows`.
    pub fn vec_mul(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(self.row(i)) {
                *o += xi * w;
            }
        }
        out
    }
}

/// Parameters of one layer; the variant must agree with the layer's [`LayerKind`].
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    /// `weights` is `in_dim × out_dim` with the source neuron as row; `bias` has `out_dim` entries.
    Dense { weights: Matrix, bias: Vec<f64> },
    /// `kernel` is `k × k`; one bias shared by every output pixel.
    Conv2D { kernel: Matrix, bias: f64 },
    /// `w_xh` is `input_dim × hidden_dim`, `w_hh` is `hidden_dim × hidden_dim`.
    Recurrent {
        w_xh: Matrix,
        w_hh: Matrix,
        bias: Vec<f64>,
    },
}

impl LayerParams {
    /// All parameter values in storage order: weights then bias.
    pub fn values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        match self {
            LayerParams::Dense { weights, bias } => {
                out.extend_from_slice(weights.as_slice());
                out.extend_from_slice(bias);
            }
            LayerParams::Conv2D { kernel, bias } => {
                out.extend_from_slice(kernel.as_slice());
                out.push(*bias);
            }
            LayerParams::Recurrent { w_xh, w_hh, bias } => {
                out.extend_from_slice(w_xh.as_slice());
                out.extend_from_slice(w_hh.as_slice());
                out.extend_from_slice(bias);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub params: LayerParams,
}

impl Layer {
    pub fn dense(weights: Matrix, bias: Vec<f64>, activation: ActivationKind) -> Self {
        Layer {
            spec: LayerSpec::dense(weights.rows(), weights.cols(), activation),
            params: LayerParams::Dense { weights, bias },
        }
    }

    /// Dense layer with zero bias from nested rows.
    pub fn dense_rows<R: AsRef<[f64]>>(rows: &[R], activation: ActivationKind) -> Self {
        let w = Matrix::from_rows(rows);
        let bias = vec![0.0; w.cols()];
        Layer::dense(w, bias, activation)
    }
}

/// Ordered layers plus their parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub layers: Vec<Layer>,
}

/// Which invariant a [`Violation`] breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    EmptyNetwork,
    NonPositiveDimension,
    KernelTooLarge,
    ParameterShape,
    Chaining,
    NonFinite,
    SoftmaxNotFinal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub layer: usize,
    pub rule: Rule,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "layer {}: {:?}: {}", self.layer, self.rule, self.detail)
    }
}

impl NetworkSpec {
    pub fn new(layers: Vec<Layer>) -> Self {
        NetworkSpec { layers }
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.spec.in_dim())
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.spec.out_dim())
    }

    pub fn architecture(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.params.values().len()).sum()
    }

    pub fn is_dense(&self) -> bool {
        self.layers
            .iter()
            .all(|l| matches!(l.spec.kind, LayerKind::Dense { .. }))
    }

    /// Checks every invariant and reports each broken one; an empty list means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |layer: usize, rule: Rule, detail: String| {
            out.push(Violation {
                layer,
                rule,
                detail,
            })
        };
        if self.layers.is_empty() {
            push(0, Rule::EmptyNetwork, String::from("network has no layers"));
        }
        let last = self.layers.len().saturating_sub(1);
        for (idx, layer) in self.layers.iter().enumerate() {
            let spec = &layer.spec;
            match spec.kind {
                LayerKind::Dense { in_dim, out_dim } => {
                    if in_dim == 0 || out_dim == 0 {
                        push(idx, Rule::NonPositiveDimension, format!("dense {in_dim}->{out_dim}"));
                    }
                }
                LayerKind::Conv2D {
                    height,
                    width,
                    kernel,
                    stride,
                } => {
                    if height == 0 || width == 0 || kernel == 0 || stride == 0 {
                        push(
                            idx,
                            Rule::NonPositiveDimension,
                            format!("conv2d {height}x{width} k={kernel} stride={stride}"),
                        );
                    } else if kernel > height || kernel > width {
                        push(
                            idx,
                            Rule::KernelTooLarge,
                            format!("kernel {kernel} exceeds input {height}x{width}"),
                        );
                    }
                }
                LayerKind::Recurrent {
                    input_dim,
                    hidden_dim,
                    horizon,
                } => {
                    if input_dim == 0 || hidden_dim == 0 || horizon == 0 {
                        push(
                            idx,
                            Rule::NonPositiveDimension,
                            format!("recurrent d={input_dim} h={hidden_dim} T={horizon}"),
                        );
                    }
                }
            }
            if let Some(msg) = param_shape_mismatch(spec, &layer.params) {
                push(idx, Rule::ParameterShape, msg);
            }
            if layer.params.values().iter().any(|v| !v.is_finite()) {
                push(idx, Rule::NonFinite, String::from("parameter is NaN or infinite"));
            }
            if spec.activation == ActivationKind::Softmax && idx != last {
                push(
                    idx,
                    Rule::SoftmaxNotFinal,
                    String::from("softmax is only allowed on the final layer"),
                );
            }
        }
        for (idx, pair) in self.layers.windows(2).enumerate() {
            let (a, b) = (pair[0].spec.out_dim(), pair[1].spec.in_dim());
            if a != b {
                push(
                    idx,
                    Rule::Chaining,
                    format!(
                        "layer {idx} outputs {a} values but layer {} expects {b}",
                        idx + 1
                    ),
                );
            }
        }
        out
    }

    /// `Err` carrying the first violation, if any.
    pub fn check(&self) -> Result<()> {
        match self.validate().into_iter().next() {
            None => Ok(()),
            Some(v) => Err(Error::structural(format!("{v}"))),
        }
    }

    /// Lowers every layer (dense, convolutional and recurrent) and chains the results.
    pub fn lower(&self) -> Result<LayeredGraph> {
        self.check()?;
        let mut graph: Option<LayeredGraph> = None;
        for layer in &self.layers {
            let part = lower_layer(layer)?;
            graph = Some(match graph {
                None => part,
                Some(g) => g.chain(part)?,
            });
        }
        graph.ok_or_else(|| Error::structural("network has no layers"))
    }
}

fn param_shape_mismatch(spec: &LayerSpec, params: &LayerParams) -> Option<String> {
    match (spec.kind, params) {
        (LayerKind::Dense { in_dim, out_dim }, LayerParams::Dense { weights, bias }) => {
            if weights.shape() != (in_dim, out_dim) || bias.len() != out_dim {
                return Some(format!(
                    "dense {in_dim}->{out_dim} has weights {}x{} and bias {}",
                    weights.rows(),
                    weights.cols(),
                    bias.len()
                ));
            }
            None
        }
        (LayerKind::Conv2D { kernel, .. }, LayerParams::Conv2D { kernel: k, .. }) => {
            if k.shape() != (kernel, kernel) {
                return Some(format!(
                    "conv2d kernel {kernel} has parameters {}x{}",
                    k.rows(),
                    k.cols()
                ));
            }
            None
        }
        (
            LayerKind::Recurrent {
                input_dim,
                hidden_dim,
                ..
            },
            LayerParams::Recurrent { w_xh, w_hh, bias },
        ) => {
            if w_xh.shape() != (input_dim, hidden_dim)
                || w_hh.shape() != (hidden_dim, hidden_dim)
                || bias.len() != hidden_dim
            {
                return Some(format!(
                    "recurrent d={input_dim} h={hidden_dim} has W_xh {}x{}, W_hh {}x{}, bias {}",
                    w_xh.rows(),
                    w_xh.cols(),
                    w_hh.rows(),
                    w_hh.cols(),
                    bias.len()
                ));
            }
            None
        }
        (kind, _) => Some(format!("{} layer carries mismatched parameters", kind.name())),
    }
}

fn lower_layer(layer: &Layer) -> Result<LayeredGraph> {
    match (&layer.spec.kind, &layer.params) {
        (LayerKind::Dense { .. }, LayerParams::Dense { weights, bias }) => {
            Ok(dense_graph(weights, bias))
        }
        (LayerKind::Conv2D { .. }, LayerParams::Conv2D { .. }) => lowering::lower_conv(layer),
        (LayerKind::Recurrent { .. }, LayerParams::Recurrent { .. }) => {
            lowering::lower_recurrent(layer)
        }
        (kind, _) => Err(Error::structural(format!(
            "{} layer carries mismatched parameters",
            kind.name()
        ))),
    }
}

fn dense_graph(weights: &Matrix, bias: &[f64]) -> LayeredGraph {
    let mut edges = Vec::with_capacity(weights.rows() * weights.cols());
    for i in 0..weights.rows() {
        for (j, &w) in weights.row(i).iter().enumerate() {
            edges.push(Edge {
                src: i,
                dst: j,
                weight: w,
            });
        }
    }
    LayeredGraph {
        layer_sizes: vec![weights.rows(), weights.cols()],
        edges: vec![edges],
        dest_bias: vec![bias.to_vec()],
    }
}

/// One node per neuron, one edge per weight-matrix entry, bias copied per destination.
/// Only dense layers are accepted; see [`NetworkSpec::lower`] for the general case.
pub fn lower_dense(spec: &NetworkSpec) -> Result<LayeredGraph> {
    if let Some(idx) = spec
        .layers
        .iter()
        .position(|l| !matches!(l.spec.kind, LayerKind::Dense { .. }))
    {
        return Err(Error::structural(format!(
            "layer {idx} is {}, lower_dense needs dense layers only",
            spec.layers[idx].spec.kind.name()
        )));
    }
    spec.lower()
}

/// `(layer, index within layer)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    pub layer: usize,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
}

/// Directed weighted graph whose edges only join consecutive layers.
///
/// `edges[g]` and `dest_bias[g]` describe the gap between layer `g` and layer `g + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredGraph {
    layer_sizes: Vec<usize>,
    edges: Vec<Vec<Edge>>,
    dest_bias: Vec<Vec<f64>>,
}

impl LayeredGraph {
    pub fn new(
        layer_sizes: Vec<usize>,
        edges: Vec<Vec<Edge>>,
        dest_bias: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if layer_sizes.is_empty() {
            return Err(Error::structural("graph needs at least one layer"));
        }
        let gaps = layer_sizes.len() - 1;
        if edges.len() != gaps || dest_bias.len() != gaps {
            return Err(Error::structural(format!(
                "{} layers need {gaps} edge lists and bias vectors, got {} and {}",
                layer_sizes.len(),
                edges.len(),
                dest_bias.len()
            )));
        }
        for g in 0..gaps {
            let (n_src, n_dst) = (layer_sizes[g], layer_sizes[g + 1]);
            if dest_bias[g].len() != n_dst {
                return Err(Error::structural(format!(
                    "gap {g}: bias has {} entries for {n_dst} destination nodes",
                    dest_bias[g].len()
                )));
            }
            if let Some(e) = edges[g].iter().find(|e| e.src >= n_src || e.dst >= n_dst) {
                return Err(Error::structural(format!(
                    "gap {g}: edge ({}, {}) outside {n_src}x{n_dst}",
                    e.src, e.dst
                )));
            }
        }
        Ok(LayeredGraph {
            layer_sizes,
            edges,
            dest_bias,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len()
    }

    pub fn num_gaps(&self) -> usize {
        self.edges.len()
    }

    pub fn node_count(&self) -> usize {
        self.layer_sizes.iter().sum()
    }

    pub fn edge_counts(&self) -> Vec<usize> {
        self.edges.iter().map(Vec::len).collect()
    }

    pub fn edges(&self, gap: usize) -> &[Edge] {
        &self.edges[gap]
    }

    pub fn dest_bias(&self, gap: usize) -> &[f64] {
        &self.dest_bias[gap]
    }

    /// Flat id of a node: nodes of earlier layers come first.
    pub fn flat_id(&self, node: NodeId) -> usize {
        self.layer_sizes[..node.layer].iter().sum::<usize>() + node.index
    }

    /// Sum of incoming weights plus the node's bias (counted once); zero on the input layer.
    pub fn in_strengths(&self, layer: usize) -> Vec<f64> {
        if layer == 0 {
            return vec![0.0; self.layer_sizes[0]];
        }
        let mut s = self.dest_bias[layer - 1].clone();
        for e in &self.edges[layer - 1] {
            s[e.dst] += e.weight;
        }
        s
    }

    /// Sum of outgoing weights; zero on the output layer.
    pub fn out_strengths(&self, layer: usize) -> Vec<f64> {
        let mut s = vec![0.0; self.layer_sizes[layer]];
        if layer < self.edges.len() {
            for e in &self.edges[layer] {
                s[e.src] += e.weight;
            }
        }
        s
    }

    /// Incoming and outgoing edge weights of every node of `layer`.
    pub fn incident_weights(&self, layer: usize) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.layer_sizes[layer]];
        if layer > 0 {
            for e in &self.edges[layer - 1] {
                out[e.dst].push(e.weight);
            }
        }
        if layer < self.edges.len() {
            for e in &self.edges[layer] {
                out[e.src].push(e.weight);
            }
        }
        out
    }

    /// `z · W + b` across one gap, where `z` holds values of the source layer.
    pub fn propagate(&self, gap: usize, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.layer_sizes[gap] {
            return Err(Error::structural(format!(
                "gap {gap}: input has {} values, layer has {} nodes",
                z.len(),
                self.layer_sizes[gap]
            )));
        }
        let mut out = self.dest_bias[gap].clone();
        for e in &self.edges[gap] {
            out[e.dst] += z[e.src] * e.weight;
        }
        Ok(out)
    }

    /// Dense `N[g] × N[g+1]` weight matrix of a gap, summing parallel edges.
    pub fn weight_matrix(&self, gap: usize) -> Matrix {
        let mut m = Matrix::zeros(self.layer_sizes[gap], self.layer_sizes[gap + 1]);
        for e in &self.edges[gap] {
            let v = m.get(e.src, e.dst) + e.weight;
            m.set(e.src, e.dst, v);
        }
        m
    }

    /// Appends `next`, whose input layer must coincide with this graph's output layer.
    pub fn chain(mut self, next: LayeredGraph) -> Result<LayeredGraph> {
        let last = *self.layer_sizes.last().unwrap_or(&0);
        if next.layer_sizes[0] != last {
            return Err(Error::structural(format!(
                "cannot chain: output layer has {last} nodes, next input layer has {}",
                next.layer_sizes[0]
            )));
        }
        self.layer_sizes.extend_from_slice(&next.layer_sizes[1..]);
        self.edges.extend(next.edges);
        self.dest_bias.extend(next.dest_bias);
        Ok(self)
    }
}
