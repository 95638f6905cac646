//! Convolutional and recurrent layers in graph form.
//!
//! A convolution is lowered by patch coupling: every output pixel is joined to the
//! `k × k` input pixels of its patch, each edge carrying the kernel entry that multiplies
//! that pixel. Shared kernel entries therefore appear on many edges.
//!
//! A recurrent cell is unfolded over its horizon `T`. Layer 0 holds all `T·d` inputs.
//! Layer `t ≥ 1` holds the hidden state `h_t` (indices `0..h`) followed by the inputs of
//! the steps still to come, `x_{t+1} .. x_T`, which are carried forward as source-only
//! nodes without incoming edges. Hidden nodes of step `t` receive `W_xh` edges from the
//! block `x_t` and `W_hh` edges from `h_{t-1}`; the last layer is `h_T` alone.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::forward::layer_pre_activation;
use crate::netgraph::{Edge, Layer, LayerKind, LayerParams, LayeredGraph, Matrix};

/// Largest `height · width` accepted by [`toeplitz_oracle`].
pub const TOEPLITZ_MAX_INPUT: usize = 4096;

/// Input pixel and kernel entry (row-major index into `kernel_weights`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tap {
    pub input: usize,
    pub kernel_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub output: usize,
    pub taps: Vec<Tap>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchCoupling {
    pub patches: Vec<Patch>,
    pub kernel_weights: Vec<f64>,
    pub bias: f64,
    pub input_len: usize,
}

fn conv_parts(layer: &Layer) -> Result<(usize, usize, usize, usize, usize, &Matrix, f64)> {
    match (&layer.spec.kind, &layer.params) {
        (
            &LayerKind::Conv2D {
                height,
                width,
                kernel: k,
                stride,
            },
            LayerParams::Conv2D { kernel, bias },
        ) => {
            let (oh, ow) = layer.spec.kind.conv_output().ok_or_else(|| {
                Error::structural(format!(
                    "kernel {k} (stride {stride}) does not fit a {height}x{width} input"
                ))
            })?;
            if kernel.shape() != (k, k) {
                return Err(Error::structural(format!(
                    "kernel parameters are {}x{}, expected {k}x{k}",
                    kernel.rows(),
                    kernel.cols()
                )));
            }
            Ok((height, width, k, oh, ow, kernel, *bias))
        }
        (kind, _) => Err(Error::structural(format!(
            "expected a conv2d layer, got {}",
            kind.name()
        ))),
    }
}

/// Enumerates the input patch of every output pixel.
pub fn patch_coupling(layer: &Layer) -> Result<PatchCoupling> {
    let (height, width, k, oh, ow, kernel, bias) = conv_parts(layer)?;
    let stride = match layer.spec.kind {
        LayerKind::Conv2D { stride, .. } => stride,
        _ => unreachable!(),
    };
    let mut patches = Vec::with_capacity(oh * ow);
    for r in 0..oh {
        for c in 0..ow {
            let mut taps = Vec::with_capacity(k * k);
            for a in 0..k {
                for b in 0..k {
                    taps.push(Tap {
                        input: (r * stride + a) * width + c * stride + b,
                        kernel_index: a * k + b,
                    });
                }
            }
            patches.push(Patch {
                output: r * ow + c,
                taps,
            });
        }
    }
    Ok(PatchCoupling {
        patches,
        kernel_weights: kernel.as_slice().to_vec(),
        bias,
        input_len: height * width,
    })
}

impl PatchCoupling {
    pub fn to_graph(&self) -> Result<LayeredGraph> {
        let mut edges = Vec::with_capacity(self.patches.len() * self.kernel_weights.len());
        for p in &self.patches {
            for t in &p.taps {
                edges.push(Edge {
                    src: t.input,
                    dst: p.output,
                    weight: self.kernel_weights[t.kernel_index],
                });
            }
        }
        LayeredGraph::new(
            vec![self.input_len, self.patches.len()],
            vec![edges],
            vec![vec![self.bias; self.patches.len()]],
        )
    }
}

/// One node per input pixel and per output pixel; edges from patch coupling.
pub fn lower_conv(layer: &Layer) -> Result<LayeredGraph> {
    patch_coupling(layer)?.to_graph()
}

/// Reference matrix `M` with `flatten(conv(z)) - bias = flatten(z) · M`.
///
/// Built by convolving every unit input with a bias-free copy of the layer, so it does
/// not share code with [`patch_coupling`]. Quadratic in the input size; refuses inputs
/// larger than [`TOEPLITZ_MAX_INPUT`] pixels.
pub fn toeplitz_oracle(layer: &Layer) -> Result<Matrix> {
    let (height, width, _, oh, ow, kernel, _) = conv_parts(layer)?;
    let n_in = height * width;
    if n_in > TOEPLITZ_MAX_INPUT {
        return Err(Error::parameter(format!(
            "Toeplitz matrix refused: {n_in} input pixels exceeds {TOEPLITZ_MAX_INPUT}"
        )));
    }
    let probe = Layer {
        spec: layer.spec,
        params: LayerParams::Conv2D {
            kernel: kernel.clone(),
            bias: 0.0,
        },
    };
    let mut m = Matrix::zeros(n_in, oh * ow);
    let mut unit = vec![0.0; n_in];
    for i in 0..n_in {
        unit[i] = 1.0;
        let col = layer_pre_activation(&probe, &unit)?;
        for (o, v) in col.into_iter().enumerate() {
            m.set(i, o, v);
        }
        unit[i] = 0.0;
    }
    Ok(m)
}

/// The convolution as an equivalent dense layer built from [`toeplitz_oracle`].
pub fn toeplitz_dense_layer(layer: &Layer) -> Result<Layer> {
    let (_, _, _, oh, ow, _, bias) = conv_parts(layer)?;
    let m = toeplitz_oracle(layer)?;
    Ok(Layer::dense(m, vec![bias; oh * ow], layer.spec.activation))
}

/// Unfolds a recurrent layer over its horizon (layout described in the module docs).
pub fn lower_recurrent(layer: &Layer) -> Result<LayeredGraph> {
    let (d, h, horizon, w_xh, w_hh, bias) = match (&layer.spec.kind, &layer.params) {
        (
            &LayerKind::Recurrent {
                input_dim,
                hidden_dim,
                horizon,
            },
            LayerParams::Recurrent { w_xh, w_hh, bias },
        ) => (input_dim, hidden_dim, horizon, w_xh, w_hh, bias),
        (kind, _) => {
            return Err(Error::structural(format!(
                "expected a recurrent layer, got {}",
                kind.name()
            )))
        }
    };
    if horizon == 0 {
        return Err(Error::structural("recurrent horizon must be at least 1"));
    }
    if w_xh.shape() != (d, h) || w_hh.shape() != (h, h) || bias.len() != h {
        return Err(Error::structural(format!(
            "recurrent d={d} h={h}: parameter shapes do not match"
        )));
    }

    let mut sizes = Vec::with_capacity(horizon + 1);
    sizes.push(horizon * d);
    for t in 1..=horizon {
        sizes.push(h + (horizon - t) * d);
    }

    let mut edges = Vec::with_capacity(horizon);
    let mut dest_bias = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        // Position of x_t inside layer t-1.
        let x_offset = if t == 1 { 0 } else { h };
        let mut gap = Vec::with_capacity(d * h + if t > 1 { h * h } else { 0 });
        for i in 0..d {
            for (j, &w) in w_xh.row(i).iter().enumerate() {
                gap.push(Edge {
                    src: x_offset + i,
                    dst: j,
                    weight: w,
                });
            }
        }
        if t > 1 {
            for i in 0..h {
                for (j, &w) in w_hh.row(i).iter().enumerate() {
                    gap.push(Edge {
                        src: i,
                        dst: j,
                        weight: w,
                    });
                }
            }
        }
        edges.push(gap);
        let mut b = vec![0.0; sizes[t]];
        b[..h].copy_from_slice(bias);
        dest_bias.push(b);
    }
    LayeredGraph::new(sizes, edges, dest_bias)
}
