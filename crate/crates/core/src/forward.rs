//! Forward pass in 64-bit arithmetic.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::netgraph::{ActivationKind, Layer, LayerKind, LayerParams, NetworkSpec};

/// Pre-activation `z` and activation `f(z)` of every layer, in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub pre_activation: Vec<Vec<f64>>,
    pub activation: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.activation.last().map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.activation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.activation.is_empty()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Elementwise for linear/ReLU/sigmoid, vector-wise (max-shifted) for softmax.
pub fn activate(kind: ActivationKind, z: &[f64]) -> Vec<f64> {
    let mut out = z.to_vec();
    activate_in_place(kind, &mut out);
    out
}

pub fn activate_in_place(kind: ActivationKind, z: &mut [f64]) {
    match kind {
        ActivationKind::Linear => {}
        ActivationKind::Relu => z.iter_mut().for_each(|v| *v = v.max(0.0)),
        ActivationKind::Sigmoid => z.iter_mut().for_each(|v| *v = sigmoid(*v)),
        ActivationKind::Softmax => {
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in z.iter_mut() {
                *v = libm::exp(*v - max);
                sum += *v;
            }
            z.iter_mut().for_each(|v| *v /= sum);
        }
    }
}

/// Pre-activation of a single layer for input `x`.
pub fn layer_pre_activation(layer: &Layer, x: &[f64]) -> Result<Vec<f64>> {
    let in_dim = layer.spec.in_dim();
    if x.len() != in_dim {
        return Err(Error::structural(format!(
            "{} layer expects {in_dim} inputs, got {}",
            layer.spec.kind.name(),
            x.len()
        )));
    }
    match (&layer.spec.kind, &layer.params) {
        (LayerKind::Dense { .. }, LayerParams::Dense { weights, bias }) => {
            let mut z = weights.vec_mul(x);
            z.iter_mut().zip(bias).for_each(|(z, b)| *z += b);
            Ok(z)
        }
        (
            &LayerKind::Conv2D {
                width,
                kernel: k,
                stride,
                ..
            },
            LayerParams::Conv2D { kernel, bias },
        ) => {
            let (oh, ow) = layer
                .spec
                .kind
                .conv_output()
                .ok_or_else(|| Error::structural("kernel larger than input"))?;
            let mut z = vec![*bias; oh * ow];
            for r in 0..oh {
                for c in 0..ow {
                    let mut acc = 0.0;
                    for a in 0..k {
                        let row = (r * stride + a) * width + c * stride;
                        for b in 0..k {
                            acc += x[row + b] * kernel.get(a, b);
                        }
                    }
                    z[r * ow + c] += acc;
                }
            }
            Ok(z)
        }
        (
            &LayerKind::Recurrent {
                input_dim,
                hidden_dim,
                horizon,
            },
            LayerParams::Recurrent { w_xh, w_hh, bias },
        ) => {
            let mut h = vec![0.0; hidden_dim];
            let mut z = Vec::new();
            for t in 0..horizon {
                z = w_xh.vec_mul(&x[t * input_dim..(t + 1) * input_dim]);
                for ((zi, r), b) in z.iter_mut().zip(w_hh.vec_mul(&h)).zip(bias) {
                    *zi += r + b;
                }
                h = activate(layer.spec.activation, &z);
            }
            Ok(z)
        }
        (kind, _) => Err(Error::structural(format!(
            "{} layer carries mismatched parameters",
            kind.name()
        ))),
    }
}

/// `(z, f(z))` of a single layer.
pub fn forward_layer(layer: &Layer, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let z = layer_pre_activation(layer, x)?;
    let a = activate(layer.spec.activation, &z);
    Ok((z, a))
}

pub fn forward(x: &[f64], spec: &NetworkSpec) -> Result<ForwardTrace> {
    let mut trace = ForwardTrace {
        pre_activation: Vec::with_capacity(spec.len()),
        activation: Vec::with_capacity(spec.len()),
    };
    let mut current: &[f64] = x;
    for layer in &spec.layers {
        let (z, a) = forward_layer(layer, current)?;
        trace.pre_activation.push(z);
        trace.activation.push(a);
        current = trace.activation.last().map(Vec::as_slice).unwrap_or(&[]);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::{LayerSpec, Matrix};
    use approx::assert_abs_diff_eq;

    fn identity_net(act: ActivationKind) -> NetworkSpec {
        NetworkSpec::new(vec![Layer::dense(Matrix::identity(2), vec![0.0; 2], act)])
    }

    #[test]
    fn identity_linear() {
        let t = forward(&[0.3, -0.7], &identity_net(ActivationKind::Linear)).unwrap();
        assert_eq!(t.output(), &[0.3, -0.7]);
    }

    #[test]
    fn identity_sigmoid_at_zero() {
        let t = forward(&[0.0, 0.0], &identity_net(ActivationKind::Sigmoid)).unwrap();
        assert_eq!(t.output(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_symmetric() {
        let t = forward(&[0.0, 0.0], &identity_net(ActivationKind::Softmax)).unwrap();
        assert_eq!(t.output(), &[0.5, 0.5]);
        assert_eq!(activate(ActivationKind::Softmax, &[1000.0, 1000.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn dense_pre_activation_by_hand() {
        let spec = NetworkSpec::new(vec![Layer::dense_rows(
            &[[1.0, 2.0], [3.0, 4.0]],
            ActivationKind::Linear,
        )]);
        let t = forward(&[1.0, 1.0], &spec).unwrap();
        assert_eq!(t.pre_activation[0], vec![4.0, 6.0]);
    }

    #[test]
    fn activation_values() {
        assert_eq!(activate(ActivationKind::Relu, &[-3.0, 2.0]), vec![0.0, 2.0]);
        assert_abs_diff_eq!(
            activate(ActivationKind::Sigmoid, &[4.0])[0],
            0.982_013_790_037_908_4,
            epsilon = 1e-9
        );
    }

    #[test]
    fn dimension_mismatch_is_structural() {
        let err = forward(&[1.0], &identity_net(ActivationKind::Linear)).unwrap_err();
        assert!(matches!(err, Error::Structural(_)));
    }

    #[test]
    fn conv_direct_by_hand() {
        // 3x3 input 1..9, 2x2 kernel of ones: each output sums one 2x2 window.
        let layer = Layer {
            spec: LayerSpec::conv2d(3, 3, 2, 1, ActivationKind::Linear),
            params: LayerParams::Conv2D {
                kernel: Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]),
                bias: 0.5,
            },
        };
        let x: Vec<f64> = (1..=9).map(f64::from).collect();
        let z = layer_pre_activation(&layer, &x).unwrap();
        assert_eq!(z, vec![12.5, 16.5, 24.5, 28.5]);
    }

    #[test]
    fn recurrent_two_steps_by_hand() {
        let layer = Layer {
            spec: LayerSpec::recurrent(1, 1, 2, ActivationKind::Linear),
            params: LayerParams::Recurrent {
                w_xh: Matrix::from_rows(&[[2.0]]),
                w_hh: Matrix::from_rows(&[[3.0]]),
                bias: vec![1.0],
            },
        };
        // h1 = 2*1 + 1 = 3; h2 = 2*5 + 3*3 + 1 = 20
        let z = layer_pre_activation(&layer, &[1.0, 5.0]).unwrap();
        assert_eq!(z, vec![20.0]);
    }
}
