//! Gaussian initialization, backpropagation and plain minibatch SGD for dense networks.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::forward::{activate_in_place, forward};
use crate::metrics::{collect, MetricSample};
use crate::netgraph::{
    ActivationKind, Layer, LayerKind, LayerParams, LayerSpec, Matrix, NetworkSpec,
};
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Classification,
    Reconstruction,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Classification => "classification",
            Task::Reconstruction => "reconstruction",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// `-(1/B) Σ_b Σ_k y_k ln a_k`.
    CrossEntropy,
    /// `(1/B) Σ_b (1/m) Σ_k (a_k - y_k)²`.
    Mse,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub task: Task,
    pub loss: LossKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Variance `σ²` of the Gaussian the weights are drawn from.
    pub init_variance: f64,
    pub seed: u64,
    /// Record a static-metric snapshot after every epoch, not just initial and final.
    pub snapshot_every_epoch: bool,
}

impl TrainConfig {
    /// Defaults that reach ≥ 90 % test accuracy with sigmoid FC nets on 8000 MNIST digits.
    pub fn classification(init_variance: f64, seed: u64) -> Self {
        TrainConfig {
            task: Task::Classification,
            loss: LossKind::CrossEntropy,
            learning_rate: 0.5,
            batch_size: 32,
            epochs: 30,
            init_variance,
            seed,
            snapshot_every_epoch: false,
        }
    }

    pub fn reconstruction(init_variance: f64, seed: u64) -> Self {
        TrainConfig {
            task: Task::Reconstruction,
            loss: LossKind::Mse,
            ..TrainConfig::classification(init_variance, seed)
        }
    }

    /// Checks the numeric fields and the task/loss/output pairing against `arch`.
    pub fn validate(&self, arch: &[LayerSpec]) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::parameter(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::parameter("batch size must be at least 1"));
        }
        if !(self.init_variance > 0.0 && self.init_variance.is_finite()) {
            return Err(Error::parameter(format!(
                "init variance must be positive, got {}",
                self.init_variance
            )));
        }
        let output = arch.last().map(|l| l.activation);
        match self.task {
            Task::Classification => {
                if self.loss != LossKind::CrossEntropy || output != Some(ActivationKind::Softmax) {
                    return Err(Error::parameter(
                        "classification needs cross-entropy loss and a softmax output layer",
                    ));
                }
            }
            Task::Reconstruction => {
                if self.loss != LossKind::Mse {
                    return Err(Error::parameter("reconstruction needs MSE loss"));
                }
            }
        }
        Ok(())
    }
}

/// Row-major inputs and targets; `labels` is set for classification data.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    input_dim: usize,
    target_dim: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
    labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(
        input_dim: usize,
        inputs: Vec<f64>,
        target_dim: usize,
        targets: Vec<f64>,
    ) -> Result<Self> {
        if input_dim == 0 || !inputs.len().is_multiple_of(input_dim) {
            return Err(Error::structural(format!(
                "{} input values do not split into rows of {input_dim}",
                inputs.len()
            )));
        }
        let n = inputs.len() / input_dim;
        if target_dim == 0 || targets.len() != n * target_dim {
            return Err(Error::structural(format!(
                "{n} samples need {} target values, got {}",
                n * target_dim,
                targets.len()
            )));
        }
        Ok(Dataset {
            input_dim,
            target_dim,
            inputs,
            targets,
            labels: None,
        })
    }

    /// One-hot targets from class labels.
    pub fn classification(
        input_dim: usize,
        inputs: Vec<f64>,
        labels: Vec<usize>,
        classes: usize,
    ) -> Result<Self> {
        if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::parameter(format!("label {bad} outside {classes} classes")));
        }
        let mut targets = vec![0.0; labels.len() * classes];
        for (i, &l) in labels.iter().enumerate() {
            targets[i * classes + l] = 1.0;
        }
        let mut d = Dataset::new(input_dim, inputs, classes, targets)?;
        d.labels = Some(labels);
        Ok(d)
    }

    /// Targets equal to the inputs.
    pub fn reconstruction(input_dim: usize, inputs: Vec<f64>) -> Result<Self> {
        let targets = inputs.clone();
        Dataset::new(input_dim, inputs, input_dim, targets)
    }

    pub fn len(&self) -> usize {
        self.inputs.len() / self.input_dim
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn target_dim(&self) -> usize {
        self.target_dim
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.target_dim..(i + 1) * self.target_dim]
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Rows `start..end` as a new dataset.
    pub fn slice(&self, start: usize, end: usize) -> Dataset {
        Dataset {
            input_dim: self.input_dim,
            target_dim: self.target_dim,
            inputs: self.inputs[start * self.input_dim..end * self.input_dim].to_vec(),
            targets: self.targets[start * self.target_dim..end * self.target_dim].to_vec(),
            labels: self.labels.as_ref().map(|l| l[start..end].to_vec()),
        }
    }
}

fn draw_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, n: &Normal<f64>, rng: &mut R) -> Matrix {
    let data = (0..rows * cols).map(|_| n.sample(rng)).collect();
    Matrix::new(rows, cols, data).expect("shape matches by construction")
}

/// Every weight i.i.d. `N(0, variance)`, every bias zero.
pub fn init_gaussian_with<R: Rng + ?Sized>(
    arch: &[LayerSpec],
    variance: f64,
    rng: &mut R,
) -> Result<NetworkSpec> {
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::parameter(format!("variance must be positive, got {variance}")));
    }
    let normal = Normal::new(0.0, libm::sqrt(variance))
        .map_err(|e| Error::parameter(format!("{e}")))?;
    let layers = arch
        .iter()
        .map(|spec| {
            let params = match spec.kind {
                LayerKind::Dense { in_dim, out_dim } => LayerParams::Dense {
                    weights: draw_matrix(in_dim, out_dim, &normal, rng),
                    bias: vec![0.0; out_dim],
                },
                LayerKind::Conv2D { kernel, .. } => LayerParams::Conv2D {
                    kernel: draw_matrix(kernel, kernel, &normal, rng),
                    bias: 0.0,
                },
                LayerKind::Recurrent {
                    input_dim,
                    hidden_dim,
                    ..
                } => LayerParams::Recurrent {
                    w_xh: draw_matrix(input_dim, hidden_dim, &normal, rng),
                    w_hh: draw_matrix(hidden_dim, hidden_dim, &normal, rng),
                    bias: vec![0.0; hidden_dim],
                },
            };
            Layer {
                spec: *spec,
                params,
            }
        })
        .collect();
    let spec = NetworkSpec::new(layers);
    spec.check()?;
    Ok(spec)
}

pub fn init_gaussian(arch: &[LayerSpec], variance: f64, seed: u64) -> Result<NetworkSpec> {
    init_gaussian_with(arch, variance, &mut stream_rng(seed, 0))
}

/// Per-layer `(dL/dΩ, dL/dβ)`.
pub type Gradients = Vec<(Matrix, Vec<f64>)>;

fn dense_parts(spec: &NetworkSpec) -> Result<Vec<(&Matrix, &[f64], ActivationKind)>> {
    spec.layers
        .iter()
        .enumerate()
        .map(|(i, l)| match &l.params {
            LayerParams::Dense { weights, bias } => Ok((weights, bias.as_slice(), l.spec.activation)),
            _ => Err(Error::structural(format!(
                "layer {i} is {}; training supports dense layers only",
                l.spec.kind.name()
            ))),
        })
        .collect()
}

const LOG_FLOOR: f64 = 1e-300;

fn sample_loss(output: &[f64], target: &[f64], loss: LossKind) -> f64 {
    match loss {
        LossKind::CrossEntropy => -output
            .iter()
            .zip(target)
            .filter(|(_, &y)| y != 0.0)
            .map(|(&a, &y)| y * libm::log(a.max(LOG_FLOOR)))
            .sum::<f64>(),
        LossKind::Mse => {
            output
                .iter()
                .zip(target)
                .map(|(a, y)| (a - y) * (a - y))
                .sum::<f64>()
                / output.len() as f64
        }
    }
}

/// Mean loss over the samples `batch` of `data`.
pub fn batch_loss(spec: &NetworkSpec, data: &Dataset, batch: &[usize], loss: LossKind) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::parameter("empty batch"));
    }
    let mut total = 0.0;
    for &i in batch {
        let trace = forward(data.input(i), spec)?;
        total += sample_loss(trace.output(), data.target(i), loss);
    }
    Ok(total / batch.len() as f64)
}

/// `dL/dz` from `dL/da` through the activation's Jacobian.
fn activation_backward(kind: ActivationKind, z: &[f64], a: &[f64], grad: &mut [f64]) {
    match kind {
        ActivationKind::Linear => {}
        ActivationKind::Relu => grad
            .iter_mut()
            .zip(z)
            .for_each(|(g, &z)| if z <= 0.0 { *g = 0.0 }),
        ActivationKind::Sigmoid => grad
            .iter_mut()
            .zip(a)
            .for_each(|(g, &a)| *g *= a * (1.0 - a)),
        ActivationKind::Softmax => {
            let dot: f64 = grad.iter().zip(a).map(|(g, a)| g * a).sum();
            grad.iter_mut().zip(a).for_each(|(g, &a)| *g = a * (*g - dot));
        }
    }
}

/// Mean batch loss and its gradient with respect to every weight and bias.
pub fn loss_and_gradients(
    spec: &NetworkSpec,
    data: &Dataset,
    batch: &[usize],
    loss: LossKind,
) -> Result<(f64, Gradients)> {
    let parts = dense_parts(spec)?;
    if batch.is_empty() {
        return Err(Error::parameter("empty batch"));
    }
    if data.input_dim() != spec.input_dim() || data.target_dim() != spec.output_dim() {
        return Err(Error::structural(format!(
            "data is {}->{}, network is {}->{}",
            data.input_dim(),
            data.target_dim(),
            spec.input_dim(),
            spec.output_dim()
        )));
    }
    let mut grads: Gradients = parts
        .iter()
        .map(|(w, b, _)| (Matrix::zeros(w.rows(), w.cols()), vec![0.0; b.len()]))
        .collect();
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    let mut zs: Vec<Vec<f64>> = Vec::with_capacity(parts.len());
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(parts.len());

    for &idx in batch {
        let x = data.input(idx);
        let y = data.target(idx);
        zs.clear();
        acts.clear();
        for (l, (w, b, act)) in parts.iter().enumerate() {
            let input = if l == 0 { x } else { acts[l - 1].as_slice() };
            let mut z = w.vec_mul(input);
            z.iter_mut().zip(b.iter()).for_each(|(z, b)| *z += b);
            let mut a = z.clone();
            activate_in_place(*act, &mut a);
            zs.push(z);
            acts.push(a);
        }
        let out = acts.last().expect("non-empty network");
        total += sample_loss(out, y, loss);

        let last = parts.len() - 1;
        let mut delta: Vec<f64> = match (loss, parts[last].2) {
            (LossKind::CrossEntropy, ActivationKind::Softmax) => {
                out.iter().zip(y).map(|(a, y)| (a - y) * scale).collect()
            }
            (LossKind::CrossEntropy, act) => {
                let mut g: Vec<f64> = out
                    .iter()
                    .zip(y)
                    .map(|(&a, &y)| if y == 0.0 { 0.0 } else { -y / a.max(LOG_FLOOR) * scale })
                    .collect();
                activation_backward(act, &zs[last], out, &mut g);
                g
            }
            (LossKind::Mse, act) => {
                let m = out.len() as f64;
                let mut g: Vec<f64> = out
                    .iter()
                    .zip(y)
                    .map(|(a, y)| 2.0 * (a - y) / m * scale)
                    .collect();
                activation_backward(act, &zs[last], out, &mut g);
                g
            }
        };

        for l in (0..parts.len()).rev() {
            let (w, _, _) = parts[l];
            let input = if l == 0 { x } else { acts[l - 1].as_slice() };
            let (gw, gb) = &mut grads[l];
            gb.iter_mut().zip(&delta).for_each(|(g, d)| *g += d);
            let cols = gw.cols();
            let gws = gw.as_mut_slice();
            for (i, &xi) in input.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                for (g, d) in gws[i * cols..(i + 1) * cols].iter_mut().zip(&delta) {
                    *g += xi * d;
                }
            }
            if l > 0 {
                let mut prev: Vec<f64> = (0..w.rows())
                    .map(|i| w.row(i).iter().zip(&delta).map(|(w, d)| w * d).sum())
                    .collect();
                activation_backward(parts[l - 1].2, &zs[l - 1], &acts[l - 1], &mut prev);
                delta = prev;
            }
        }
    }
    Ok((total * scale, grads))
}

/// Leaves `spec` untouched and returns false if any updated parameter would be non-finite.
fn apply_gradients(spec: &mut NetworkSpec, grads: &Gradients, learning_rate: f64) -> bool {
    let finite = spec.layers.iter().zip(grads).all(|(layer, (gw, gb))| match &layer.params {
        LayerParams::Dense { weights, bias } => weights
            .as_slice()
            .iter()
            .zip(gw.as_slice())
            .chain(bias.iter().zip(gb))
            .all(|(w, g)| (w - learning_rate * g).is_finite()),
        _ => true,
    });
    if !finite {
        return false;
    }
    for (layer, (gw, gb)) in spec.layers.iter_mut().zip(grads) {
        if let LayerParams::Dense { weights, bias } = &mut layer.params {
            weights
                .as_mut_slice()
                .iter_mut()
                .zip(gw.as_slice())
                .for_each(|(w, g)| *w -= learning_rate * g);
            bias.iter_mut().zip(gb).for_each(|(b, g)| *b -= learning_rate * g);
        }
    }
    true
}

/// One SGD update on the samples `batch`; returns the updated network and the
/// pre-update batch loss.
pub fn sgd_step(
    spec: &NetworkSpec,
    data: &Dataset,
    batch: &[usize],
    config: &TrainConfig,
) -> Result<(NetworkSpec, f64)> {
    let mut next = spec.clone();
    let loss = step_in_place(&mut next, data, batch, config, 0, 0)?;
    Ok((next, loss))
}

fn step_in_place(
    spec: &mut NetworkSpec,
    data: &Dataset,
    batch: &[usize],
    config: &TrainConfig,
    epoch: usize,
    batch_idx: usize,
) -> Result<f64> {
    let (loss, grads) = loss_and_gradients(spec, data, batch, config.loss)?;
    if !loss.is_finite() || !apply_gradients(spec, &grads, config.learning_rate) {
        return Err(Error::Diverged {
            epoch,
            batch: batch_idx,
        });
    }
    Ok(loss)
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

/// Accuracy (argmax match rate) for classification, mean squared error per element
/// for reconstruction.
pub fn evaluate(spec: &NetworkSpec, data: &Dataset, task: Task) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::parameter("cannot evaluate on an empty dataset"));
    }
    let mut acc = 0.0;
    for i in 0..data.len() {
        let trace = forward(data.input(i), spec)?;
        let out = trace.output();
        acc += match task {
            Task::Classification => {
                let label = match data.labels() {
                    Some(l) => l[i],
                    None => argmax(data.target(i)),
                };
                f64::from(u8::from(argmax(out) == label))
            }
            Task::Reconstruction => sample_loss(out, data.target(i), LossKind::Mse),
        };
    }
    Ok(acc / data.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_metric: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Checkpoint {
    Initial,
    Epoch(usize),
    Final,
}

/// Static metrics (no input samples) of a member at a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub checkpoint: Checkpoint,
    pub samples: Vec<MetricSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub id: u32,
    pub spec: NetworkSpec,
    pub snapshots: Vec<Snapshot>,
    pub curve: Vec<EpochRecord>,
    /// Test accuracy or test MSE after training.
    pub test_metric: Option<f64>,
    pub error: Option<Error>,
}

/// Networks sharing architecture and config, differing only in initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub arch: Vec<LayerSpec>,
    pub config: TrainConfig,
    pub members: Vec<Member>,
}

/// Stream of member `id`'s initialization; its shuffling uses the next stream.
pub fn member_init_stream(id: u32) -> u64 {
    2 * u64::from(id)
}

impl Population {
    pub fn initialize(arch: &[LayerSpec], config: TrainConfig, size: usize) -> Result<Self> {
        config.validate(arch)?;
        let members = (0..size as u32)
            .map(|id| {
                let mut rng = stream_rng(config.seed, member_init_stream(id));
                let spec = init_gaussian_with(arch, config.init_variance, &mut rng)?;
                let samples = collect(&spec, id, &[] as &[Vec<f64>])?;
                Ok(Member {
                    id,
                    spec,
                    snapshots: vec![Snapshot {
                        checkpoint: Checkpoint::Initial,
                        samples,
                    }],
                    curve: Vec::new(),
                    test_metric: None,
                    error: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Population {
            arch: arch.to_vec(),
            config,
            members,
        })
    }
}

/// Trains one member in place. Divergence is recorded on the member, not returned.
pub fn train_member(member: &mut Member, train: &Dataset, test: &Dataset, config: &TrainConfig) -> Result<()> {
    let mut rng = stream_rng(config.seed, member_init_stream(member.id) + 1);
    let mut order: Vec<usize> = (0..train.len()).collect();
    'epochs: for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            match step_in_place(&mut member.spec, train, chunk, config, epoch, b) {
                Ok(loss) => {
                    loss_sum += loss;
                    batches += 1;
                }
                Err(e @ Error::Diverged { .. }) => {
                    member.error = Some(e);
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
        let test_metric = evaluate(&member.spec, test, config.task)?;
        member.curve.push(EpochRecord {
            epoch,
            train_loss: loss_sum / batches.max(1) as f64,
            test_metric,
        });
        if config.snapshot_every_epoch {
            member.snapshots.push(Snapshot {
                checkpoint: Checkpoint::Epoch(epoch),
                samples: collect(&member.spec, member.id, &[] as &[Vec<f64>])?,
            });
        }
    }
    member.test_metric = Some(evaluate(&member.spec, test, config.task)?);
    member.snapshots.push(Snapshot {
        checkpoint: Checkpoint::Final,
        samples: collect(&member.spec, member.id, &[] as &[Vec<f64>])?,
    });
    Ok(())
}

/// Trains every member independently, in member order.
pub fn train_population(mut pop: Population, train: &Dataset, test: &Dataset) -> Result<Population> {
    let config = pop.config;
    for member in &mut pop.members {
        train_member(member, train, test, &config)?;
    }
    Ok(pop)
}
