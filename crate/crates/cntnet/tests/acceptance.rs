//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero if
//! any fails. Run with `cargo test -p cntnet --test acceptance`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use cntnet::commands::{self, Comparison, TrainSummary};
use cntnet::config::{
    AnalyzeConfig, CompareConfig, DataConfig, DataFormat, InitConfig, PopulationConfig, RunConfig, TrainRunConfig,
    CONFIG_ECHO,
};
use cntnet::dataio::report::read_json;
use cntnet::dataio::{self, parse_idx, read_weights, write_weights, ReportFormat};
use cntnet::presets::{ActivationName, Arch, NetworkSetup};
use cntnet_core::lowering::{lower_conv, lower_recurrent, toeplitz_dense_layer};
use cntnet_core::metrics::{layer_strengths, mean_var, neuron_strength};
use cntnet_core::netgraph::lower_dense;
use cntnet_core::rng::stream_rng;
use cntnet_core::theory::{monte_carlo_check, sample_trial, MonteCarloConfig, Verdict};
use cntnet_core::train::{batch_loss, init_gaussian, init_gaussian_with, loss_and_gradients, Dataset, LossKind};
use cntnet_core::{ActivationKind, Layer, LayerParams, LayerSpec, Matrix, NetworkSpec};
use rand::{Rng, RngCore};

const MNIST: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/mnist-subset");

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn timed_within(limit: Duration, elapsed: Duration) -> (bool, String) {
    (elapsed <= limit, format!("{:.2} s (limit {} s)", elapsed.as_secs_f64(), limit.as_secs()))
}

fn theory_calibration() -> Outcome {
    let start = Instant::now();
    let mut both = 0;
    for seed in 0..100 {
        let r = monte_carlo_check(&MonteCarloConfig::new(0.1, 32, 0, 1000, seed)).expect("valid config");
        if r.strength.verdict == Verdict::Consistent && r.fluctuation.verdict == Verdict::Consistent {
            both += 1;
        }
    }
    let (fast, t) = timed_within(Duration::from_secs(10), start.elapsed());
    outcome(both >= 98 && fast, format!("{both}/100 seeds consistent on both tests (need 98); {t}"))
}

fn strength_variance() -> Outcome {
    let (sigma, i) = (0.1, 32);
    let c = MonteCarloConfig::new(sigma, i, 0, 3125, 42);
    let s: Vec<f64> = (0..c.trials).flat_map(|t| sample_trial(&c, t).unwrap().in_strengths).collect();
    let (_, var) = mean_var(&s);
    let expected = i as f64 * sigma * sigma;
    let rel = (var / expected - 1.0).abs();
    outcome(
        s.len() == 100_000 && rel <= 0.05,
        format!("{} in-strengths, variance {var:.5} vs I*sigma^2 = {expected:.5} ({:.2}% off, limit 5%)", s.len(), 100.0 * rel),
    )
}

fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn conv_equivalence() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for instance in 0..100 {
        let mut rng = stream_rng(7, instance);
        let layer = Layer {
            spec: LayerSpec::conv2d(8, 8, 3, 1, ActivationKind::Linear),
            params: LayerParams::Conv2D {
                kernel: random_matrix(&mut rng, 3, 3),
                bias: rng.random_range(-1.0..1.0),
            },
        };
        let patch = lower_conv(&layer).unwrap();
        let dense_spec = NetworkSpec::new(vec![toeplitz_dense_layer(&layer).unwrap()]);
        let dense = lower_dense(&dense_spec).unwrap();
        for l in 0..2 {
            for (a, b) in layer_strengths(&patch, l).unwrap().iter().zip(layer_strengths(&dense, l).unwrap()) {
                worst = worst.max((a.s_in - b.s_in).abs()).max((a.s_out - b.s_out).abs()).max((a.s - b.s).abs());
            }
        }
        let x: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let from_patches = patch.propagate(0, &x).unwrap();
        let from_toeplitz = neuron_strength(&dense_spec, 0, &x).unwrap();
        for (a, b) in from_patches.iter().zip(&from_toeplitz) {
            worst = worst.max((a - b).abs());
        }
    }
    let (fast, t) = timed_within(Duration::from_secs(5), start.elapsed());
    outcome(worst <= 1e-9 && fast, format!("100 instances, max deviation {worst:.2e} (limit 1e-9); {t}"))
}

fn rnn_base_case() -> Outcome {
    let mut mismatches = 0;
    for instance in 0..100 {
        let mut rng = stream_rng(8, instance);
        let (d, h) = (rng.random_range(1..6), rng.random_range(1..6));
        let w_xh = random_matrix(&mut rng, d, h);
        let bias: Vec<f64> = (0..h).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rnn = Layer {
            spec: LayerSpec::recurrent(d, h, 1, ActivationKind::Sigmoid),
            params: LayerParams::Recurrent {
                w_xh: w_xh.clone(),
                w_hh: random_matrix(&mut rng, h, h),
                bias: bias.clone(),
            },
        };
        let unfolded = lower_recurrent(&rnn).unwrap();
        let dense = lower_dense(&NetworkSpec::new(vec![Layer::dense(w_xh, bias, ActivationKind::Sigmoid)])).unwrap();
        let same_metrics = (0..2).all(|l| layer_strengths(&unfolded, l).unwrap() == layer_strengths(&dense, l).unwrap());
        if unfolded != dense || !same_metrics {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("{mismatches}/100 random cells differ from their dense layer"))
}

fn fd_check(spec: &NetworkSpec, data: &Dataset, loss: LossKind) -> (usize, f64) {
    const H: f64 = 1e-5;
    let batch: Vec<usize> = (0..data.len()).collect();
    let (_, grads) = loss_and_gradients(spec, data, &batch, loss).unwrap();
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    for (l, (gw, gb)) in grads.iter().enumerate() {
        for (idx, &g) in gw.as_slice().iter().chain(gb).enumerate() {
            let at = |delta: f64| {
                let mut s = spec.clone();
                let LayerParams::Dense { weights, bias } = &mut s.layers[l].params else { unreachable!() };
                let n = weights.as_slice().len();
                if idx < n {
                    weights.as_mut_slice()[idx] += delta;
                } else {
                    bias[idx - n] += delta;
                }
                batch_loss(&s, data, &batch, loss).unwrap()
            };
            let fd = (at(H) - at(-H)) / (2.0 * H);
            let scale = g.abs().max(fd.abs());
            if scale < 1e-8 {
                continue;
            }
            let rel = (g - fd).abs() / scale;
            worst = worst.max(rel);
            if rel > 1e-4 {
                failures += 1;
            }
        }
    }
    (failures, worst)
}

fn gradient_correctness() -> Outcome {
    let hidden = [ActivationKind::Linear, ActivationKind::Relu, ActivationKind::Sigmoid];
    let (mut failures, mut worst, mut checks) = (0, 0.0f64, 0);
    for net in 0..20u64 {
        for output in ActivationKind::ALL {
            let mut rng = stream_rng(net, 500 + output as u64);
            let dims: Vec<usize> = (0..4).map(|_| rng.random_range(2..5)).collect();
            let arch: Vec<LayerSpec> = (0..3)
                .map(|l| LayerSpec::dense(dims[l], dims[l + 1], if l == 2 { output } else { hidden[net as usize % 3] }))
                .collect();
            let mut spec = init_gaussian_with(&arch, 0.5, &mut rng).unwrap();
            for layer in &mut spec.layers {
                if let LayerParams::Dense { bias, .. } = &mut layer.params {
                    bias.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
                }
            }
            let x: Vec<f64> = (0..3 * dims[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..3 * dims[3]).map(|_| rng.random_range(0.0..1.0)).collect();
            let mse = Dataset::new(dims[0], x.clone(), dims[3], y).unwrap();
            let mut cases = vec![(mse, LossKind::Mse)];
            if matches!(output, ActivationKind::Softmax | ActivationKind::Sigmoid) {
                let labels = (0..3).map(|i| (i + net as usize) % dims[3]).collect();
                cases.push((Dataset::classification(dims[0], x, labels, dims[3]).unwrap(), LossKind::CrossEntropy));
            }
            for (data, loss) in cases {
                let (f, w) = fd_check(&spec, &data, loss);
                failures += f;
                worst = worst.max(w);
                checks += 1;
            }
        }
    }
    outcome(
        failures == 0,
        format!("20 nets x 4 output activations, {checks} network/loss pairs; worst relative error {worst:.2e} (limit 1e-4), {failures} parameters over"),
    )
}

fn data_config() -> DataConfig {
    DataConfig {
        path: PathBuf::from(MNIST),
        format: DataFormat::Mnist,
        train_size: 8000,
        test_size: 2000,
    }
}

fn train_run(arch: Arch, epochs: usize, out: &Path) -> TrainSummary {
    let network = NetworkSetup::preset(arch, 3, 784, 10, ActivationName::Sigmoid).unwrap();
    let cfg = RunConfig::Train(TrainRunConfig {
        population: PopulationConfig {
            population_id: format!("{arch}3"),
            arch: Some(arch),
            depth: Some(3),
            network,
            sigma2: 0.5,
            size: 5,
            seed: 1,
        },
        data: data_config(),
        learning_rate: 0.5,
        batch_size: 32,
        epochs,
        snapshot_every_epoch: false,
        bins: 50,
        format: ReportFormat::Json,
        out: out.to_path_buf(),
    });
    commands::run(&cfg).unwrap();
    read_json(&out.join("summary.json")).unwrap()
}

fn mnist_accuracy(tmp: &Path) -> Outcome {
    let start = Instant::now();
    let summary = train_run(Arch::Fc, 30, &tmp.join("fc3"));
    let acc: Vec<f64> = summary.members.iter().map(|m| m.test_metric.unwrap_or(0.0)).collect();
    let (fast, t) = timed_within(Duration::from_secs(600), start.elapsed());
    let all = acc.len() == 5 && acc.iter().all(|&a| a >= 0.90);
    outcome(
        all && fast,
        format!("fc3 sigmoid (784-128-64-32-10), test accuracies {acc:.4?} (need all >= 0.90); {t}"),
    )
}

fn input_bimodality() -> Outcome {
    let d = dataio::load_dir(Path::new(MNIST)).unwrap();
    let n = d.pixels.len() as f64;
    let dark = d.pixels.iter().filter(|&&p| p <= 0.05).count() as f64 / n;
    let bright = d.pixels.iter().filter(|&&p| p >= 0.95).count() as f64 / n;
    outcome(
        dark > bright && dark + bright > 0.6,
        format!("{} images: mass in [0, 0.05] = {dark:.4}, in [0.95, 1] = {bright:.4}, together {:.4}", d.len(), dark + bright),
    )
}

fn accuracy_gap(tmp: &Path) -> Outcome {
    let tiers = [Arch::Small, Arch::Medium, Arch::Big];
    let mut dirs = Vec::new();
    for arch in tiers {
        let train_dir = tmp.join(format!("tier-{arch}"));
        train_run(arch, 10, &train_dir);
        let out = tmp.join(format!("tier-{arch}-analysis"));
        commands::run(&RunConfig::Analyze(AnalyzeConfig {
            population_id: arch.name().to_string(),
            weights: train_dir.join(commands::WEIGHTS_DIR),
            data: Some(data_config()),
            samples: 10,
            sigma2: None,
            significance: 0.01,
            bins: 50,
            format: ReportFormat::Json,
            out: out.clone(),
        }))
        .unwrap();
        dirs.push(out);
    }
    let out = tmp.join("tier-compare");
    commands::run(&RunConfig::Compare(CompareConfig {
        inputs: dirs,
        out: out.clone(),
    }))
    .unwrap();
    let cmp: Comparison = read_json(&out.join("comparison.json")).unwrap();
    let acc: Vec<f64> = cmp.populations.iter().map(|p| p.accuracy.unwrap_or(0.0)).collect();
    let ordered = acc[0] <= acc[1] && acc[1] <= acc[2] && acc[2] - acc[0] >= 0.01;
    outcome(
        ordered,
        format!(
            "mean accuracies small {:.4} <= medium {:.4} <= big {:.4}, big - small = {:.1} pp (need >= 1)",
            acc[0],
            acc[1],
            acc[2],
            100.0 * (acc[2] - acc[0])
        ),
    )
}

fn files_identical(a: &Path, b: &Path) -> Result<usize, String> {
    let mut names: Vec<PathBuf> = std::fs::read_dir(a)
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().path())
        .collect();
    names.sort();
    let mut compared = 0;
    for p in names {
        let name = p.file_name().unwrap();
        if name == CONFIG_ECHO {
            continue;
        }
        let q = b.join(name);
        if p.is_dir() {
            compared += files_identical(&p, &q)?;
        } else {
            if std::fs::read(&p).ok() != std::fs::read(&q).ok() {
                return Err(format!("{} differs", name.to_string_lossy()));
            }
            compared += 1;
        }
    }
    Ok(compared)
}

fn determinism(tmp: &Path) -> Outcome {
    let first = tmp.join("det-a");
    let network = NetworkSetup::preset(Arch::Fc, 3, 784, 10, ActivationName::Sigmoid).unwrap();
    let init = RunConfig::Init(InitConfig {
        population: PopulationConfig {
            population_id: "det".into(),
            arch: Some(Arch::Fc),
            depth: Some(3),
            network,
            sigma2: 0.5,
            size: 5,
            seed: 1,
        },
        bins: 50,
        format: ReportFormat::Csv,
        out: first.join("init"),
    });
    commands::run(&init).unwrap();
    let analyze = RunConfig::Analyze(AnalyzeConfig {
        population_id: "det".into(),
        weights: first.join("init").join(commands::WEIGHTS_DIR),
        data: Some(data_config()),
        samples: 20,
        sigma2: Some(0.5),
        significance: 0.01,
        bins: 50,
        format: ReportFormat::Csv,
        out: first.join("analyze"),
    });
    commands::run(&analyze).unwrap();

    let second = tmp.join("det-b");
    for step in ["init", "analyze"] {
        commands::replay(&first.join(step).join(CONFIG_ECHO), Some(second.join(step))).unwrap();
    }
    let mut total = 0;
    for step in ["init", "analyze"] {
        match files_identical(&first.join(step), &second.join(step)) {
            Ok(n) => total += n,
            Err(e) => return outcome(false, format!("replayed {step}: {e}")),
        }
    }
    outcome(total >= 10, format!("{total} output files byte-identical after replaying both config echoes"))
}

fn mutate(rng: &mut impl RngCore, bytes: &[u8], header: usize) -> Vec<u8> {
    let mut b = bytes.to_vec();
    match rng.next_u32() % 4 {
        0 => {
            for _ in 0..1 + rng.next_u32() % 4 {
                let i = rng.next_u32() as usize % header.min(b.len());
                b[i] = rng.next_u32() as u8;
            }
        }
        1 => {
            let i = rng.next_u32() as usize % header.min(b.len());
            b[i] ^= 1 << (rng.next_u32() % 8);
        }
        2 => b.truncate(rng.next_u32() as usize % (b.len() + 1)),
        _ => {
            let i = rng.next_u32() as usize % header.min(b.len());
            b[i] = [0x00, 0xff, 0x7f, 0x80][rng.next_u32() as usize % 4];
            b.extend(std::iter::repeat_n(0u8, rng.next_u32() as usize % 8));
        }
    }
    b
}

fn parser_robustness() -> Outcome {
    let mut idx = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 28, 0, 0, 0, 28];
    idx.extend((0..2 * 784).map(|i| (i % 251) as u8));
    let spec = init_gaussian(
        &[
            LayerSpec::dense(6, 4, ActivationKind::Sigmoid),
            LayerSpec::dense(4, 3, ActivationKind::Softmax),
        ],
        0.5,
        3,
    )
    .unwrap();
    let wf = write_weights(&spec).unwrap();
    let manifest_end = 8 + u32::from_le_bytes(wf[4..8].try_into().unwrap()) as usize;

    let mut rng = stream_rng(99, 0);
    let (mut rejected, mut accepted, mut panics) = (0, 0, 0);
    for i in 0..10_000 {
        let ok = if i % 2 == 0 {
            let m = mutate(&mut rng, &idx, 16);
            catch_unwind(AssertUnwindSafe(|| parse_idx(&m).is_ok()))
        } else {
            let m = mutate(&mut rng, &wf, manifest_end);
            catch_unwind(AssertUnwindSafe(|| read_weights(&m).is_ok()))
        };
        match ok {
            Ok(true) => accepted += 1,
            Ok(false) => rejected += 1,
            Err(_) => panics += 1,
        }
    }
    outcome(
        panics == 0,
        format!("10000 mutated headers: {rejected} structured errors, {accepted} still valid, {panics} panics"),
    )
}

fn main() {
    // parser robustness counts panics itself
    std::panic::set_hook(Box::new(|_| {}));
    let tmp = tempfile::tempdir().expect("temporary directory");
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("theory calibration", Box::new(theory_calibration)),
        ("empirical strength variance", Box::new(strength_variance)),
        ("conv equivalence", Box::new(conv_equivalence)),
        ("rnn unfolding base case", Box::new(rnn_base_case)),
        ("gradient correctness", Box::new(gradient_correctness)),
        ("mnist desk-scale accuracy", Box::new(|| mnist_accuracy(tmp.path()))),
        ("input bimodality", Box::new(input_bimodality)),
        ("accuracy-gap ordering", Box::new(|| accuracy_gap(tmp.path()))),
        ("determinism", Box::new(|| determinism(tmp.path()))),
        ("parser robustness", Box::new(parser_robustness)),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !result.pass {
            failed += 1;
        }
        println!("{} {name}: {}", if result.pass { "PASS" } else { "FAIL" }, result.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
