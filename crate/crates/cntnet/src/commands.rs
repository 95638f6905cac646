//! The pipeline steps behind each subcommand. Each writes its resolved config to
//! `config.json` in its output directory before doing anything else.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use cntnet_core::theory::{monte_carlo_check, MonteCarloConfig};
use cntnet_core::train::{evaluate, Member, Population, Task, TrainConfig};
use cntnet_core::{ActivationKind, MetricKind, NetworkSpec};
use serde::{Deserialize, Serialize};

use crate::analysis::{self, describe, GofRow, Group, ScatterRow};
use crate::config::{
    nonzero, positive, AnalyzeConfig, CompareConfig, DataConfig, InitConfig, PopulationConfig, RunConfig, TheoryConfig,
    TrainRunConfig, CONFIG_ECHO,
};
use crate::data;
use crate::dataio::report::{read_json, write_csv, write_json};
use crate::dataio::{emit_report, read_weights, weights, write_weights, HistogramReport, ReportFormat};
use crate::error::{Error, Result};
use crate::population::train_parallel;
use crate::presets::TaskName;

pub const WEIGHTS_DIR: &str = "weights";
pub const INITIAL_WEIGHTS_DIR: &str = "weights-initial";
pub const ANALYSIS_FILE: &str = "analysis.json";
pub const WEIGHT_EXT: &str = "cntw";

/// Runs a command and returns a short human-readable summary.
pub fn run(config: &RunConfig) -> Result<String> {
    let out = config.out();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_json(&out.join(CONFIG_ECHO), config)?;
    match config {
        RunConfig::Init(c) => cmd_init(c),
        RunConfig::Train(c) => cmd_train(c),
        RunConfig::Analyze(c) => cmd_analyze(c),
        RunConfig::TheoryCheck(c) => cmd_theory_check(c),
        RunConfig::Compare(c) => cmd_compare(c),
    }
}

/// Re-runs a config echo, optionally into another directory.
pub fn replay(path: &Path, out: Option<PathBuf>) -> Result<String> {
    let mut cfg: RunConfig = read_json(path)?;
    if let Some(out) = out {
        cfg.set_out(out);
    }
    run(&cfg)
}

pub fn member_file(id: u32) -> String {
    format!("member-{id:03}.{WEIGHT_EXT}")
}

fn base_train_config(p: &PopulationConfig) -> TrainConfig {
    match p.network.task {
        TaskName::Classification => TrainConfig::classification(p.sigma2, p.seed),
        TaskName::Reconstruction => TrainConfig::reconstruction(p.sigma2, p.seed),
    }
}

fn initialize(p: &PopulationConfig, config: TrainConfig) -> Result<Population> {
    p.validate()?;
    Ok(Population::initialize(&p.network.layers(), config, p.size)?)
}

/// The network as it reads back from its 32-bit weight file.
fn stored(spec: &NetworkSpec) -> Result<NetworkSpec> {
    read_weights(&write_weights(spec)?).map_err(|e| Error::usage(e.to_string()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn save_members<'a>(dir: &Path, members: impl IntoIterator<Item = &'a Member>) -> Result<Vec<(u32, NetworkSpec)>> {
    create_dir(dir)?;
    members
        .into_iter()
        .map(|m| {
            weights::save(&dir.join(member_file(m.id)), &m.spec)?;
            Ok((m.id, stored(&m.spec)?))
        })
        .collect()
}

fn report_path(out: &Path, stem: &str, format: ReportFormat) -> PathBuf {
    out.join(format!("{stem}.{}", format.extension()))
}

fn count_verdicts(rows: &[GofRow]) -> (usize, usize) {
    let consistent = rows.iter().filter(|r| r.verdict.as_deref() == Some("consistent")).count();
    (consistent, rows.iter().filter(|r| r.verdict.is_some()).count())
}

pub fn cmd_init(c: &InitConfig) -> Result<String> {
    nonzero("bins", c.bins)?;
    let pop = initialize(&c.population, base_train_config(&c.population))?;
    let members = save_members(&c.out.join(WEIGHTS_DIR), &pop.members)?;
    let groups = analysis::pool(&members, &[] as &[Vec<f64>])?;
    let reports = analysis::reports(&groups, &c.population.population_id, c.bins)?;
    emit_report(&reports, c.format, &report_path(&c.out, "initial_report", c.format))?;
    let gof = analysis::gof(&groups, &members, c.population.sigma2, cntnet_core::theory::DEFAULT_SIGNIFICANCE);
    write_json(&c.out.join("theory.json"), &gof)?;
    let (ok, tested) = count_verdicts(&gof);
    Ok(format!(
        "initialized {} members of {} parameters in {}; {ok}/{tested} null-distribution tests consistent",
        members.len(),
        c.population.network.parameter_count(),
        c.out.display()
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub epoch: usize,
    pub member: u32,
    pub train_loss: f64,
    pub test_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberResult {
    pub id: u32,
    pub test_metric: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub population_id: String,
    pub task: TaskName,
    pub metric: String,
    pub members: Vec<MemberResult>,
    /// Mean over members that did not diverge.
    pub mean_test_metric: Option<f64>,
}

fn check_dims(network: &[usize], splits: &data::Splits, path: &Path) -> Result<()> {
    let (i, o) = (network[0], network[network.len() - 1]);
    if splits.train.input_dim() != i || splits.train.target_dim() != o {
        return Err(Error::usage(format!(
            "network is {i}->{o} but {} gives {}->{}",
            path.display(),
            splits.train.input_dim(),
            splits.train.target_dim()
        )));
    }
    Ok(())
}

pub fn cmd_train(c: &TrainRunConfig) -> Result<String> {
    nonzero("bins", c.bins)?;
    nonzero("batch-size", c.batch_size)?;
    if !(c.learning_rate >= 0.0 && c.learning_rate.is_finite()) {
        return Err(Error::usage(format!("--lr must be non-negative, got {}", c.learning_rate)));
    }
    c.population.validate()?;
    let splits = data::load(&c.data, c.population.network.task)?;
    check_dims(&c.population.network.widths, &splits, &c.data.path)?;
    let config = TrainConfig {
        learning_rate: c.learning_rate,
        batch_size: c.batch_size,
        epochs: c.epochs,
        snapshot_every_epoch: c.snapshot_every_epoch,
        ..base_train_config(&c.population)
    };
    let pop = initialize(&c.population, config)?;
    save_members(&c.out.join(INITIAL_WEIGHTS_DIR), &pop.members)?;
    let pop = train_parallel(pop, &splits.train, &splits.test)?;

    let healthy: Vec<&Member> = pop.members.iter().filter(|m| m.error.is_none()).collect();
    if healthy.is_empty() {
        let err = pop.members.iter().find_map(|m| m.error.clone()).expect("members exist");
        return Err(err.into());
    }
    let members = save_members(&c.out.join(WEIGHTS_DIR), healthy.iter().copied())?;

    let curve: Vec<CurveRow> = pop
        .members
        .iter()
        .flat_map(|m| {
            m.curve.iter().map(|r| CurveRow {
                epoch: r.epoch,
                member: m.id,
                train_loss: r.train_loss,
                test_metric: r.test_metric,
            })
        })
        .collect();
    write_csv(&c.out.join("curve.csv"), &curve)?;

    let results: Vec<MemberResult> = pop
        .members
        .iter()
        .map(|m| MemberResult {
            id: m.id,
            test_metric: m.error.is_none().then_some(m.test_metric).flatten(),
            error: m.error.as_ref().map(|e| e.to_string()),
        })
        .collect();
    let finished: Vec<f64> = results.iter().filter_map(|r| r.test_metric).collect();
    let mean = (!finished.is_empty()).then(|| finished.iter().sum::<f64>() / finished.len() as f64);
    let task = c.population.network.task;
    write_json(
        &c.out.join("summary.json"),
        &TrainSummary {
            population_id: c.population.population_id.clone(),
            task,
            metric: task.metric_name().to_string(),
            members: results,
            mean_test_metric: mean,
        },
    )?;

    let groups = analysis::pool(&members, &[] as &[Vec<f64>])?;
    let reports = analysis::reports(&groups, &c.population.population_id, c.bins)?;
    emit_report(&reports, c.format, &report_path(&c.out, "final_report", c.format))?;

    Ok(format!(
        "trained {} members ({} diverged); mean test {} {:.4}",
        pop.members.len(),
        pop.members.len() - healthy.len(),
        task.metric_name(),
        mean.unwrap_or(f64::NAN)
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestMetric {
    pub name: String,
    pub mean: f64,
    pub per_member: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub population_id: String,
    pub task: TaskName,
    pub members: usize,
    pub input_samples: usize,
    pub test_metric: Option<TestMetric>,
    pub flagged_disparities: usize,
    pub flags: Vec<String>,
    pub reports: Vec<HistogramReport>,
}

/// Weight files of a directory in name order.
pub fn weight_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == WEIGHT_EXT))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::usage(format!("no .{WEIGHT_EXT} files in {}", dir.display())));
    }
    Ok(files)
}

fn infer_task(spec: &NetworkSpec) -> TaskName {
    let last = spec.layers.last().expect("validated network has layers");
    if last.spec.activation != ActivationKind::Softmax && spec.output_dim() == spec.input_dim() {
        TaskName::Reconstruction
    } else {
        TaskName::Classification
    }
}

pub fn cmd_analyze(c: &AnalyzeConfig) -> Result<String> {
    nonzero("bins", c.bins)?;
    if let Some(s2) = c.sigma2 {
        positive("sigma2", s2)?;
    }
    let members: Vec<(u32, NetworkSpec)> = weight_files(&c.weights)?
        .iter()
        .enumerate()
        .map(|(i, p)| Ok((i as u32, weights::load(p)?)))
        .collect::<Result<_>>()?;
    let arch = members[0].1.architecture();
    if let Some((i, _)) = members.iter().find(|(_, s)| s.architecture() != arch) {
        return Err(Error::usage(format!("member {i} differs in architecture from member 0")));
    }
    let task = infer_task(&members[0].1);

    let mut flags = Vec::new();
    let (inputs, test_metric) = match (&c.data, c.samples) {
        (None, 0) => (Vec::new(), None),
        (None, _) => return Err(Error::usage("--samples needs --data")),
        (Some(d), samples) => analysis_inputs(d, task, samples, &members)?,
    };
    if inputs.is_empty() {
        flags.push(format!(
            "no input samples: {} and {} absent",
            MetricKind::NeuronStrength,
            MetricKind::NeuronActivation
        ));
    }

    let groups = analysis::pool(&members, &inputs)?;
    let reports = analysis::reports(&groups, &c.population_id, c.bins)?;
    emit_report(&reports, c.format, &report_path(&c.out, "report", c.format))?;
    let flagged = flagged_disparities(&groups);
    if flagged > 0 {
        flags.push(format!(
            "{flagged} ill-conditioned node disparities left out of the {} histograms",
            MetricKind::NodeDisparity
        ));
    }

    if !inputs.is_empty() {
        match analysis::scatter(&members, &inputs) {
            Ok(rows) => write_csv::<ScatterRow>(&c.out.join("scatter.csv"), &rows)?,
            Err(Error::Usage(msg)) => flags.push(format!("no scatter export: {msg}")),
            Err(e) => return Err(e),
        }
    }
    let mut gof_note = String::new();
    if let Some(s2) = c.sigma2 {
        let rows = analysis::gof(&groups, &members, s2, c.significance);
        let (ok, tested) = count_verdicts(&rows);
        gof_note = format!("; {ok}/{tested} null-distribution tests consistent");
        write_json(&c.out.join("gof.json"), &rows)?;
    }

    let summary = AnalysisSummary {
        population_id: c.population_id.clone(),
        task,
        members: members.len(),
        input_samples: inputs.len(),
        test_metric,
        flagged_disparities: flagged,
        flags,
        reports,
    };
    write_json(&c.out.join(ANALYSIS_FILE), &summary)?;
    Ok(format!(
        "analyzed {} members over {} inputs: {} histograms{gof_note}",
        summary.members,
        summary.input_samples,
        summary.reports.len()
    ))
}

fn analysis_inputs(
    d: &DataConfig,
    task: TaskName,
    samples: usize,
    members: &[(u32, NetworkSpec)],
) -> Result<(Vec<Vec<f64>>, Option<TestMetric>)> {
    let splits = data::load(d, task)?;
    let widths: Vec<usize> = std::iter::once(members[0].1.input_dim())
        .chain(members[0].1.layers.iter().map(|l| l.spec.kind.out_dim()))
        .collect();
    check_dims(&widths, &splits, &d.path)?;
    if samples > splits.test.len() {
        return Err(Error::usage(format!(
            "--samples {samples} exceeds the {} test records",
            splits.test.len()
        )));
    }
    let inputs = (0..samples).map(|i| splits.test.input(i).to_vec()).collect();
    let per_member = members
        .iter()
        .map(|(_, s)| evaluate(s, &splits.test, Task::from(task)))
        .collect::<cntnet_core::Result<Vec<f64>>>()?;
    let mean = per_member.iter().sum::<f64>() / per_member.len() as f64;
    Ok((
        inputs,
        Some(TestMetric {
            name: task.metric_name().to_string(),
            mean,
            per_member,
        }),
    ))
}

fn flagged_disparities(groups: &[Group]) -> usize {
    groups
        .iter()
        .filter(|g| g.metric == MetricKind::NodeDisparity.name())
        .map(|g| g.flagged)
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryTest {
    pub null: String,
    pub sample_size: usize,
    pub statistic: f64,
    pub p_value: f64,
    pub significance: f64,
    pub verdict: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub sigma: f64,
    pub null_sigma: f64,
    pub in_degree: usize,
    pub out_degree: usize,
    pub nodes_per_layer: usize,
    pub trials: usize,
    pub seed: u64,
    pub in_strength: TheoryTest,
    pub fluctuation: TheoryTest,
    pub in_strength_mean: f64,
    pub in_strength_variance: f64,
    pub mean_squared_fluctuation: f64,
    pub expected_mean_squared_fluctuation: f64,
}

pub fn cmd_theory_check(c: &TheoryConfig) -> Result<String> {
    let mut mc = MonteCarloConfig::new(c.sigma, c.in_degree, c.out_degree, c.trials, c.seed);
    mc.null_sigma = c.null_sigma;
    mc.significance = c.significance;
    mc.bins = c.bins;
    let r = monte_carlo_check(&mc)?;
    let test = |null, g: &cntnet_core::GofResult| TheoryTest {
        null: describe(null),
        sample_size: g.sample_size,
        statistic: g.statistic,
        p_value: g.p_value,
        significance: g.significance,
        verdict: g.verdict.name().to_string(),
    };
    let report = TheoryReport {
        sigma: c.sigma,
        null_sigma: mc.declared_sigma(),
        in_degree: c.in_degree,
        out_degree: c.out_degree,
        nodes_per_layer: mc.nodes_per_layer(),
        trials: c.trials,
        seed: c.seed,
        in_strength: test(&r.strength_null, &r.strength),
        fluctuation: test(&r.fluctuation_null, &r.fluctuation),
        in_strength_mean: r.strength_mean,
        in_strength_variance: r.strength_variance,
        mean_squared_fluctuation: r.mean_squared_fluctuation,
        expected_mean_squared_fluctuation: r.expected_mean_squared_fluctuation,
    };
    write_json(&c.out.join("theory_check.json"), &report)?;
    Ok(format!(
        "in-strength KS: {} (p = {:.4}); fluctuation chi2: {} (p = {:.4})",
        report.in_strength.verdict, report.in_strength.p_value, report.fluctuation.verdict, report.fluctuation.p_value
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationColumn {
    pub population_id: String,
    pub task: TaskName,
    pub accuracy: Option<f64>,
    pub test_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub metric: String,
    pub layer: usize,
    pub population_id: String,
    pub task: TaskName,
    pub accuracy: Option<f64>,
    pub test_mse: Option<f64>,
    pub mean: f64,
    pub variance: f64,
    pub min: f64,
    pub max: f64,
    pub count: u64,
    /// Differences from the first population at the same metric and layer.
    pub delta_mean: Option<f64>,
    pub delta_variance: Option<f64>,
    pub delta_min: Option<f64>,
    pub delta_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayRow {
    pub metric: String,
    pub layer: usize,
    pub population_id: String,
    pub bin_left: f64,
    pub bin_right: f64,
    pub count: u64,
    /// Count over total binned samples and bin width.
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub populations: Vec<PopulationColumn>,
    pub rows: Vec<SummaryRow>,
}

fn load_analysis(path: &Path) -> Result<AnalysisSummary> {
    if path.is_dir() {
        read_json(&path.join(ANALYSIS_FILE))
    } else {
        read_json(path)
    }
}

fn metric_rank(metric: &str) -> usize {
    MetricKind::ALL
        .iter()
        .position(|m| m.name() == metric)
        .map_or(0, |p| p + 1)
}

pub fn compare(sets: &[AnalysisSummary]) -> Result<Comparison> {
    if sets.len() < 2 {
        return Err(Error::usage("compare needs at least two report sets"));
    }
    let kinds = |s: &AnalysisSummary| s.reports.iter().map(|r| r.metric.clone()).collect::<BTreeSet<_>>();
    let first = kinds(&sets[0]);
    for s in &sets[1..] {
        let k = kinds(s);
        if k != first {
            return Err(Error::usage(format!(
                "population `{}` reports metrics {:?}, `{}` reports {:?}",
                sets[0].population_id, first, s.population_id, k
            )));
        }
    }
    let columns: Vec<PopulationColumn> = sets
        .iter()
        .map(|s| {
            let metric = s.test_metric.as_ref().map(|t| t.mean);
            PopulationColumn {
                population_id: s.population_id.clone(),
                task: s.task,
                accuracy: metric.filter(|_| s.task == TaskName::Classification),
                test_mse: metric.filter(|_| s.task == TaskName::Reconstruction),
            }
        })
        .collect();
    let index: Vec<BTreeMap<(usize, usize), &HistogramReport>> = sets
        .iter()
        .map(|s| s.reports.iter().map(|r| ((metric_rank(&r.metric), r.layer), r)).collect())
        .collect();
    let keys: BTreeSet<(usize, usize)> = index.iter().flat_map(|m| m.keys().copied()).collect();
    let mut rows = Vec::new();
    for key in keys {
        let base = index[0].get(&key).map(|r| r.histogram.summary);
        for (col, idx) in columns.iter().zip(&index) {
            let Some(r) = idx.get(&key) else { continue };
            let s = r.histogram.summary;
            let d = |f: fn(&crate::dataio::Summary) -> f64| base.as_ref().map(|b| f(&s) - f(b));
            rows.push(SummaryRow {
                metric: r.metric.clone(),
                layer: r.layer,
                population_id: col.population_id.clone(),
                task: col.task,
                accuracy: col.accuracy,
                test_mse: col.test_mse,
                mean: s.mean,
                variance: s.variance,
                min: s.min,
                max: s.max,
                count: s.count,
                delta_mean: d(|s| s.mean),
                delta_variance: d(|s| s.variance),
                delta_min: d(|s| s.min),
                delta_max: d(|s| s.max),
            });
        }
    }
    Ok(Comparison { populations: columns, rows })
}

pub fn overlay(sets: &[AnalysisSummary]) -> Vec<OverlayRow> {
    let mut reports: Vec<&HistogramReport> = sets.iter().flat_map(|s| &s.reports).collect();
    reports.sort_by_key(|r| (metric_rank(&r.metric), r.layer));
    reports
        .into_iter()
        .flat_map(|r| {
            let h = &r.histogram;
            let total: u64 = h.counts.iter().sum();
            h.counts.iter().enumerate().map(move |(i, &count)| {
                let (l, rt) = (h.edges[i], h.edges[i + 1]);
                OverlayRow {
                    metric: r.metric.clone(),
                    layer: r.layer,
                    population_id: r.population_id.clone(),
                    bin_left: l,
                    bin_right: rt,
                    count,
                    density: if total == 0 { 0.0 } else { count as f64 / total as f64 / (rt - l) },
                }
            })
        })
        .collect()
}

pub fn cmd_compare(c: &CompareConfig) -> Result<String> {
    let sets = c.inputs.iter().map(|p| load_analysis(p)).collect::<Result<Vec<_>>>()?;
    let cmp = compare(&sets)?;
    write_csv(&c.out.join("comparison_summary.csv"), &cmp.rows)?;
    write_csv(&c.out.join("comparison_overlay.csv"), &overlay(&sets))?;
    write_json(&c.out.join("comparison.json"), &cmp)?;
    let cols: Vec<String> = cmp
        .populations
        .iter()
        .map(|p| match (p.accuracy, p.test_mse) {
            (Some(a), _) => format!("{}: accuracy {a:.4}", p.population_id),
            (_, Some(m)) => format!("{}: mse {m:.5}", p.population_id),
            _ => format!("{}: no test metric", p.population_id),
        })
        .collect();
    Ok(format!("compared {} populations ({})", cmp.populations.len(), cols.join(", ")))
}
