//! Population-level metric pooling, shared by the commands.

use std::collections::BTreeMap;

use cntnet_core::metrics::{collect, layer_strengths};
use cntnet_core::theory::{
    chi2_gof, fluctuation_null, fluctuation_statistic, ks_test, link_weight_null, node_strength_null, GofResult,
    NullDistribution,
};
use cntnet_core::{forward, LayerParams, MetricKind, NetworkSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{histogram, HistogramReport};
use crate::error::{Error, Result};

/// Raw `ω_ij + β_j` terms, reported alongside the metric kinds.
pub const LINK_WEIGHT: &str = "link_weight";
pub const FLUCTUATION_BINS: usize = 20;

/// Values of one metric at one layer, pooled over members and inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub metric: &'static str,
    pub layer: usize,
    pub values: Vec<f64>,
    /// Samples left out because they could not be computed.
    pub flagged: usize,
}

fn rank(metric: &str) -> usize {
    MetricKind::ALL
        .iter()
        .position(|m| m.name() == metric)
        .map_or(0, |p| p + 1)
}

fn link_weight_terms(spec: &NetworkSpec, layer: usize) -> Result<Vec<f64>> {
    let l = &spec.layers[layer];
    if let LayerParams::Dense { weights, bias } = &l.params {
        let cols = weights.cols();
        return Ok(weights
            .as_slice()
            .iter()
            .enumerate()
            .map(|(k, w)| w + bias[k % cols])
            .collect());
    }
    let g = NetworkSpec::new(vec![l.clone()]).lower()?;
    Ok((0..g.num_gaps())
        .flat_map(|gap| {
            let b = g.dest_bias(gap);
            g.edges(gap).iter().map(move |e| e.weight + b[e.dst])
        })
        .collect())
}

/// Pools every metric of every member; `members` must be in `network_id` order.
pub fn pool<S: AsRef<[f64]> + Sync>(members: &[(u32, NetworkSpec)], inputs: &[S]) -> Result<Vec<Group>> {
    let per_member: Vec<(Vec<Vec<f64>>, Vec<cntnet_core::MetricSample>)> = members
        .par_iter()
        .map(|(id, spec)| {
            let lw = (0..spec.len())
                .map(|l| link_weight_terms(spec, l))
                .collect::<Result<Vec<_>>>()?;
            Ok((lw, collect(spec, *id, inputs)?))
        })
        .collect::<Result<_>>()?;

    let mut groups: BTreeMap<(usize, usize), Group> = BTreeMap::new();
    for (lw, samples) in per_member {
        for (layer, values) in lw.into_iter().enumerate() {
            groups
                .entry((0, layer))
                .or_insert_with(|| Group {
                    metric: LINK_WEIGHT,
                    layer,
                    values: Vec::new(),
                    flagged: 0,
                })
                .values
                .extend(values);
        }
        for s in samples {
            let g = groups.entry((rank(s.metric.name()), s.layer)).or_insert_with(|| Group {
                metric: s.metric.name(),
                layer: s.layer,
                values: Vec::new(),
                flagged: 0,
            });
            if s.flagged {
                g.flagged += 1;
            } else {
                g.values.push(s.value);
            }
        }
    }
    Ok(groups.into_values().collect())
}

/// Histograms of every group with at least one value.
pub fn reports(groups: &[Group], population_id: &str, bins: usize) -> Result<Vec<HistogramReport>> {
    groups
        .iter()
        .filter(|g| !g.values.is_empty())
        .map(|g| {
            Ok(HistogramReport {
                metric: g.metric.to_string(),
                layer: g.layer,
                population_id: population_id.to_string(),
                histogram: histogram(&g.values, bins, None)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofRow {
    pub metric: String,
    pub layer: usize,
    pub test: String,
    pub null: String,
    pub sample_size: usize,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub significance: f64,
    pub verdict: Option<String>,
    /// Why the test could not run.
    pub note: Option<String>,
}

pub fn describe(null: &NullDistribution) -> String {
    match *null {
        NullDistribution::Normal { mean, variance } => format!("normal(mean={mean}, variance={variance})"),
        NullDistribution::ScaledChiSquared { dof, scale } => format!("chi2(dof={dof}, scale={scale})"),
    }
}

fn row(
    metric: &str,
    layer: usize,
    test: &str,
    n: usize,
    significance: f64,
    null: cntnet_core::Result<NullDistribution>,
    run: impl FnOnce(&NullDistribution) -> cntnet_core::Result<GofResult>,
) -> GofRow {
    let mut out = GofRow {
        metric: metric.to_string(),
        layer,
        test: test.to_string(),
        null: String::new(),
        sample_size: n,
        statistic: None,
        p_value: None,
        significance,
        verdict: None,
        note: None,
    };
    match null.and_then(|null| {
        out.null = describe(&null);
        run(&null)
    }) {
        Ok(r) => {
            out.statistic = Some(r.statistic);
            out.p_value = Some(r.p_value);
            out.verdict = Some(r.verdict.name().to_string());
        }
        Err(e) => out.note = Some(e.to_string()),
    }
    out
}

/// Goodness of fit of an untrained population against its Gaussian-initialization
/// nulls: link weights against `N(0, σ²)`, node strengths against `N(0, (I+J)σ²)`
/// and layer fluctuations against `χ²(n−1)`. Degree-based nulls need dense
/// networks; other layers get a note instead.
pub fn gof(groups: &[Group], members: &[(u32, NetworkSpec)], sigma2: f64, significance: f64) -> Vec<GofRow> {
    let sigma = sigma2.sqrt();
    let widths: Option<Vec<usize>> = members.first().and_then(|(_, s)| {
        s.is_dense().then(|| {
            let mut w = vec![s.input_dim()];
            w.extend(s.layers.iter().map(|l| l.spec.kind.out_dim()));
            w
        })
    });
    let degrees = |layer: usize| -> Option<(usize, usize)> {
        let w = widths.as_ref()?;
        let i = if layer == 0 { 0 } else { w[layer - 1] };
        let j = w.get(layer + 1).copied().unwrap_or(0);
        Some((i, j))
    };
    let mut out = Vec::new();
    for g in groups {
        let n = g.values.len();
        match g.metric {
            LINK_WEIGHT => out.push(row(g.metric, g.layer, "ks", n, significance, link_weight_null(sigma), |null| {
                ks_test(&g.values, null, significance)
            })),
            m if m == MetricKind::NodeStrength.name() => {
                let null = degrees(g.layer).map_or_else(dense_only, |(i, j)| node_strength_null(sigma, i, j));
                out.push(row(m, g.layer, "ks", n, significance, null, |null| ks_test(&g.values, null, significance)));
            }
            m if m == MetricKind::LayerFluctuation.name() => {
                let nodes = widths.as_ref().and_then(|w| w.get(g.layer).copied());
                let null = match (degrees(g.layer), nodes) {
                    (Some((i, j)), Some(nodes)) => fluctuation_null(nodes, (i + j) as f64 * sigma2).map(|null| (null, nodes, i + j)),
                    _ => dense_only(),
                };
                let stats: Vec<f64> = match &null {
                    Ok((_, nodes, k)) => g
                        .values
                        .iter()
                        .map(|&y| fluctuation_statistic(y, *nodes, *k as f64 * sigma2))
                        .collect(),
                    Err(_) => Vec::new(),
                };
                out.push(row(m, g.layer, "chi2", n, significance, null.map(|t| t.0), |null| {
                    chi2_gof(&stats, null, FLUCTUATION_BINS, significance)
                }));
            }
            _ => {}
        }
    }
    out
}

fn dense_only<T>() -> cntnet_core::Result<T> {
    Err(cntnet_core::Error::Parameter("degree-based null needs a dense network".into()))
}

/// One neuron under one input: its static node strength next to its
/// input-dependent strength and activation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub network_id: u32,
    pub input_sample: usize,
    /// Layer of the node in the graph (0 is the input layer).
    pub node_layer: usize,
    pub node: usize,
    pub node_strength: f64,
    pub neuron_strength: f64,
    pub neuron_activation: f64,
}

/// Dense networks only: elsewhere a layer's neurons do not map onto one graph layer.
pub fn scatter<S: AsRef<[f64]> + Sync>(members: &[(u32, NetworkSpec)], inputs: &[S]) -> Result<Vec<ScatterRow>> {
    if members.iter().any(|(_, s)| !s.is_dense()) {
        return Err(Error::usage("scatter export needs dense networks"));
    }
    let parts: Vec<Vec<ScatterRow>> = members
        .par_iter()
        .map(|(id, spec)| {
            let graph = spec.lower()?;
            let strengths = (1..graph.num_layers())
                .map(|l| layer_strengths(&graph, l))
                .collect::<cntnet_core::Result<Vec<_>>>()?;
            let mut rows = Vec::new();
            for (k, x) in inputs.iter().enumerate() {
                let trace = forward(x.as_ref(), spec)?;
                for (l, (zeta, act)) in trace.pre_activation.iter().zip(&trace.activation).enumerate() {
                    for (node, ((z, a), s)) in zeta.iter().zip(act).zip(&strengths[l]).enumerate() {
                        rows.push(ScatterRow {
                            network_id: *id,
                            input_sample: k,
                            node_layer: l + 1,
                            node,
                            node_strength: s.s,
                            neuron_strength: *z,
                            neuron_activation: *a,
                        });
                    }
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().flatten().collect())
}
