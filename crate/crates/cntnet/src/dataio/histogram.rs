use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Population variance.
    pub variance: f64,
    pub min: f64,
    pub max: f64,
    pub count: u64,
}

impl Summary {
    pub fn of(samples: &[f64]) -> Option<Summary> {
        if samples.is_empty() {
            return None;
        }
        let (mean, variance) = cntnet_core::metrics::mean_var(samples);
        Some(Summary {
            mean,
            variance,
            min: samples.iter().copied().fold(f64::INFINITY, f64::min),
            max: samples.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            count: samples.len() as u64,
        })
    }
}

/// Bins are left-closed and right-open except the last, which is closed. Samples
/// outside an explicit range are tallied in `underflow` / `overflow`, so
/// `Σ counts + underflow + overflow = summary.count`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
    pub summary: Summary,
}

impl Histogram {
    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    /// Index of the bin holding `x`, if inside the range.
    pub fn bin_of(&self, x: f64) -> Option<usize> {
        bin_index(&self.edges, x)
    }
}

fn bin_index(edges: &[f64], x: f64) -> Option<usize> {
    let bins = edges.len() - 1;
    let (lo, hi) = (edges[0], edges[bins]);
    if !(lo..=hi).contains(&x) {
        return None;
    }
    let mut i = (((x - lo) / (hi - lo)) * bins as f64) as usize;
    i = i.min(bins - 1);
    // float rounding may land one bin off the edge comparison
    while i > 0 && x < edges[i] {
        i -= 1;
    }
    while i + 1 < bins && x >= edges[i + 1] {
        i += 1;
    }
    Some(i)
}

/// Bins `samples` into `bins` equal-width bins over `range`, or over the sample
/// range when `None`. A degenerate auto range `[v, v]` is widened to `[v − ½, v + ½]`.
pub fn histogram(samples: &[f64], bins: usize, range: Option<(f64, f64)>) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::usage("histogram needs at least one bin"));
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(Error::usage("histogram samples contain NaN"));
    }
    let summary = Summary::of(samples).ok_or_else(|| Error::usage("histogram of an empty sample set"))?;
    let (lo, hi) = match range {
        Some((lo, hi)) => {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::usage(format!("histogram range [{lo}, {hi}] is empty or not finite")));
            }
            (lo, hi)
        }
        None if summary.min == summary.max => (summary.min - 0.5, summary.max + 0.5),
        None => (summary.min, summary.max),
    };
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::usage("histogram samples are not finite; give an explicit range"));
    }
    let mut edges: Vec<f64> = (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect();
    edges[bins] = hi;
    if edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::usage(format!("range [{lo}, {hi}] too narrow for {bins} bins")));
    }
    let mut counts = vec![0u64; bins];
    let (mut underflow, mut overflow) = (0, 0);
    for &x in samples {
        match bin_index(&edges, x) {
            Some(i) => counts[i] += 1,
            None if x < lo => underflow += 1,
            None => overflow += 1,
        }
    }
    Ok(Histogram {
        edges,
        counts,
        underflow,
        overflow,
        summary,
    })
}

/// One metric's distribution at one layer of one population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramReport {
    pub metric: String,
    pub layer: usize,
    pub population_id: String,
    #[serde(flatten)]
    pub histogram: Histogram,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_binning() {
        let h = histogram(&[0.0, 0.5, 1.0], 2, Some((0.0, 1.0))).unwrap();
        assert_eq!(h.counts, vec![1, 2]);
        assert_eq!(h.edges, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn identical_samples_fill_one_bin() {
        let h = histogram(&[2.5; 7], 5, None).unwrap();
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(h.counts.iter().sum::<u64>(), 7);
        assert_eq!(h.summary.variance, 0.0);
    }

    #[test]
    fn auto_range_keeps_max_in_last_bin() {
        let h = histogram(&[-1.0, 0.3, 4.0], 10, None).unwrap();
        assert_eq!(h.counts[0], 1);
        assert_eq!(h.counts[9], 1);
        assert_eq!(h.underflow + h.overflow, 0);
    }

    #[test]
    fn out_of_range_tallied() {
        let h = histogram(&[-2.0, 0.1, 0.2, 3.0, 5.0], 4, Some((0.0, 1.0))).unwrap();
        assert_eq!((h.underflow, h.overflow), (1, 2));
        assert_eq!(h.counts.iter().sum::<u64>() + 3, h.summary.count);
    }

    #[test]
    fn errors() {
        assert!(histogram(&[], 3, None).is_err());
        assert!(histogram(&[1.0], 0, None).is_err());
        assert!(histogram(&[f64::NAN], 3, None).is_err());
        assert!(histogram(&[1.0], 3, Some((1.0, 1.0))).is_err());
    }

    #[test]
    fn edges_strictly_increasing() {
        let h = histogram(&[1e-300, 2e-300], 50, None).unwrap();
        assert!(h.edges.windows(2).all(|w| w[0] < w[1]));
    }
}
