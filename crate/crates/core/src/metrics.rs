//! Similarity, correlation and clustering-agreement metrics.
//!
//! | Function | Range | Notes |
//! |----------|-------|-------|
//! | [`cosine`] | [-1, 1] | rejects zero vectors |
//! | [`pearson`] | [-1, 1] | sample covariance / product of std devs |
//! | [`spearman`] | [-1, 1] | Pearson on average-tie ranks |
//! | [`v_measure`] | [0, 1] | harmonic mean of homogeneity and completeness (beta = 1) |
//!
//! Entropies use the natural logarithm.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("cosine similarity of a zero vector is undefined")]
    ZeroVector,
    #[error("input is empty")]
    EmptyInput,
    #[error("need at least two samples, got {0}")]
    TooFewSamples(usize),
    #[error("zero variance: correlation is undefined when one side is constant")]
    ZeroVariance,
    #[error("invalid scaling interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub spearman_rho: f64,
    pub pearson_r: f64,
    pub n: usize,
}

impl CorrelationReport {
    pub fn compute(predictions: &[f64], gold: &[f64]) -> Result<Self, MetricsError> {
        Ok(Self {
            spearman_rho: spearman(predictions, gold)?,
            pearson_r: pearson(predictions, gold)?,
            n: predictions.len(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VMeasureReport {
    pub homogeneity: f64,
    pub completeness: f64,
    pub v_measure: f64,
}

/// Cosine similarity between two equal-length vectors.
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(MetricsError::ZeroVector);
    }
    Ok(dot / (na.sqrt() * nb.sqrt()))
}

/// Affinely maps `values` onto `[lo, hi]`. Constant input maps to the midpoint.
pub fn min_max_scale(values: &[f64], lo: f64, hi: f64) -> Result<Vec<f64>, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if lo.is_nan() || hi.is_nan() || lo >= hi {
        return Err(MetricsError::InvalidInterval { lo, hi });
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return Ok(vec![(lo + hi) / 2.0; values.len()]);
    }
    let span = max - min;
    let width = hi - lo;
    Ok(values
        .iter()
        .map(|&v| {
            if v == max {
                hi
            } else {
                lo + (v - min) / span * width
            }
        })
        .collect())
}

/// Gold-score display range used for scaled predictions.
pub const SCALED_RANGE: (f64, f64) = (0.5, 5.5);

fn check_pair(x: &[f64], y: &[f64]) -> Result<(), MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(MetricsError::TooFewSamples(x.len()));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Pearson product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    check_pair(x, y)?;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    // equal spreads divide exactly, so identical inputs give exactly 1
    let denom = if sxx == syy { sxx } else { sxx.sqrt() * syy.sqrt() };
    Ok((sxy / denom).clamp(-1.0, 1.0))
}

/// 1-based fractional ranks; ties share the average of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end (0-based) share rank mean(start+1..=end)
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation with average-rank tie handling.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    check_pair(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Homogeneity, completeness and V-measure of `pred` against `gold`.
///
/// Invariant under any renaming of gold labels or cluster ids.
pub fn v_measure<G, P>(gold: &[G], pred: &[P]) -> Result<VMeasureReport, MetricsError>
where
    G: Hash + Eq,
    P: Hash + Eq,
{
    if gold.len() != pred.len() {
        return Err(MetricsError::LengthMismatch {
            left: gold.len(),
            right: pred.len(),
        });
    }
    if gold.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let n = gold.len() as f64;

    let mut class_ids: HashMap<&G, usize> = HashMap::new();
    let mut cluster_ids: HashMap<&P, usize> = HashMap::new();
    // ordered so the float sums below are reproducible run to run
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (g, p) in gold.iter().zip(pred) {
        let next = class_ids.len();
        let c = *class_ids.entry(g).or_insert(next);
        let next = cluster_ids.len();
        let k = *cluster_ids.entry(p).or_insert(next);
        *joint.entry((c, k)).or_insert(0) += 1;
    }
    let mut class_sizes = vec![0usize; class_ids.len()];
    let mut cluster_sizes = vec![0usize; cluster_ids.len()];
    for (&(c, k), &count) in &joint {
        class_sizes[c] += count;
        cluster_sizes[k] += count;
    }

    let h_c = entropy(class_sizes.iter().copied(), n);
    let h_k = entropy(cluster_sizes.iter().copied(), n);
    let (mut h_c_given_k, mut h_k_given_c) = (0.0, 0.0);
    for (&(c, k), &count) in &joint {
        let p = count as f64 / n;
        h_c_given_k -= p * (count as f64 / cluster_sizes[k] as f64).ln();
        h_k_given_c -= p * (count as f64 / class_sizes[c] as f64).ln();
    }

    let homogeneity = if h_c == 0.0 { 1.0 } else { 1.0 - h_c_given_k / h_c };
    let completeness = if h_k == 0.0 { 1.0 } else { 1.0 - h_k_given_c / h_k };
    let v = if homogeneity + completeness == 0.0 {
        0.0
    } else {
        2.0 * homogeneity * completeness / (homogeneity + completeness)
    };
    Ok(VMeasureReport {
        homogeneity,
        completeness,
        v_measure: v,
    })
}
