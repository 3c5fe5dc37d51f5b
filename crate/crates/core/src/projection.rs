//! Exact t-SNE to two dimensions, plus TSV and SVG emitters for labeled
//! scatter plots of the projected embeddings.
//!
//! Input affinities come from a per-point Gaussian whose bandwidth is found by
//! bisection so that the conditional distribution has the requested perplexity.
//! The low-dimensional similarities use a Student-t kernel with one degree of
//! freedom, and the layout is optimized by gradient descent on KL(P || Q) with
//! momentum, per-coordinate gains and early exaggeration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProjectionError {
    #[error("t-SNE needs at least two points, got {0}")]
    DegenerateInput(usize),
    #[error("perplexity {perplexity} is too large for {neighbors} neighbors")]
    PerplexityTooLarge { perplexity: f64, neighbors: usize },
    #[error("perplexity must be positive and finite, got {0}")]
    InvalidPerplexity(f64),
    #[error("distance row is empty")]
    NonPositiveDistanceCount,
    #[error("point {index} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value in input")]
    NonFinite,
    #[error("initial layout has {found} rows, expected {expected}")]
    LayoutMismatch { expected: usize, found: usize },
}

/// Target accuracy of the per-row entropy search, in bits.
pub const ENTROPY_TOLERANCE: f64 = 1e-5;
const MAX_BISECTION_STEPS: usize = 50;
// search range for ln(beta * scale)
const LOG_BETA_RANGE: f64 = 40.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    /// Clamped to `(n - 1) / 3` (and at least 1) at run time.
    pub perplexity: f64,
    pub iters: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch_iter: usize,
    pub init_std: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iters: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch_iter: 250,
            init_std: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection2D {
    pub coords: Vec<[f64; 2]>,
    pub kl_initial: f64,
    pub kl_final: f64,
    pub perplexity_used: f64,
}

/// Shannon entropy of a probability row, in bits.
pub fn entropy_bits(row: &[f64]) -> f64 {
    row.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum()
}

/// Gaussian weights for squared distances already shifted to a zero minimum.
/// Returns the normalized row and its entropy in bits.
fn gaussian_row(shifted: &[f64], beta: f64) -> (Vec<f64>, f64) {
    let weights: Vec<f64> = shifted.iter().map(|&d| (-beta * d).exp()).collect();
    let z: f64 = weights.iter().sum();
    let weighted: f64 = weights.iter().zip(shifted).map(|(w, d)| w * d).sum();
    let h_nats = z.ln() + beta * weighted / z;
    (weights.into_iter().map(|w| w / z).collect(), h_nats / std::f64::consts::LN_2)
}

/// Finds the conditional distribution `p_j ∝ exp(-d_j² / 2σ²)` over one point's
/// neighbors whose perplexity is `target_perplexity`.
///
/// `distances_row` holds Euclidean distances to every other point. Zero
/// distances are allowed. When the target exceeds the number of neighbors the
/// uniform row (the maximum-entropy answer) is returned.
pub fn perplexity_calibrate(distances_row: &[f64], target_perplexity: f64) -> Result<Vec<f64>, ProjectionError> {
    let m = distances_row.len();
    if m == 0 {
        return Err(ProjectionError::NonPositiveDistanceCount);
    }
    if !target_perplexity.is_finite() || target_perplexity <= 0.0 {
        return Err(ProjectionError::InvalidPerplexity(target_perplexity));
    }
    if target_perplexity >= (m + 1) as f64 {
        return Err(ProjectionError::PerplexityTooLarge {
            perplexity: target_perplexity,
            neighbors: m,
        });
    }
    if distances_row.iter().any(|d| !d.is_finite()) {
        return Err(ProjectionError::NonFinite);
    }
    if m == 1 {
        return Ok(vec![1.0]);
    }

    let squared: Vec<f64> = distances_row.iter().map(|d| d * d).collect();
    let min = squared.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = squared.iter().map(|d| d - min).collect();
    let scale = shifted.iter().copied().fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(vec![1.0 / m as f64; m]);
    }

    let target = target_perplexity.log2();
    // entropy decreases as beta grows
    let (mut lo, mut hi) = (-LOG_BETA_RANGE, LOG_BETA_RANGE);
    let beta_at = |t: f64| t.exp() / scale;
    let (mut best_row, mut best_gap) = (Vec::new(), f64::INFINITY);
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let (row, h) = gaussian_row(&shifted, beta_at(mid));
        let gap = h - target;
        if gap.abs() < best_gap {
            best_gap = gap.abs();
            best_row = row;
        }
        if gap.abs() < ENTROPY_TOLERANCE * 1e-4 {
            break;
        }
        if gap > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best_row)
}

/// Symmetrized input affinities, stored densely (row-major, n × n).
#[derive(Debug, Clone, PartialEq)]
pub struct JointAffinities {
    n: usize,
    values: Vec<f64>,
}

impl JointAffinities {
    /// Builds from a dense row-major matrix. The caller is responsible for
    /// symmetry, a zero diagonal and unit total mass.
    pub fn from_dense(n: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n * n, "dense affinity matrix must be n × n");
        Self { n, values }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

fn validate_points<P, T>(points: &[P]) -> Result<Vec<Vec<f64>>, ProjectionError>
where
    P: AsRef<[T]>,
    T: Copy + Into<f64>,
{
    if points.len() < 2 {
        return Err(ProjectionError::DegenerateInput(points.len()));
    }
    let dim = points[0].as_ref().len();
    points
        .iter()
        .enumerate()
        .map(|(index, p)| {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(ProjectionError::DimensionMismatch {
                    index,
                    expected: dim,
                    found: p.len(),
                });
            }
            let v: Vec<f64> = p.iter().map(|&x| x.into()).collect();
            if v.iter().any(|x| !x.is_finite()) {
                return Err(ProjectionError::NonFinite);
            }
            Ok(v)
        })
        .collect()
}

/// Per-point conditional rows `p_{j|i}` (diagonal left at zero).
pub fn conditional_affinities<P, T>(points: &[P], perplexity: f64) -> Result<Vec<Vec<f64>>, ProjectionError>
where
    P: AsRef<[T]>,
    T: Copy + Into<f64>,
{
    let data = validate_points(points)?;
    let n = data.len();
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let dists: Vec<f64> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                data[i]
                    .iter()
                    .zip(&data[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        let cond = perplexity_calibrate(&dists, perplexity)?;
        let mut row = Vec::with_capacity(n);
        row.extend_from_slice(&cond[..i]);
        row.push(0.0);
        row.extend_from_slice(&cond[i..]);
        rows.push(row);
    }
    Ok(rows)
}

/// `P_ij = (p_{j|i} + p_{i|j}) / 2n`.
pub fn symmetrize(conditional: &[Vec<f64>]) -> JointAffinities {
    let n = conditional.len();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                values[i * n + j] = (conditional[i][j] + conditional[j][i]) / (2.0 * n as f64);
            }
        }
    }
    JointAffinities { n, values }
}

fn student_weights(y: &[[f64; 2]]) -> (Vec<f64>, f64) {
    let n = y.len();
    let mut w = vec![0.0; n * n];
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let v = 1.0 / (1.0 + dx * dx + dy * dy);
            w[i * n + j] = v;
            w[j * n + i] = v;
            total += 2.0 * v;
        }
    }
    (w, total)
}

/// KL(P || Q) for layout `y`.
pub fn kl_divergence(p: &JointAffinities, y: &[[f64; 2]]) -> f64 {
    let n = p.n;
    let (w, total) = student_weights(y);
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            let pij = p.values[i * n + j];
            if i != j && pij > 0.0 {
                let qij = (w[i * n + j] / total).max(f64::MIN_POSITIVE);
                kl += pij * (pij / qij).ln();
            }
        }
    }
    kl
}

fn gradient_scaled(p: &JointAffinities, y: &[[f64; 2]], exaggeration: f64) -> Vec<[f64; 2]> {
    let n = p.n;
    let (w, total) = student_weights(y);
    let mut grad = vec![[0.0; 2]; n];
    for i in 0..n {
        let (mut gx, mut gy) = (0.0, 0.0);
        for j in 0..n {
            if i == j {
                continue;
            }
            let wij = w[i * n + j];
            let coeff = (exaggeration * p.values[i * n + j] - wij / total) * wij;
            gx += coeff * (y[i][0] - y[j][0]);
            gy += coeff * (y[i][1] - y[j][1]);
        }
        grad[i] = [4.0 * gx, 4.0 * gy];
    }
    grad
}

/// Analytic gradient of [`kl_divergence`] with respect to every coordinate.
pub fn kl_gradient(p: &JointAffinities, y: &[[f64; 2]]) -> Vec<[f64; 2]> {
    gradient_scaled(p, y, 1.0)
}

fn center(y: &mut [[f64; 2]]) {
    let n = y.len() as f64;
    let mx = y.iter().map(|r| r[0]).sum::<f64>() / n;
    let my = y.iter().map(|r| r[1]).sum::<f64>() / n;
    for r in y.iter_mut() {
        r[0] -= mx;
        r[1] -= my;
    }
}

/// Seeded Gaussian starting layout.
pub fn initial_layout(n: usize, std: f64, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x: f64 = StandardNormal.sample(&mut rng);
            let y: f64 = StandardNormal.sample(&mut rng);
            [x * std, y * std]
        })
        .collect()
}

/// Perplexity actually used for `n` points.
pub fn effective_perplexity(requested: f64, n: usize) -> f64 {
    requested.min((n as f64 - 1.0) / 3.0).max(1.0)
}

/// Projects `points` to two dimensions.
pub fn tsne<P, T>(points: &[P], config: &TsneConfig) -> Result<Projection2D, ProjectionError>
where
    P: AsRef<[T]>,
    T: Copy + Into<f64>,
{
    let init = initial_layout(points.len(), config.init_std, config.seed);
    tsne_from_layout(points, config, init)
}

/// Like [`tsne`] but starting from a caller-supplied layout.
pub fn tsne_from_layout<P, T>(
    points: &[P],
    config: &TsneConfig,
    init: Vec<[f64; 2]>,
) -> Result<Projection2D, ProjectionError>
where
    P: AsRef<[T]>,
    T: Copy + Into<f64>,
{
    if !config.perplexity.is_finite() || config.perplexity <= 0.0 {
        return Err(ProjectionError::InvalidPerplexity(config.perplexity));
    }
    if points.len() < 2 {
        return Err(ProjectionError::DegenerateInput(points.len()));
    }
    let n = points.len();
    if init.len() != n {
        return Err(ProjectionError::LayoutMismatch {
            expected: n,
            found: init.len(),
        });
    }
    if init.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ProjectionError::NonFinite);
    }
    let perplexity = effective_perplexity(config.perplexity, n);
    let p = symmetrize(&conditional_affinities(points, perplexity)?);

    let mut y = init;
    center(&mut y);
    let kl_initial = kl_divergence(&p, &y);
    let mut update = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];

    for iter in 0..config.iters {
        let exaggeration = if iter < config.exaggeration_iters {
            config.early_exaggeration
        } else {
            1.0
        };
        let momentum = if iter < config.momentum_switch_iter {
            config.initial_momentum
        } else {
            config.final_momentum
        };
        let grad = gradient_scaled(&p, &y, exaggeration);
        for i in 0..n {
            for d in 0..2 {
                let g = grad[i][d];
                let gain = &mut gains[i][d];
                *gain = if (g > 0.0) != (update[i][d] > 0.0) {
                    *gain + 0.2
                } else {
                    (*gain * 0.8).max(0.01)
                };
                update[i][d] = momentum * update[i][d] - config.learning_rate * *gain * g;
                y[i][d] += update[i][d];
            }
        }
        center(&mut y);
    }

    let kl_final = kl_divergence(&p, &y);
    Ok(Projection2D {
        coords: y,
        kl_initial,
        kl_final,
        perplexity_used: perplexity,
    })
}

/// One row of a projection dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub x: f64,
    pub y: f64,
    pub label: String,
    pub generated_word: Option<String>,
    pub condition: String,
}

fn tsv_field(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

/// Writes `x<TAB>y<TAB>label<TAB>generated_word<TAB>condition` with a header line.
pub fn write_tsv<W: Write>(mut out: W, points: &[ProjectedPoint]) -> io::Result<()> {
    writeln!(out, "x\ty\tlabel\tgenerated_word\tcondition")?;
    for p in points {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            p.x,
            p.y,
            tsv_field(&p.label),
            tsv_field(p.generated_word.as_deref().unwrap_or("")),
            tsv_field(&p.condition)
        )?;
    }
    Ok(())
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22",
    "#17becf",
];

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Static scatter plot: one color per condition, each point annotated with its
/// generated word (or its label when no word is available).
pub fn render_svg(points: &[ProjectedPoint], width: u32, height: u32) -> String {
    let margin = 40.0;
    let legend_h = 20.0;
    let (w, h) = (f64::from(width), f64::from(height));
    let fold = |f: fn(&ProjectedPoint) -> f64| {
        points.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        })
    };
    let (xmin, xmax) = fold(|p| p.x);
    let (ymin, ymax) = fold(|p| p.y);
    let span = |lo: f64, hi: f64| if hi > lo { hi - lo } else { 1.0 };
    let sx = (w - 2.0 * margin) / span(xmin, xmax);
    let sy = (h - 2.0 * margin - legend_h) / span(ymin, ymax);

    let mut colors: BTreeMap<&str, &str> = BTreeMap::new();
    for p in points {
        let next = PALETTE[colors.len() % PALETTE.len()];
        colors.entry(p.condition.as_str()).or_insert(next);
    }

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, (cond, color)) in colors.iter().enumerate() {
        let x = margin + i as f64 * 160.0;
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="5" fill="{color}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            x,
            margin * 0.5,
            x + 8.0,
            margin * 0.5 + 4.0,
            xml_escape(cond)
        );
    }
    for p in points {
        let cx = margin + (p.x - xmin) * sx;
        // SVG y grows downwards
        let cy = h - margin - (p.y - ymin) * sy;
        let color = colors[p.condition.as_str()];
        let text = p.generated_word.as_deref().unwrap_or(&p.label);
        let _ = writeln!(
            svg,
            r##"<circle cx="{cx:.2}" cy="{cy:.2}" r="4" fill="{color}" fill-opacity="0.8"/><text x="{:.2}" y="{:.2}" fill="#333">{}</text>"##,
            cx + 6.0,
            cy + 4.0,
            xml_escape(text)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
