//! K-means with k-means++ seeding and Lloyd iteration, plus the multi-seed
//! V-measure protocol (one run per seed, scores averaged).

use std::hash::Hash;
use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{self, MetricsError, VMeasureReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusteringError {
    #[error("k = {k} exceeds the number of points ({n})")]
    KTooLarge { k: usize, n: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("no points to cluster")]
    EmptyInput,
    #[error("point {index} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("point {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("at least one seed is required")]
    NoSeeds,
    #[error("n_init must be at least 1")]
    ZeroRestarts,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iters: usize,
    /// Stop once the relative inertia improvement drops below this.
    pub tol: f64,
    pub seed: u64,
    /// L2-normalize points before clustering.
    pub normalize: bool,
    /// Independent k-means++ restarts; the lowest-inertia run is kept.
    pub n_init: usize,
    /// Polish each Lloyd result with single-point transfers.
    pub refine: bool,
}

impl KMeansConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            max_iters: 300,
            tol: 1e-6,
            seed: 0,
            normalize: true,
            n_init: 10,
            refine: true,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_normalize(mut self, normalize: bool) -> Self {
        self.normalize = normalize;
        self
    }

    pub fn with_n_init(mut self, n_init: usize) -> Self {
        self.n_init = n_init;
        self
    }

    pub fn with_refine(mut self, refine: bool) -> Self {
        self.refine = refine;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared Euclidean distances to the assigned centroid.
    pub inertia: f64,
    pub iterations_run: usize,
    /// Inertia after every assignment step of the kept run, starting with
    /// the seeding.
    pub inertia_trace: Vec<f64>,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn prepare<P, T>(points: &[P], normalize: bool) -> Result<Vec<Vec<f64>>, ClusteringError>
where
    P: AsRef<[T]>,
    T: Copy + Into<f64>,
{
    let first = points.first().ok_or(ClusteringError::EmptyInput)?;
    let dim = first.as_ref().len();
    points
        .iter()
        .enumerate()
        .map(|(index, p)| {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(ClusteringError::DimensionMismatch {
                    index,
                    expected: dim,
                    found: p.len(),
                });
            }
            let mut v: Vec<f64> = p.iter().map(|&x| x.into()).collect();
            if v.iter().any(|x| !x.is_finite()) {
                return Err(ClusteringError::NonFinite(index));
            }
            if normalize {
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    v.iter_mut().for_each(|x| *x /= norm);
                }
            }
            Ok(v)
        })
        .collect()
}

/// k-means++ seeding. Returns the indices of the chosen centers.
///
/// `next_unit` must yield draws from `[0, 1)`. The first center is picked
/// uniformly; each further center with probability proportional to its squared
/// distance to the nearest center chosen so far.
pub fn kmeans_plus_plus(points: &[Vec<f64>], k: usize, mut next_unit: impl FnMut() -> f64) -> Vec<usize> {
    let n = points.len();
    if n == 0 || k == 0 {
        return Vec::new();
    }
    let uniform = |u: f64| ((u * n as f64) as usize).min(n - 1);
    let first = uniform(next_unit());
    let mut chosen = vec![first];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &points[first])).collect();

    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let u = next_unit();
        let pick = if total > 0.0 {
            let target = u * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                acc += w;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            // every point coincides with a chosen center
            let start = uniform(u);
            (0..n)
                .map(|off| (start + off) % n)
                .find(|i| !chosen.contains(i))
                .unwrap_or(start)
        };
        chosen.push(pick);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(dist2(p, &points[pick]));
        }
    }
    chosen
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    let mut labels = Vec::with_capacity(points.len());
    let mut dists = Vec::with_capacity(points.len());
    for p in points {
        let (best, d) = centroids
            .iter()
            .enumerate()
            .map(|(j, c)| (j, dist2(p, c)))
            .fold((0, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
        labels.push(best);
        dists.push(d);
    }
    (labels, dists)
}

fn means(points: &[Vec<f64>], labels: &[usize], k: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        sums[l].iter_mut().zip(p).for_each(|(s, x)| *s += x);
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|x| *x /= c as f64);
        }
    }
    (sums, counts)
}

/// Recomputes centroids as cluster means. Each empty cluster takes over the
/// point farthest from its current centroid (drawn from clusters with at
/// least two members).
fn update_centroids(points: &[Vec<f64>], labels: &[usize], k: usize) -> Vec<Vec<f64>> {
    let (mut centroids, mut counts) = means(points, labels, k);
    if counts.iter().all(|&c| c > 0) {
        return centroids;
    }
    let mut labels = labels.to_vec();
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        let donor = (0..points.len())
            .filter(|&i| counts[labels[i]] >= 2)
            .map(|i| (i, dist2(&points[i], &centroids[labels[i]])))
            .fold(None, |acc: Option<(usize, f64)>, cur| match acc {
                Some(a) if a.1 >= cur.1 => Some(a),
                _ => Some(cur),
            });
        let Some((i, _)) = donor else { break };
        counts[labels[i]] -= 1;
        labels[i] = empty;
        counts[empty] = 1;
        centroids[empty] = points[i].clone();
    }
    means(points, &labels, k).0
}

/// Runs k-means on `points`. All `n_init` k-means++ seedings come from one
/// stream keyed by `config.seed`; the run with the lowest final inertia wins,
/// the earliest on ties.
pub fn kmeans<P, T>(points: &[P], config: &KMeansConfig) -> Result<KMeansResult, ClusteringError>
where
    P: AsRef<[T]>,
    T: Copy + Into<f64>,
{
    if config.k == 0 {
        return Err(ClusteringError::ZeroK);
    }
    if config.n_init == 0 {
        return Err(ClusteringError::ZeroRestarts);
    }
    let data = prepare(points, config.normalize)?;
    if config.k > data.len() {
        return Err(ClusteringError::KTooLarge {
            k: config.k,
            n: data.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..config.n_init {
        let seeds = kmeans_plus_plus(&data, config.k, || rng.random::<f64>());
        let run = lloyd(&data, seeds, config);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("n_init is positive"))
}

fn lloyd(data: &[Vec<f64>], seeds: Vec<usize>, config: &KMeansConfig) -> KMeansResult {
    let mut centroids: Vec<Vec<f64>> = seeds.iter().map(|&i| data[i].clone()).collect();
    let (mut labels, dists) = assign(data, &centroids);
    let mut inertia: f64 = dists.iter().sum();
    let mut trace = vec![inertia];
    let mut iterations = 0;

    while iterations < config.max_iters {
        iterations += 1;
        let next_centroids = update_centroids(data, &labels, config.k);
        let (next_labels, dists) = assign(data, &next_centroids);
        let next_inertia: f64 = dists.iter().sum();
        trace.push(next_inertia);

        let changed = next_labels != labels;
        let improvement = if inertia > 0.0 {
            (inertia - next_inertia) / inertia
        } else {
            0.0
        };
        centroids = next_centroids;
        labels = next_labels;
        inertia = next_inertia;
        if !changed || inertia == 0.0 || improvement < config.tol {
            break;
        }
    }

    if config.refine {
        let passes = hartigan(data, &mut labels, &mut centroids, config.max_iters);
        for inertia in passes {
            trace.push(inertia);
        }
        inertia = *trace.last().expect("trace starts with the seeding");
    }

    KMeansResult {
        assignments: labels,
        centroids,
        inertia,
        iterations_run: iterations,
        inertia_trace: trace,
    }
}

/// Single-point transfers: moves a point from cluster `a` to `b` whenever
/// `n_b/(n_b+1)·|x-c_b|² < n_a/(n_a-1)·|x-c_a|²`, i.e. whenever the move
/// strictly lowers the inertia. Returns the inertia after every pass that
/// moved something. A fixed point is also a Lloyd fixed point.
fn hartigan(data: &[Vec<f64>], labels: &mut [usize], centroids: &mut Vec<Vec<f64>>, max_passes: usize) -> Vec<f64> {
    let k = centroids.len();
    let (mut c, mut counts) = means(data, labels, k);
    let mut trace = Vec::new();
    let mut current = sse(data, labels, &c);
    for _ in 0..max_passes {
        let snapshot = labels.to_vec();
        let mut moved = false;
        for (i, x) in data.iter().enumerate() {
            let a = labels[i];
            if counts[a] < 2 {
                continue;
            }
            let na = counts[a] as f64;
            let remove = na / (na - 1.0) * dist2(x, &c[a]);
            let mut target = None;
            let mut best = remove;
            for b in (0..k).filter(|&b| b != a) {
                let nb = counts[b] as f64;
                let add = nb / (nb + 1.0) * dist2(x, &c[b]);
                if add < best {
                    best = add;
                    target = Some(b);
                }
            }
            // guard against moves that only win by rounding
            let Some(b) = target else { continue };
            if remove - best <= 1e-12 * remove.max(f64::MIN_POSITIVE) {
                continue;
            }
            let nb = counts[b] as f64;
            c[a].iter_mut().zip(x).for_each(|(m, v)| *m = (*m * na - v) / (na - 1.0));
            c[b].iter_mut().zip(x).for_each(|(m, v)| *m = (*m * nb + v) / (nb + 1.0));
            counts[a] -= 1;
            counts[b] += 1;
            labels[i] = b;
            moved = true;
        }
        if !moved {
            break;
        }
        let (next_c, next_counts) = means(data, labels, k);
        let next = sse(data, labels, &next_c);
        if next >= current {
            labels.copy_from_slice(&snapshot);
            break;
        }
        c = next_c;
        counts = next_counts;
        current = next;
        trace.push(current);
    }
    if !trace.is_empty() {
        *centroids = means(data, labels, k).0;
    }
    trace
}

fn sse(data: &[Vec<f64>], labels: &[usize], centroids: &[Vec<f64>]) -> f64 {
    data.iter().zip(labels).map(|(x, &l)| dist2(x, &centroids[l])).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub scores: VMeasureReport,
    pub assignments: Vec<usize>,
    pub inertia: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiSeedReport {
    /// Component-wise arithmetic mean over the seeds.
    pub mean: VMeasureReport,
    pub runs: Vec<SeedRun>,
}

impl MultiSeedReport {
    pub fn from_runs(runs: Vec<SeedRun>) -> Self {
        let n = runs.len() as f64;
        let avg = |f: fn(&VMeasureReport) -> f64| runs.iter().map(|r| f(&r.scores)).sum::<f64>() / n;
        Self {
            mean: VMeasureReport {
                homogeneity: avg(|s| s.homogeneity),
                completeness: avg(|s| s.completeness),
                v_measure: avg(|s| s.v_measure),
            },
            runs,
        }
    }
}

/// Default seeds of the five-run protocol.
pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

/// Clusters `points` once per seed and averages the V-measure against `gold`.
///
/// `base.seed` is ignored; every other setting is shared by all runs. Seeds run
/// on separate threads.
pub fn multi_seed_cluster<P, T, G>(
    points: &[P],
    gold: &[G],
    base: &KMeansConfig,
    seeds: &[u64],
) -> Result<MultiSeedReport, ClusteringError>
where
    P: AsRef<[T]> + Sync,
    T: Copy + Into<f64>,
    G: Hash + Eq + Sync,
{
    if seeds.is_empty() {
        return Err(ClusteringError::NoSeeds);
    }
    if points.len() != gold.len() {
        return Err(MetricsError::LengthMismatch {
            left: points.len(),
            right: gold.len(),
        }
        .into());
    }
    let results: Vec<Result<SeedRun, ClusteringError>> = thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let config = base.clone().with_seed(seed);
                scope.spawn(move || {
                    let fit = kmeans(points, &config)?;
                    let scores = metrics::v_measure(gold, &fit.assignments)?;
                    Ok(SeedRun {
                        seed,
                        scores,
                        assignments: fit.assignments,
                        inertia: fit.inertia,
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("k-means worker panicked"))
            .collect()
    });
    let runs = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(MultiSeedReport::from_runs(runs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(k: usize) -> KMeansConfig {
        KMeansConfig::new(k).with_normalize(false)
    }

    #[test]
    fn separated_blobs() {
        let pts = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![10.0, 0.0], vec![10.0, 1.0]];
        for seed in 0..10 {
            let r = kmeans(&pts, &raw(2).with_seed(seed)).unwrap();
            assert_eq!(r.assignments[0], r.assignments[1]);
            assert_eq!(r.assignments[2], r.assignments[3]);
            assert_ne!(r.assignments[0], r.assignments[2]);
            assert!((r.inertia - 1.0).abs() < 1e-12);
            let mut cs = r.centroids.clone();
            cs.sort_by(|a, b| a[0].total_cmp(&b[0]));
            assert_eq!(cs, vec![vec![0.0, 0.5], vec![10.0, 0.5]]);
        }
    }

    #[test]
    fn k_equals_n_has_zero_inertia() {
        let pts = vec![vec![1.0f32, 2.0], vec![3.0, -1.0], vec![0.5, 0.5], vec![7.0, 7.0]];
        let r = kmeans(&pts, &raw(4)).unwrap();
        assert_eq!(r.inertia, 0.0);
        let mut ids = r.assignments.clone();
        ids.sort_unstable();
        assert_eq!(ids, vec![0, 1, 2, 3]);
    }

    #[test]
    fn one_dimensional_optimum() {
        let pts: Vec<Vec<f64>> = [1.0, 2.0, 3.0, 4.0].iter().map(|&x| vec![x]).collect();
        let r = kmeans(&pts, &raw(2)).unwrap();
        assert_eq!(r.assignments[0], r.assignments[1]);
        assert_eq!(r.assignments[2], r.assignments[3]);
        assert_ne!(r.assignments[0], r.assignments[2]);
        assert!((r.inertia - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tie_trap_escaped_by_restarts_and_transfers() {
        // seeding at 2 then 1 leaves {1},{2,3,4}: point 2 is equidistant
        // from both centroids, so plain Lloyd stays put at inertia 2
        let pts: Vec<Vec<f64>> = [1.0, 2.0, 3.0, 4.0].iter().map(|&x| vec![x]).collect();
        let single = KMeansConfig {
            n_init: 1,
            refine: false,
            ..raw(2)
        };
        let trapped = lloyd(&prepare(&pts, false).unwrap(), vec![1, 0], &single);
        assert_eq!(trapped.inertia, 2.0);
        let refined = lloyd(&prepare(&pts, false).unwrap(), vec![1, 0], &KMeansConfig { refine: true, ..single });
        assert!((refined.inertia - 1.0).abs() < 1e-12);
        assert!(refined.inertia_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn restarts_keep_the_best_run() {
        let pts: Vec<Vec<f64>> = [0.0, 0.3, 2.0, 2.2, 2.5, 7.0, 7.1, 9.0].iter().map(|&x| vec![x]).collect();
        let one = kmeans(&pts, &raw(3).with_n_init(1).with_refine(false)).unwrap();
        let many = kmeans(&pts, &raw(3).with_n_init(10).with_refine(false)).unwrap();
        assert!(many.inertia <= one.inertia);
        assert_eq!(kmeans(&pts, &raw(3).with_n_init(0)), Err(ClusteringError::ZeroRestarts));
    }

    #[test]
    fn errors() {
        let pts = vec![vec![0.0], vec![1.0]];
        assert_eq!(kmeans(&pts, &raw(3)), Err(ClusteringError::KTooLarge { k: 3, n: 2 }));
        assert_eq!(kmeans(&pts, &raw(0)), Err(ClusteringError::ZeroK));
        let ragged = vec![vec![0.0], vec![1.0, 2.0]];
        assert!(matches!(
            kmeans(&ragged, &raw(1)),
            Err(ClusteringError::DimensionMismatch { index: 1, .. })
        ));
        let empty: Vec<Vec<f64>> = Vec::new();
        assert_eq!(kmeans(&empty, &raw(1)), Err(ClusteringError::EmptyInput));
        let nan = vec![vec![f64::NAN]];
        assert_eq!(kmeans(&nan, &raw(1)), Err(ClusteringError::NonFinite(0)));
    }

    #[test]
    fn plus_plus_with_stubbed_stream() {
        // points on a line: 0, 1, 3, 10
        let pts: Vec<Vec<f64>> = [0.0, 1.0, 3.0, 10.0].iter().map(|&x| vec![x]).collect();
        // first draw 0.3 -> floor(0.3 * 4) = 1 -> center at x = 1.
        // squared distances to it: [1, 0, 4, 81], total 86.
        // second draw 0.05 -> target 4.3 -> cumulative 1, 1, 5 -> index 2.
        let mut draws = [0.3, 0.05].into_iter();
        assert_eq!(kmeans_plus_plus(&pts, 2, || draws.next().unwrap()), vec![1, 2]);

        // same start, draw 0.5 -> target 43 -> cumulative 1, 5, 86 -> index 3.
        let mut draws = [0.3, 0.5].into_iter();
        assert_eq!(kmeans_plus_plus(&pts, 2, || draws.next().unwrap()), vec![1, 3]);

        // third center: after {1, 3} weights are [1, 0, 4, 0], total 5.
        // draw 0.1 -> target 0.5 -> index 0; draw 0.9 -> target 4.5 -> index 2.
        let mut draws = [0.3, 0.5, 0.1].into_iter();
        assert_eq!(kmeans_plus_plus(&pts, 3, || draws.next().unwrap()), vec![1, 3, 0]);
        let mut draws = [0.3, 0.5, 0.9].into_iter();
        assert_eq!(kmeans_plus_plus(&pts, 3, || draws.next().unwrap()), vec![1, 3, 2]);
    }

    #[test]
    fn plus_plus_never_repeats_a_chosen_point_when_distinct() {
        let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
        let mut draws = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0].into_iter();
        let mut chosen = kmeans_plus_plus(&pts, 6, || draws.next().unwrap());
        chosen.sort_unstable();
        assert_eq!(chosen, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn duplicates_are_handled() {
        let pts = vec![vec![1.0, 1.0]; 5];
        let r = kmeans(&pts, &raw(3)).unwrap();
        assert_eq!(r.inertia, 0.0);
        assert!(r.assignments.iter().all(|&a| a < 3));
    }

    #[test]
    fn empty_cluster_repair_keeps_k() {
        // centroids seeded on duplicates would leave a cluster empty
        let labels = vec![0, 0, 0, 0];
        let pts: Vec<Vec<f64>> = [0.0, 1.0, 2.0, 9.0].iter().map(|&x| vec![x]).collect();
        let cs = update_centroids(&pts, &labels, 2);
        assert_eq!(cs[1], vec![9.0]);
        assert_eq!(cs[0], vec![1.0]);
    }

    #[test]
    fn deterministic_per_seed() {
        let pts: Vec<Vec<f64>> = (0..40).map(|i| vec![(i * 37 % 11) as f64, (i * 13 % 7) as f64]).collect();
        let a = kmeans(&pts, &KMeansConfig::new(4).with_seed(9)).unwrap();
        let b = kmeans(&pts, &KMeansConfig::new(4).with_seed(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn multi_seed_protocol() {
        let pts = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![10.0, 0.0], vec![10.0, 1.0]];
        let gold = ["a", "a", "b", "b"];
        let r = multi_seed_cluster(&pts, &gold, &raw(2), &DEFAULT_SEEDS).unwrap();
        assert_eq!(r.runs.len(), 5);
        assert!((r.mean.v_measure - 1.0).abs() < 1e-12);

        let single = multi_seed_cluster(&pts, &gold, &raw(2), &[7]).unwrap();
        assert_eq!(single.mean.v_measure, single.runs[0].scores.v_measure);
        assert_eq!(single.runs[0].seed, 7);

        assert_eq!(
            multi_seed_cluster(&pts, &gold, &raw(2), &[]),
            Err(ClusteringError::NoSeeds)
        );
        let one = multi_seed_cluster(&pts, &gold, &raw(1), &[0]).unwrap();
        assert_eq!(one.mean.v_measure, 0.0);
    }
}
