//! Synthetic corpora with known geometry, embedded through the mock backend.
//!
//! Every vector is `center + ε·mock` with `‖mock‖ = 1`, so each direction
//! moves by at most `asin(ε)` and any pairwise cosine by at most `2·asin(ε)`.
//! The constructions keep their intended ordering with that much slack.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::data::{ClusterRecord, CstsRecord, Split};
use super::HarnessError;
use crate::backend::{BackendConfig, Embedder, MockBackend, PostMixBackend};
use crate::prompting::ConditionalPrompt;

const COSINE_SPAN: (f64, f64) = (-0.9, 0.9);
const CONDITIONS: [&str; 3] = ["the topic", "the tone", "the physical actions"];

/// Largest C-STS construction whose neighbouring target cosines stay more
/// than `4·asin(ε)` apart at the default ε.
pub const MAX_CSTS_PAIRS: usize = 40;

fn unit(dim: usize, axis: usize) -> Vec<f32> {
    let mut v = vec![0.0; dim];
    v[axis] = 1.0;
    v
}

/// C-STS pairs whose cosine, under the favored template, is a strictly
/// increasing function of gold. Every other template sees the reverse order.
#[derive(Debug, Clone)]
pub struct CstsConstruction {
    pub records: Vec<CstsRecord>,
    /// Template the geometry is aligned with; `None` aligns all templates.
    pub favored_template: Option<String>,
    seed: u64,
}

impl CstsConstruction {
    /// `n` pairs with distinct gold scores spread over `[1, 5]`, in shuffled order.
    pub fn new(n: usize, seed: u64) -> Result<Self, HarnessError> {
        if !(2..=MAX_CSTS_PAIRS).contains(&n) {
            return Err(HarnessError::InvalidArgument(format!(
                "synthetic C-STS size must be within 2..={MAX_CSTS_PAIRS}, got {n}"
            )));
        }
        let mut golds: Vec<f64> = (0..n).map(|i| 1.0 + 4.0 * i as f64 / (n - 1) as f64).collect();
        golds.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let records = golds
            .into_iter()
            .enumerate()
            .map(|(i, gold)| CstsRecord {
                text1: format!("Pair {i}: the first sentence."),
                text2: format!("Pair {i}: the second sentence."),
                condition: CONDITIONS[i % CONDITIONS.len()].to_owned(),
                gold,
                split: Some(Split::Validation),
            })
            .collect();
        Ok(Self {
            records,
            favored_template: None,
            seed,
        })
    }

    pub fn favoring(mut self, template_id: &str) -> Self {
        self.favored_template = Some(template_id.to_owned());
        self
    }

    /// Target cosine of a gold score under the aligned geometry.
    pub fn target_cosine(gold: f64) -> f64 {
        COSINE_SPAN.0 + (COSINE_SPAN.1 - COSINE_SPAN.0) * (gold - 1.0) / 4.0
    }

    /// Embedder over a post-mixed mock of dimension `dim`.
    pub fn embedder(&self, dim: usize) -> Result<Embedder, HarnessError> {
        let mock = MockBackend::new(dim, self.seed)?;
        let mut first = HashSet::new();
        let mut second: HashMap<String, f64> = HashMap::new();
        for r in &self.records {
            first.insert(r.text1.clone());
            second.insert(r.text2.clone(), Self::target_cosine(r.gold));
        }
        let favored = self.favored_template.clone();
        let center = move |p: &ConditionalPrompt| {
            if first.contains(p.text()) {
                return Some(unit(dim, 0));
            }
            let mut c = *second.get(p.text())?;
            if favored.as_deref().is_some_and(|f| f != p.template_id()) {
                c = -c;
            }
            let mut v = vec![0.0f32; dim];
            v[0] = c as f32;
            v[1] = (1.0 - c * c).sqrt() as f32;
            Some(v)
        };
        let backend = PostMixBackend::new(mock, PostMixBackend::DEFAULT_EPSILON, center);
        let favored = self.favored_template.as_deref().unwrap_or("any");
        let mut config = BackendConfig::mock(dim, self.seed);
        config.model_id = format!("synthetic-csts-n{}-d{dim}-s{}-{favored}", self.records.len(), self.seed);
        Ok(Embedder::with_backend(config, Box::new(backend)))
    }
}

/// Labelled texts that form one tight blob per label under the favored
/// condition, and unstructured noise under any other condition.
#[derive(Debug, Clone)]
pub struct ClusterConstruction {
    pub records: Vec<ClusterRecord>,
    pub labels: Vec<String>,
    /// Condition the blobs appear under; `None` means every condition.
    pub favored_condition: Option<String>,
    seed: u64,
}

impl ClusterConstruction {
    pub fn new(labels: &[&str], per_label: usize, seed: u64) -> Result<Self, HarnessError> {
        if labels.is_empty() || per_label == 0 {
            return Err(HarnessError::InvalidArgument(
                "synthetic corpus needs at least one label and one text per label".into(),
            ));
        }
        let mut records = Vec::with_capacity(labels.len() * per_label);
        for i in 0..per_label {
            for label in labels {
                records.push(ClusterRecord {
                    text: format!("Message {i} written in {label}."),
                    label: (*label).to_owned(),
                    split: Some(Split::Validation),
                });
            }
        }
        Ok(Self {
            records,
            labels: labels.iter().map(|l| (*l).to_owned()).collect(),
            favored_condition: None,
            seed,
        })
    }

    pub fn favoring(mut self, condition: &str) -> Self {
        self.favored_condition = Some(condition.to_owned());
        self
    }

    /// Embedder over a post-mixed mock; `dim` must be at least the label count.
    pub fn embedder(&self, dim: usize) -> Result<Embedder, HarnessError> {
        if dim < self.labels.len() {
            return Err(HarnessError::InvalidArgument(format!(
                "dimension {dim} cannot hold {} orthogonal blob centers",
                self.labels.len()
            )));
        }
        let mock = MockBackend::new(dim, self.seed)?;
        let axis: HashMap<&str, usize> = self.labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let by_text: HashMap<String, usize> =
            self.records.iter().map(|r| (r.text.clone(), axis[r.label.as_str()])).collect();
        let favored = self.favored_condition.clone();
        let center = move |p: &ConditionalPrompt| {
            if favored.as_deref().is_some_and(|f| f != p.condition()) {
                return None;
            }
            by_text.get(p.text()).map(|&a| unit(dim, a))
        };
        let backend = PostMixBackend::new(mock, PostMixBackend::DEFAULT_EPSILON, center);
        let favored = self.favored_condition.as_deref().unwrap_or("any").replace(' ', "_");
        let mut config = BackendConfig::mock(dim, self.seed);
        config.model_id = format!(
            "synthetic-blobs-k{}-n{}-d{dim}-s{}-{favored}",
            self.labels.len(),
            self.records.len(),
            self.seed
        );
        Ok(Embedder::with_backend(config, Box::new(backend)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::cosine;
    use crate::prompting::registry;

    #[test]
    fn cosines_follow_gold() {
        let c = CstsConstruction::new(MAX_CSTS_PAIRS, 3).unwrap();
        let e = c.embedder(32).unwrap();
        let t = &registry()[8];
        let mut pairs: Vec<(f64, f64)> = c
            .records
            .iter()
            .map(|r| {
                let a = e.embed(&t.render(&r.text1, &r.condition).unwrap()).unwrap();
                let b = e.embed(&t.render(&r.text2, &r.condition).unwrap()).unwrap();
                (r.gold, cosine(a.embedding.as_slice(), b.embedding.as_slice()).unwrap())
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in pairs.windows(2) {
            assert!(w[1].1 > w[0].1);
        }
        for (gold, cos) in &pairs {
            assert!((cos - CstsConstruction::target_cosine(*gold)).abs() <= 2.0 * 0.01f64.asin() + 1e-6);
        }
    }

    #[test]
    fn size_limits() {
        assert!(CstsConstruction::new(1, 0).is_err());
        assert!(CstsConstruction::new(MAX_CSTS_PAIRS + 1, 0).is_err());
        assert!(ClusterConstruction::new(&["a", "b", "c"], 2, 0).unwrap().embedder(2).is_err());
    }
}
