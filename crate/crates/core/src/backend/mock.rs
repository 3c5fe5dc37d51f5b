//! Offline backends: a hash-seeded Gaussian mock, and a wrapper that shifts
//! mock vectors onto caller-chosen centers to build corpora with known
//! geometry.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use super::{Backend, BackendError, EmbedOptions, EmbedResult, EmbeddingVector};
use crate::prompting::ConditionalPrompt;

pub const MOCK_MODEL_ID: &str = "mock";

/// Deterministic stand-in for a model.
///
/// The SHA-256 of `(seed, rendered prompt)` seeds a ChaCha8 stream; `dim`
/// standard-normal draws are L2-normalized into the embedding, and the first
/// eight hex digits of the hash become the generated word.
pub fn mock_embed(prompt: &ConditionalPrompt, dim: usize, seed: u64) -> Result<EmbedResult, BackendError> {
    if dim < 2 {
        return Err(BackendError::Config(format!("mock dimension must be at least 2, got {dim}")));
    }
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(prompt.rendered().as_bytes());
    let digest: [u8; 32] = h.finalize().into();

    let mut rng = ChaCha8Rng::from_seed(digest);
    let draws: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = draws.iter().map(|x| x * x).sum::<f64>().sqrt();
    let values = draws.iter().map(|x| (x / norm) as f32).collect();

    Ok(EmbedResult {
        embedding: EmbeddingVector::new(values)?,
        generated_word: Some(hex::encode(&digest[..4])),
        model_id: MOCK_MODEL_ID.to_owned(),
        layer_index: -1,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct MockBackend {
    dim: usize,
    seed: u64,
}

impl MockBackend {
    pub fn new(dim: usize, seed: u64) -> Result<Self, BackendError> {
        if dim < 2 {
            return Err(BackendError::Config(format!("mock dimension must be at least 2, got {dim}")));
        }
        Ok(Self { dim, seed })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl Backend for MockBackend {
    fn embed(&self, prompt: &ConditionalPrompt, options: &EmbedOptions) -> Result<EmbedResult, BackendError> {
        let mut r = mock_embed(prompt, self.dim, self.seed)?;
        r.layer_index = options.layer_index;
        Ok(r)
    }
}

type CenterFn = dyn Fn(&ConditionalPrompt) -> Option<Vec<f32>> + Send + Sync;

/// `center(prompt) + epsilon * mock_embed(prompt)`.
///
/// Prompts for which `center` returns `None` get the bare mock vector scaled
/// by `epsilon`.
pub struct PostMixBackend {
    mock: MockBackend,
    epsilon: f32,
    center: Box<CenterFn>,
}

impl PostMixBackend {
    pub const DEFAULT_EPSILON: f32 = 0.01;

    pub fn new<F>(mock: MockBackend, epsilon: f32, center: F) -> Self
    where
        F: Fn(&ConditionalPrompt) -> Option<Vec<f32>> + Send + Sync + 'static,
    {
        Self {
            mock,
            epsilon,
            center: Box::new(center),
        }
    }
}

impl Backend for PostMixBackend {
    fn embed(&self, prompt: &ConditionalPrompt, options: &EmbedOptions) -> Result<EmbedResult, BackendError> {
        let mut r = self.mock.embed(prompt, options)?;
        let noise = r.embedding.as_slice();
        let values: Vec<f32> = match (self.center)(prompt) {
            Some(c) => {
                if c.len() != noise.len() {
                    return Err(BackendError::DimensionMismatch {
                        expected: noise.len(),
                        found: c.len(),
                    });
                }
                c.iter().zip(noise).map(|(c, n)| c + self.epsilon * n).collect()
            }
            None => noise.iter().map(|n| self.epsilon * n).collect(),
        };
        r.embedding = EmbeddingVector::new(values)?;
        Ok(r)
    }
}
