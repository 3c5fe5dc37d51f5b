//! JSON-over-HTTP client for an inference sidecar.
//!
//! `POST {endpoint}/embed` with a [`WireRequest`]; HTTP 200 carries a
//! [`WireResponse`], any other status a [`WireError`].

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, EmbedOptions, EmbedResult, EmbeddingVector};
use crate::prompting::ConditionalPrompt;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub prompt: String,
    pub layer_index: i32,
    pub generate_word: bool,
    pub max_word_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub embedding: Vec<f64>,
    pub generated_word: Option<String>,
    pub model_id: String,
    pub hidden_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireError {
    pub error: String,
}

pub struct HttpBackend {
    agent: ureq::Agent,
    embed_url: String,
    model_id: String,
}

impl HttpBackend {
    /// `base_url` is the sidecar root; `/embed` is appended. Responses must
    /// report `model_id`, since it is part of every cache key.
    pub fn new(base_url: &str, model_id: &str, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .new_agent();
        Self {
            agent,
            embed_url: format!("{}/embed", base_url.trim_end_matches('/')),
            model_id: model_id.to_owned(),
        }
    }

    pub fn embed_url(&self) -> &str {
        &self.embed_url
    }
}

fn transport_error(e: ureq::Error) -> BackendError {
    match e {
        ureq::Error::Timeout(_)
        | ureq::Error::ConnectionFailed
        | ureq::Error::HostNotFound
        | ureq::Error::Io(_) => BackendError::Unreachable(e.to_string()),
        other => BackendError::Protocol(other.to_string()),
    }
}

/// Checks a decoded 200 response against the request and the configured model.
pub(crate) fn decode_response(
    wire: WireResponse,
    expected_model: &str,
    options: &EmbedOptions,
) -> Result<EmbedResult, BackendError> {
    if wire.embedding.len() != wire.hidden_size {
        return Err(BackendError::Protocol(format!(
            "embedding has {} values but hidden_size is {}",
            wire.embedding.len(),
            wire.hidden_size
        )));
    }
    if wire.model_id != expected_model {
        return Err(BackendError::Protocol(format!(
            "backend serves model {:?}, configured model id is {expected_model:?}",
            wire.model_id
        )));
    }
    let values: Vec<f32> = wire.embedding.iter().map(|&v| v as f32).collect();
    let embedding = EmbeddingVector::new(values)?;
    let generated_word = if options.generate_word {
        match wire.generated_word {
            Some(w) if w.contains('"') => {
                return Err(BackendError::Protocol(format!("generated word {w:?} contains the stop quote")));
            }
            w => w,
        }
    } else {
        None
    };
    Ok(EmbedResult {
        embedding,
        generated_word,
        model_id: wire.model_id,
        layer_index: options.layer_index,
    })
}

impl Backend for HttpBackend {
    fn embed(&self, prompt: &ConditionalPrompt, options: &EmbedOptions) -> Result<EmbedResult, BackendError> {
        let request = WireRequest {
            prompt: prompt.rendered().to_owned(),
            layer_index: options.layer_index,
            generate_word: options.generate_word,
            max_word_tokens: options.max_word_tokens,
        };
        let mut response = self
            .agent
            .post(&self.embed_url)
            .send_json(&request)
            .map_err(transport_error)?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(transport_error)?;
        if status != 200 {
            let message = serde_json::from_str::<WireError>(&body)
                .map(|e| e.error)
                .unwrap_or(body);
            return Err(BackendError::Server { status, message });
        }
        let wire: WireResponse = serde_json::from_str(&body)
            .map_err(|e| BackendError::Protocol(format!("malformed response: {e}")))?;
        decode_response(wire, &self.model_id, options)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(generate_word: bool) -> EmbedOptions {
        EmbedOptions {
            layer_index: -1,
            generate_word,
            max_word_tokens: 16,
        }
    }

    fn wire(embedding: Vec<f64>) -> WireResponse {
        WireResponse {
            hidden_size: embedding.len(),
            embedding,
            generated_word: Some("Formal".into()),
            model_id: "tiny".into(),
        }
    }

    #[test]
    fn decode_accepts_well_formed() {
        let r = decode_response(wire(vec![0.5, -1.0]), "tiny", &opts(true)).unwrap();
        assert_eq!(r.embedding.as_slice(), &[0.5, -1.0]);
        assert_eq!(r.generated_word.as_deref(), Some("Formal"));
        let r = decode_response(wire(vec![0.5, -1.0]), "tiny", &opts(false)).unwrap();
        assert_eq!(r.generated_word, None);
    }

    #[test]
    fn decode_rejects_bad_payloads() {
        let mut w = wire(vec![1.0, 2.0]);
        w.hidden_size = 3;
        assert!(matches!(decode_response(w, "tiny", &opts(false)), Err(BackendError::Protocol(_))));
        assert!(matches!(
            decode_response(wire(vec![1e300]), "tiny", &opts(false)),
            Err(BackendError::Protocol(_))
        ));
        assert!(matches!(
            decode_response(wire(vec![1.0]), "other", &opts(false)),
            Err(BackendError::Protocol(_))
        ));
        let mut w = wire(vec![1.0]);
        w.generated_word = Some("x\"".into());
        assert!(matches!(decode_response(w, "tiny", &opts(true)), Err(BackendError::Protocol(_))));
    }

    #[test]
    fn request_wire_format() {
        let r = WireRequest {
            prompt: "p".into(),
            layer_index: -1,
            generate_word: true,
            max_word_tokens: 16,
        };
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"prompt":"p","layer_index":-1,"generate_word":true,"max_word_tokens":16}"#
        );
        let resp: WireResponse =
            serde_json::from_str(r#"{"embedding":[1,2.5],"generated_word":null,"model_id":"m","hidden_size":2}"#)
                .unwrap();
        assert_eq!(resp.embedding, vec![1.0, 2.5]);
        assert_eq!(resp.generated_word, None);
    }

    #[test]
    fn unreachable_host() {
        // port 9 (discard) is closed on the loopback interface
        let b = HttpBackend::new("http://127.0.0.1:9", "m", Duration::from_secs(2));
        let p = crate::prompting::registry()[12].render("x", "").unwrap();
        assert!(matches!(b.embed(&p, &opts(false)), Err(BackendError::Unreachable(_))));
    }
}
