//! Talks to a running inference sidecar.
//!
//! ```text
//! cargo run --example remote_sidecar -- http://127.0.0.1:8000 my-model-id
//! ```

use std::time::Duration;

use ponte::backend::{BackendConfig, BackendError, Embedder};
use ponte::metrics::cosine;
use ponte::prompting::registry;

fn main() {
    let mut args = std::env::args().skip(1);
    let url = args.next().unwrap_or_else(|| "http://127.0.0.1:8000".into());
    let model = args.next().unwrap_or_else(|| "gpt2".into());

    let mut config = BackendConfig::http(url.clone(), model);
    config.generate_words = true;
    config.request_timeout = Duration::from_secs(30);
    let embedder = match Embedder::new(config) {
        Ok(e) => e,
        Err(e) => {
            eprintln!("bad configuration: {e}");
            std::process::exit(2);
        }
    };

    let t9 = &registry()[8];
    let text = "I can't believe they cancelled the concert.";
    let prompts: Vec<_> = ["the emotion", "the topic"]
        .iter()
        .map(|c| t9.render(text, c).expect("valid prompt"))
        .collect();

    match embedder.embed_batch(&prompts, None) {
        Ok(results) => {
            for (p, r) in prompts.iter().zip(&results) {
                println!("{:<12} -> {:?} ({} dims)", p.condition(), r.generated_word, r.embedding.dim());
            }
            let c = cosine(results[0].embedding.as_slice(), results[1].embedding.as_slice()).unwrap_or(f64::NAN);
            println!("same text, two conditions: cosine {c:.4}");
        }
        Err(e) => {
            match e.root() {
                BackendError::Unreachable(_) => eprintln!("no sidecar answering at {url}"),
                _ => eprintln!("sidecar error: {e}"),
            }
            std::process::exit(3);
        }
    }
}
