//! Embeds a few prompts with the offline mock backend through an on-disk cache.

use ponte::backend::{BackendConfig, Cache, Embedder};
use ponte::metrics::cosine;
use ponte::prompting::registry;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut config = BackendConfig::mock(64, 7);
    config.generate_words = true;
    let embedder = Embedder::new(config)?;

    let dir = std::env::temp_dir().join("ponte-example-cache");
    let cache = Cache::open(&dir)?;

    let t9 = &registry()[8];
    let text = "The chef walked to the market and bought fresh fish.";
    let prompts = vec![
        t9.render(text, "the physical actions")?,
        t9.render(text, "the food")?,
        t9.render(text, "the physical actions")?,
    ];

    let results = embedder.embed_batch(&prompts, Some(&cache))?;
    for (p, r) in prompts.iter().zip(&results) {
        println!(
            "{:<22} dim {} word {:?}",
            p.condition(),
            r.embedding.dim(),
            r.generated_word.as_deref().unwrap_or("")
        );
    }
    let a = results[0].embedding.as_slice();
    let b = results[1].embedding.as_slice();
    println!("cosine across conditions: {:.4}", cosine(a, b)?);

    let stats = cache.stats()?;
    println!("cache at {}: {} entries, {} bytes", dir.display(), stats.entries, stats.bytes);

    // a second pass is served entirely from disk
    let again = embedder.embed_batch(&prompts, Some(&cache))?;
    assert_eq!(again, results);
    Ok(())
}
