//! Compares condition texts for clustering. Blobs only appear under
//! "the name of the product category", so it is selected.

use ponte::harness::synthetic::ClusterConstruction;
use ponte::harness::{condition_search, ClusterSettings, Session};
use ponte::prompting::registry;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let best = "the name of the product category";
    let construction = ClusterConstruction::new(&["books", "garden", "toys"], 12, 1)?.favoring(best);
    let embedder = construction.embedder(16)?;
    let session = Session::new(&embedder, None, "synthetic-products");

    let conditions: Vec<String> = ["the sentiment", best, "the product"].iter().map(|s| s.to_string()).collect();
    let report = condition_search(
        &session,
        &construction.records,
        &registry()[8],
        &conditions,
        &ClusterSettings::default(),
    )?;
    for r in &report.summary.ranking {
        println!("{:.4}  {}{}", r.mean.v_measure, r.condition, if r.selected { "  *" } else { "" });
    }
    Ok(())
}
