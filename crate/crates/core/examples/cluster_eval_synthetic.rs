//! Multi-seed K-means on a synthetic corpus with one tight blob per label.

use ponte::harness::synthetic::ClusterConstruction;
use ponte::harness::{cluster_eval, ClusterSettings, Session};
use ponte::prompting::registry;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let labels = ["anger", "joy", "optimism", "sadness"];
    let construction = ClusterConstruction::new(&labels, 15, 3)?;
    let embedder = construction.embedder(32)?;
    let session = Session::new(&embedder, None, "synthetic-tweets");

    let report = cluster_eval(
        &session,
        &construction.records,
        &registry()[8],
        "the emotion",
        &ClusterSettings::default(),
    )?;
    println!("k = {}", report.summary.k);
    for s in &report.summary.per_seed {
        println!("seed {}  v {:.4}", s.seed, s.scores.v_measure);
    }
    println!("mean v {:.4}", report.summary.mean.v_measure);
    Ok(())
}
