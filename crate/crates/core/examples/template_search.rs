//! Picks the best template on validation data. The synthetic backend aligns
//! similarities with gold only for T4, so T4 must win.

use ponte::harness::synthetic::CstsConstruction;
use ponte::harness::{template_search, Session};
use ponte::prompting::registry;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let construction = CstsConstruction::new(20, 5)?.favoring("T4");
    let embedder = construction.embedder(48)?;
    let session = Session::new(&embedder, None, "synthetic-validation");

    let report = template_search(&session, &construction.records, &registry())?;
    for r in &report.summary.ranking {
        let mark = if r.selected { "*" } else { "" };
        println!("{:<10} {:>8.4} {:>8.4} {mark}", r.template_id, r.spearman_rho, r.pearson_r);
    }
    assert_eq!(report.summary.selected, "T4");
    Ok(())
}
