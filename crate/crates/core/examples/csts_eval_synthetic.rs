//! C-STS evaluation on a synthetic set whose cosines follow gold by design.

use ponte::harness::synthetic::CstsConstruction;
use ponte::harness::{csts_eval, Session, ToTsv};
use ponte::prompting::registry;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let construction = CstsConstruction::new(24, 11)?;
    let embedder = construction.embedder(64)?;
    let session = Session::new(&embedder, None, "synthetic-csts");

    let report = csts_eval(&session, &construction.records, &registry()[8])?;
    println!(
        "spearman {:.4}  pearson {:.4}  n {}",
        report.summary.spearman_rho, report.summary.pearson_r, report.summary.n
    );
    assert!(report.is_consistent()?);

    for line in report.to_tsv().lines().take(6) {
        println!("{line}");
    }
    Ok(())
}
