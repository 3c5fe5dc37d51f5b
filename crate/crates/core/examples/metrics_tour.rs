//! The evaluation metrics on small hand-checkable inputs.

use ponte::metrics::{self, SCALED_RANGE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pred = [0.12, 0.80, 0.45, 0.45, 0.91];
    let gold = [1.0, 4.0, 3.0, 2.5, 5.0];
    println!("spearman {:.4}", metrics::spearman(&pred, &gold)?);
    println!("pearson  {:.4}", metrics::pearson(&pred, &gold)?);
    println!("ranks    {:?}", metrics::average_ranks(&pred));

    let scaled = metrics::min_max_scale(&pred, SCALED_RANGE.0, SCALED_RANGE.1)?;
    println!("scaled   {scaled:.2?}");
    // an affine map cannot change rank or linear correlation
    println!("spearman after scaling {:.4}", metrics::spearman(&scaled, &gold)?);

    let v = metrics::v_measure(&["A", "A", "B"], &[0, 1, 1])?;
    println!(
        "v-measure {:.4} (homogeneity {:.4}, completeness {:.4})",
        v.v_measure, v.homogeneity, v.completeness
    );

    println!("cosine {:.4}", metrics::cosine(&[1.0, 1.0], &[1.0, 0.0])?);
    Ok(())
}
