//! Projects two synthetic clusters to 2-D and writes TSV and SVG files.

use std::fs::{self, File};

use ponte::harness::synthetic::ClusterConstruction;
use ponte::projection::{render_svg, tsne, write_tsv, ProjectedPoint, TsneConfig};
use ponte::prompting::registry;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let construction = ClusterConstruction::new(&["joy", "anger"], 20, 9)?;
    let embedder = construction.embedder(16)?;
    let t9 = &registry()[8];

    let prompts = construction
        .records
        .iter()
        .map(|r| t9.render(&r.text, "the emotion"))
        .collect::<Result<Vec<_>, _>>()?;
    let embedded = embedder.embed_batch(&prompts, None)?;
    let vectors: Vec<&[f32]> = embedded.iter().map(|e| e.embedding.as_slice()).collect();

    let layout = tsne(&vectors, &TsneConfig { perplexity: 10.0, ..TsneConfig::default() })?;
    println!("KL {:.4} -> {:.4}", layout.kl_initial, layout.kl_final);

    let points: Vec<ProjectedPoint> = layout
        .coords
        .iter()
        .zip(&construction.records)
        .map(|(xy, r)| ProjectedPoint {
            x: xy[0],
            y: xy[1],
            label: r.label.clone(),
            generated_word: None,
            condition: "the emotion".into(),
        })
        .collect();

    let dir = std::env::temp_dir().join("ponte-example-tsne");
    fs::create_dir_all(&dir)?;
    write_tsv(File::create(dir.join("points.tsv"))?, &points)?;
    fs::write(dir.join("points.svg"), render_svg(&points, 640, 480))?;
    println!("wrote {}", dir.display());
    Ok(())
}
