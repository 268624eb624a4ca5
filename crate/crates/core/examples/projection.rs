//! 2-D PCA of dev-set [CLS] vectors after CE and SCL training, written as
//! CSV for plotting, plus the intra- minus inter-class cosine gap.
//!
//! `cargo run --release --example projection -- out/`

use std::path::PathBuf;

use contrastive_workbench::encoder::Model;
use contrastive_workbench::objectives::Method;
use contrastive_workbench::trainer::{train, TrainConfig};
use contrastive_workbench::workbench::{project_2d, synth_corpus, Dataset};

fn cls_rows(model: &Model, data: &Dataset) -> Result<Vec<Vec<f64>>, Box<dyn std::error::Error>> {
    let ids = model.tokenize_batch(&data.dev.texts())?;
    Ok(model.pooled(&ids, None)?.to_rows())
}

fn cosine_gap(rows: &[Vec<f64>], labels: &[usize]) -> f64 {
    let cos = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        dot / (a.iter().map(|x| x * x).sum::<f64>().sqrt() * b.iter().map(|x| x * x).sum::<f64>().sqrt())
    };
    let (mut same, mut ns, mut diff, mut nd) = (0.0, 0, 0.0, 0);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            if labels[i] == labels[j] {
                same += cos(&rows[i], &rows[j]);
                ns += 1;
            } else {
                diff += cos(&rows[i], &rows[j]);
                nd += 1;
            }
        }
    }
    same / ns as f64 - diff / nd as f64
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "projection-out".into()));
    std::fs::create_dir_all(&out)?;
    let data = synth_corpus(3, 600, 1, 0.6)?;
    for method in [Method::Ce, Method::Scl] {
        let run = train(&TrainConfig::toy(method), &data)?;
        let rows = cls_rows(&run.model, &data)?;
        let labels = data.dev.labels();
        let p = project_2d(&rows, &labels)?;
        let path = out.join(format!("{}.csv", method.name()));
        std::fs::write(&path, p.to_csv(data.classes())?)?;
        println!(
            "{method}: cosine gap {:.4}, explained variance {:.4} / {:.4}, wrote {}",
            cosine_gap(&rows, &labels),
            p.variance[0],
            p.variance[1],
            path.display()
        );
    }
    Ok(())
}
