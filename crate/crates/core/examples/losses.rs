//! The contrastive losses on a hand-built batch: two examples per class,
//! each paired with a slightly shifted view.

use contrastive_workbench::autodiff::Tensor;
use contrastive_workbench::objectives::{
    infonce, infonce_terms, lcl_loss, ntxent, ntxent_terms, ContrastBatch, InfoNceAnchors,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let originals = Tensor::from_rows(&[
        vec![1.0, 0.1, 0.0],
        vec![0.9, 0.3, 0.1],
        vec![0.0, 1.0, 0.2],
        vec![0.1, 0.8, 0.4],
    ])?;
    let views = originals.add_scalar(0.05);
    let labels = [0, 0, 1, 1];
    let batch = ContrastBatch::from_views(&originals, &views, &labels)?;
    let tau = 0.3;

    println!("per-anchor NTXent: {:?}", ntxent_terms(&batch, tau)?.to_vec());
    println!("NTXent (sum over anchors): {:.6}", ntxent(&batch, tau)?.item());

    let reps = batch.reps().clone();
    println!("InfoNCE, both directions: {:.6}", infonce(&reps, tau, InfoNceAnchors::Both)?.item());
    println!(
        "InfoNCE, originals only:  {:.6}",
        infonce(&reps, tau, InfoNceAnchors::OriginalsOnly)?.item()
    );

    // confident, correct weights shrink the negatives of the other class
    let confident = Tensor::from_rows(&(0..8).map(|i| {
        if labels[i % 4] == 0 { vec![0.9, 0.1] } else { vec![0.1, 0.9] }
    }).collect::<Vec<_>>())?;
    let uniform = Tensor::from_rows(&vec![vec![0.5, 0.5]; 8])?;
    println!("LCL, uniform weights:   {:.6}", lcl_loss(&batch, &uniform, tau)?.item());
    println!("LCL, confident weights: {:.6}", lcl_loss(&batch, &confident, tau)?.item());

    let same = Tensor::from_rows(&vec![vec![1.0, 2.0]; 4])?;
    let terms = infonce_terms(&same, tau, InfoNceAnchors::Both)?.to_vec();
    println!("identical rows give ln 3 = {:.6}: {terms:?}", 3f64.ln());
    Ok(())
}
