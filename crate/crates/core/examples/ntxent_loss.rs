//! NT-Xent on a hand-made batch: aligned positives give a low loss, and
//! swapping partners raises it.
//!
//! cargo run --example ntxent_loss

use mvc::contrastive::{ntxent_batch_loss, ntxent_loss_and_grad, pairwise_sim, EmbeddingBatch};
use mvc::numcore::Array;

fn unit(v: [f64; 3]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn main() -> mvc::Result<()> {
    let a = unit([1.0, 0.1, 0.0]);
    let a2 = unit([0.9, 0.2, 0.0]);
    let b = unit([0.0, 1.0, 0.1]);
    let b2 = unit([0.1, 0.9, 0.0]);

    // rows 2k and 2k+1 are positives
    let aligned = Array::from_rows(&[a.clone(), a2.clone(), b.clone(), b2.clone()])?;
    let crossed = Array::from_rows(&[a, b2, b, a2])?;
    for tau in [0.1, 0.5, 1.0] {
        let good = ntxent_batch_loss(&EmbeddingBatch::new(aligned.clone(), tau)?);
        let bad = ntxent_batch_loss(&EmbeddingBatch::new(crossed.clone(), tau)?);
        println!("tau {tau}: aligned {good:.4}, crossed {bad:.4}");
    }

    let batch = EmbeddingBatch::new(aligned.clone(), 0.5)?;
    println!("similarities:\n{:?}", pairwise_sim(&batch).data());
    let (_, grad) = ntxent_loss_and_grad(&aligned, 0.5)?;
    println!("gradient row 0: {:?}", grad.row(0));
    Ok(())
}
