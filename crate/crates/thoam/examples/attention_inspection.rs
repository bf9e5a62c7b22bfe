//! Run the two-stage fusion on a toy batch and inspect the attention
//! scores: every row is a probability distribution over the key/value
//! tokens, and every attended token is a convex mixture of value tokens.
//!
//! ```bash
//! cargo run --example attention_inspection
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thoam::fusion::{fuse_forward, predict, ThoamParams, TokenLayout};
use thoam::tensor::Tensor;

fn main() {
    let layout = TokenLayout::new(4, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params = ThoamParams::init(layout, &mut rng);

    let feature = |rng: &mut ChaCha8Rng| {
        Tensor::new(
            vec![2, layout.channels()],
            (0..2 * layout.channels()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    };
    let (fv, ft, fl) = (feature(&mut rng), feature(&mut rng), feature(&mut rng));

    let out = fuse_forward(&fv, &ft, &fl, &params, true).unwrap();
    let scores = out.scores1.as_ref().unwrap();
    println!("stage-1 scores, sample 0 (rows are query tokens):");
    for t in 0..layout.tokens {
        let row: Vec<String> = (0..layout.tokens)
            .map(|u| format!("{:.3}", scores.data()[(t * layout.tokens) + u]))
            .collect();
        let sum: f64 = (0..layout.tokens)
            .map(|u| scores.data()[t * layout.tokens + u])
            .sum();
        println!("  [{}]  sum = {:.9}", row.join(" "), sum);
    }

    println!("\nfused widths: stage1 {:?}, stage2 {:?}, concat output {:?}",
        out.stage1.shape(), out.fused2.shape(), out.output.shape());

    let preds = predict(&out.logits).unwrap();
    for (i, p) in preds.iter().enumerate() {
        let probs: Vec<String> = p.probabilities.iter().map(|v| format!("{v:.3}")).collect();
        println!("sample {i}: class {} probs [{}]", p.class, probs.join(" "));
    }
}
