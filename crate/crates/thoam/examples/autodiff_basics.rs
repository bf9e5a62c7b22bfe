//! The tensor engine on its own: build a graph, run a forward pass, and
//! pull gradients back through it.
//!
//! ```bash
//! cargo run --example autodiff_basics
//! ```

use thoam::tensor::{grad_check, Graph, Tensor};

fn main() {
    // Forward: a tiny attention-flavored computation.
    let mut g = Graph::new();
    let x = g.leaf(
        Tensor::from_rows(&[vec![0.5, -1.0, 2.0], vec![1.5, 0.0, -0.5]])
            .unwrap()
            .requires_grad(true),
    );
    let w = g.leaf(
        Tensor::from_rows(&[vec![0.2, -0.3], vec![0.7, 0.1], vec![-0.4, 0.5]])
            .unwrap()
            .requires_grad(true),
    );
    let h = g.matmul(x, w).unwrap();
    let a = g.relu(h).unwrap();
    let s = g.softmax_rows(a).unwrap();
    let loss = g.cross_entropy(s, &[0, 1]).unwrap();
    println!("loss = {:.6}", g.value(loss).data()[0]);

    g.backward(loss).unwrap();
    println!("dL/dx = {:?}", g.grad(x).unwrap());
    println!("dL/dw = {:?}", g.grad(w).unwrap());

    // And the same chain against central finite differences.
    let params = [
        Tensor::from_rows(&[vec![0.5, -1.0, 2.0], vec![1.5, 0.0, -0.5]]).unwrap(),
        Tensor::from_rows(&[vec![0.2, -0.3], vec![0.7, 0.1], vec![-0.4, 0.5]]).unwrap(),
    ];
    let err = grad_check(
        |g, ids| {
            let h = g.matmul(ids[0], ids[1])?;
            let a = g.relu(h)?;
            let s = g.softmax_rows(a)?;
            g.cross_entropy(s, &[0, 1])
        },
        &params,
        1e-5,
        32,
    )
    .unwrap();
    println!("max relative error vs finite differences: {err:e}");
}
