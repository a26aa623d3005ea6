//! The mask function on a single layer: thresholds, hysteresis, pruning and
//! splicing of one connection driven by a steady gradient.
//!
//! ```text
//! cargo run --example splicing
//! ```

use netsurgery::prelude::*;
use netsurgery::surgery::compute_thresholds;

fn main() -> Result<()> {
    let w = Matrix::from_rows(&[[0.1, -0.2], [0.3, -0.4]])?;
    let th = compute_thresholds(&w, 1.0, 0.9, 1.1)?;
    println!("thresholds for {w:?}: a = {:.4}, b = {:.4}", th.a, th.b);

    let mut layer = MaskedParams::new(w);
    layer.thresholds = th;
    layer.update_mask()?;
    println!("after update: T = {:?}", layer.t);

    // Push the pruned 0.3 entry upward; it keeps learning while masked.
    let mut grad = Matrix::zeros(2, 2);
    grad.set(1, 0, -1.0);
    for step in 1..=4 {
        layer.apply_update(&grad, 0.03)?;
        layer.update_mask()?;
        println!(
            "step {step}: w = {:.2}, t = {}",
            layer.w.get(1, 0),
            layer.t.get(1, 0)
        );
    }
    println!("W ⊙ T = {:?}", layer.masked());
    Ok(())
}
