//! Prunes a small XOR network, writes it in both formats and reads the sparse
//! copy back.
//!
//! ```text
//! cargo run --release --example sparse_export
//! ```

use netsurgery::model_io::{load_model, SparseModel};
use netsurgery::prelude::*;

fn main() -> Result<()> {
    let cfg = ExperimentConfig::parse(include_str!("../../../configs/xor.cfg"))?;
    let data = gen_xor(4000, cfg.xor_noise, 3)?;
    let (train, test) = data.split_at(2000);
    let reference = train_reference(
        &init_network(Arch::Xor251.architecture(), 3),
        &train,
        &SurgeryConfig { max_iter: 20_000, ..cfg.reference_config() },
    )?
    .network;
    let pruned = run_surgery(&reference, &train, &SurgeryConfig { max_iter: 20_000, ..cfg.surgery })?.network;

    let dense = save_dense(&pruned);
    let sparse = export_sparse(&pruned);
    let bytes = sparse.to_bytes();
    println!("dense file:  {} bytes", dense.len());
    println!("sparse file: {} bytes", bytes.len());
    for (i, layer) in SparseModel::from_bytes(&bytes)?.layers.iter().enumerate() {
        let w = &layer.weights;
        println!("layer {i}: {}x{} with {} stored entries", w.rows, w.cols, w.nnz());
        println!("  row_ptr {:?}", w.row_ptr);
        println!("  col_idx {:?}", w.col_idx);
    }

    let restored = load_model(&bytes)?;
    let a = evaluate(&pruned, &test.features, &test.labels, 1000)?.error;
    let b = evaluate(&restored, &test.features, &test.labels, 1000)?.error;
    println!("test error: dense {a:.4}, sparse {b:.4}");
    assert_eq!(a, b);
    Ok(())
}
