//! Noisy XOR with a 2-5-1 sigmoid network: dense training, then surgery.
//!
//! ```text
//! cargo run --release --example xor_surgery [-- configs/xor.cfg]
//! ```

use std::time::Instant;

use netsurgery::prelude::*;

const DEFAULT_CONFIG: &str = include_str!("../../../configs/xor.cfg");

fn main() -> Result<()> {
    let text = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?,
        None => DEFAULT_CONFIG.to_string(),
    };
    let cfg = ExperimentConfig::parse(&text)?;
    let seed = cfg.surgery.seed;

    let data = gen_xor(cfg.xor_samples, cfg.xor_noise, seed)?;
    let (train, test) = data.split_at(cfg.xor_samples / 2);

    let start = Instant::now();
    let initial = init_network(Arch::Xor251.architecture(), seed);
    let reference = train_reference(&initial, &train, &cfg.reference_config())?.network;
    let ref_eval = evaluate(&reference, &test.features, &test.labels, 1000)?;
    println!(
        "reference: test error {:.2}% after {} iterations ({:.1?})",
        100.0 * ref_eval.error,
        cfg.reference_iter,
        start.elapsed()
    );

    let start = Instant::now();
    let out = run_surgery(&reference, &train, &cfg.surgery)?;
    let eval = evaluate(&out.network, &test.features, &test.labels, 1000)?;
    println!(
        "surgery:   test error {:.2}% after {} iterations ({:.1?})",
        100.0 * eval.error,
        cfg.surgery.max_iter,
        start.elapsed()
    );
    println!("{}", out.report);
    println!("pruned {} of {} parameters", out.report.pruned(), out.report.total());
    for (name, p) in out.network.learnable_names().iter().zip(&out.network.params) {
        println!("{name} W = {:?}", p.w);
        println!("{name} T = {:?}", p.t);
    }
    Ok(())
}
