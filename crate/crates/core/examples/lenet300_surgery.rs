//! LeNet-300-100 on MNIST: dense reference, then surgery.
//!
//! ```text
//! cargo run --release --example lenet300_surgery -- data/mnist [configs/lenet-300-100.cfg]
//! ```

use std::time::Instant;

use netsurgery::prelude::*;

const DEFAULT_CONFIG: &str = include_str!("../../../configs/lenet-300-100.cfg");

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let data_dir = args.next().unwrap_or_else(|| "data/mnist".to_string());
    let text = match args.next() {
        Some(path) => std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?,
        None => DEFAULT_CONFIG.to_string(),
    };
    let cfg = ExperimentConfig::parse(&text)?;
    let (train, test) = load_mnist_dir(&data_dir)?;

    let start = Instant::now();
    let initial = init_network(Arch::LeNet300100.architecture(), cfg.surgery.seed);
    let reference = train_reference(&initial, &train, &cfg.reference_config())?.network;
    let ref_error = evaluate(&reference, &test.features, &test.labels, 1000)?.error;
    println!("reference: test error {:.2}% ({:.1?})", 100.0 * ref_error, start.elapsed());

    let start = Instant::now();
    let out = run_surgery(&reference, &train, &cfg.surgery)?;
    let error = evaluate(&out.network, &test.features, &test.labels, 1000)?.error;
    for r in out.log.iter().step_by(50) {
        println!("iter {:>6}  loss {:.4}  kept {:.2}%", r.iter, r.loss, 100.0 * r.kept_fraction);
    }
    println!("surgery:   test error {:.2}% ({:.1?})", 100.0 * error, start.elapsed());
    println!("{}", out.report);
    Ok(())
}
