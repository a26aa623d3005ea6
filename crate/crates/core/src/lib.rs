//! Dynamic network surgery for small neural networks.
//!
//! Every learnable layer carries a weight matrix `W` and a binary mask `T`.
//! Forward and backward passes use `W ⊙ T`; the gradient with respect to that
//! product updates *all* of `W`, so pruned connections keep learning and are
//! spliced back once their magnitude clears the upper threshold.
//!
//! ```no_run
//! use netsurgery::prelude::*;
//!
//! let data = gen_xor(20_000, 0.15, 1)?;
//! let (train, _test) = data.split_at(10_000);
//! let reference = init_network(Arch::Xor251.architecture(), 1);
//! let cfg = SurgeryConfig { base_lr: 1.0, max_iter: 1000, c: 0.5, ..Default::default() };
//! let out = run_surgery(&reference, &train, &cfg)?;
//! println!("{}", out.report);
//! # Ok::<(), netsurgery::Error>(())
//! ```

pub mod data;
pub mod error;
pub mod math;
pub mod model_io;
pub mod network;
pub mod presets;
pub mod surgery;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::data::{gen_xor, load_mnist_dir, load_mnist_idx, minibatches, Dataset};
    pub use crate::error::{Error, Result};
    pub use crate::math::{hadamard, matmul, KernelSpec, Matrix, Shape3};
    pub use crate::model_io::{
        compression_report, export_sparse, load_dense, load_model, save_dense, CompressionReport, SparseModel,
    };
    pub use crate::network::{backward, evaluate, forward, init_network, Architecture, LayerSpec, Network};
    pub use crate::presets::{Arch, ExperimentConfig};
    pub use crate::surgery::{
        run_surgery, train_reference, LrPolicy, MaskedParams, SurgeryConfig, ThresholdSpec, TriggerSchedule,
    };
}
