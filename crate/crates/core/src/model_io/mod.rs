//! Model serialization (`DNSD` dense, `DNSS` sparse) and compression
//! accounting.

mod codec;
mod dense;
mod report;
mod sparse;

use std::fs;
use std::path::Path;

pub use dense::{load_dense, save_dense, DENSE_MAGIC, DENSE_VERSION};
pub use report::{compression_report, CompressionReport, LayerCompression};
pub use sparse::{export_sparse, CsrMatrix, SparseLayer, SparseModel, SPARSE_MAGIC, SPARSE_VERSION};

use crate::error::{Error, Result};
use crate::network::Network;

/// Decodes either format, dispatching on the magic bytes.
pub fn load_model(bytes: &[u8]) -> Result<Network> {
    match bytes.get(..4) {
        Some(m) if m == DENSE_MAGIC => load_dense(bytes),
        Some(m) if m == SPARSE_MAGIC => SparseModel::from_bytes(bytes)?.to_network(),
        Some(m) => Err(Error::Format {
            expected: "magic \"DNSD\" or \"DNSS\"".into(),
            found: format!("{:?}", String::from_utf8_lossy(m)),
        }),
        None => Err(Error::Truncated {
            offset: 0,
            needed: 4,
            available: bytes.len(),
        }),
    }
}

pub fn read_model_file(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    load_model(&bytes)
}

pub fn write_file(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
