//! `DNSS`: surviving connections only, one CSR matrix per learnable layer.
//!
//! ```text
//! "DNSS" | version u16 | input c,h,w u32 | layer count u32 | layer specs
//! per learnable layer, in order:
//!   rows u32 | cols u32 | nnz u32 | row_ptr u32[rows+1] | col_idx u32[nnz]
//!   values f64[nnz] | bias count u32 | bias f64[]
//! ```
//! An entry is stored iff its mask is one and its weight is non-zero.

use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::model_io::codec::{read_architecture, read_header, write_architecture, write_header, Reader, Writer};
use crate::network::{Architecture, Network};
use crate::surgery::MaskedParams;

pub const SPARSE_MAGIC: &[u8; 4] = b"DNSS";
pub const SPARSE_VERSION: u16 = 1;

/// Compressed sparse row storage.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub rows: usize,
    pub cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Keeps the entries of `w ⊙ t` where the mask is set and the weight is
    /// non-zero.
    pub fn from_masked(w: &Matrix, t: &Matrix) -> Result<Self> {
        if w.shape() != t.shape() {
            return Err(Error::shape(format!("weights {:?} vs mask {:?}", w.shape(), t.shape())));
        }
        let mut row_ptr = Vec::with_capacity(w.rows() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for r in 0..w.rows() {
            for (c, (&wv, &tv)) in w.row(r).iter().zip(t.row(r)).enumerate() {
                if tv != 0.0 && wv != 0.0 {
                    col_idx.push(c);
                    values.push(wv);
                }
            }
            row_ptr.push(values.len());
        }
        Ok(CsrMatrix {
            rows: w.rows(),
            cols: w.cols(),
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Error::Format {
            expected: "well-formed CSR arrays".into(),
            found: what.to_string(),
        };
        if self.row_ptr.len() != self.rows + 1 || self.row_ptr[0] != 0 {
            return Err(bad("row pointer length or origin"));
        }
        if *self.row_ptr.last().expect("non-empty") != self.nnz() || self.col_idx.len() != self.nnz() {
            return Err(bad("row pointer end does not match nnz"));
        }
        for r in 0..self.rows {
            let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
            if lo > hi {
                return Err(bad("decreasing row pointers"));
            }
            let cols = &self.col_idx[lo..hi];
            if cols.windows(2).any(|p| p[0] >= p[1]) || cols.last().is_some_and(|&c| c >= self.cols) {
                return Err(bad("column indices not strictly increasing within bounds"));
            }
        }
        Ok(())
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m.set(r, self.col_idx[k], self.values[k]);
            }
        }
        m
    }

    /// Binary mask of the stored positions.
    pub fn pattern(&self) -> Matrix {
        let mut m = Matrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m.set(r, self.col_idx[k], 1.0);
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseLayer {
    pub weights: CsrMatrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseModel {
    pub arch: Architecture,
    /// One entry per learnable layer.
    pub layers: Vec<SparseLayer>,
}

pub fn export_sparse(net: &Network) -> SparseModel {
    let layers = net
        .params
        .iter()
        .zip(&net.biases)
        .map(|(p, b)| SparseLayer {
            weights: CsrMatrix::from_masked(&p.w, &p.t).expect("network shapes are consistent"),
            bias: b.clone(),
        })
        .collect();
    SparseModel {
        arch: net.architecture().clone(),
        layers,
    }
}

impl SparseModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        write_header(&mut w, SPARSE_MAGIC, SPARSE_VERSION);
        write_architecture(&mut w, &self.arch);
        for layer in &self.layers {
            let csr = &layer.weights;
            w.u32(csr.rows);
            w.u32(csr.cols);
            w.u32(csr.nnz());
            for &p in &csr.row_ptr {
                w.u32(p);
            }
            for &c in &csr.col_idx {
                w.u32(c);
            }
            w.f64s(&csr.values);
            w.u32(layer.bias.len());
            w.f64s(&layer.bias);
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        read_header(&mut r, SPARSE_MAGIC, SPARSE_VERSION)?;
        let arch = read_architecture(&mut r)?;
        let mut layers = Vec::new();
        for i in arch.learnable() {
            let (rows, cols, nnz) = (r.u32()?, r.u32()?, r.u32()?);
            if Some((rows, cols)) != arch.weight_shape(i) {
                return Err(Error::Format {
                    expected: format!("{:?} weights for layer {:?}", arch.weight_shape(i), arch.layers()[i].name),
                    found: format!("{rows}x{cols}"),
                });
            }
            let row_ptr = (0..=rows).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            let col_idx = (0..nnz).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            let values = r.f64s(nnz)?;
            let nb = r.u32()?;
            let bias = r.f64s(nb)?;
            let weights = CsrMatrix {
                rows,
                cols,
                row_ptr,
                col_idx,
                values,
            };
            weights.validate()?;
            layers.push(SparseLayer { weights, bias });
        }
        r.finish()?;
        Ok(SparseModel { arch, layers })
    }

    /// Rebuilds a dense network whose masks mark the stored entries.
    pub fn to_network(&self) -> Result<Network> {
        let params = self
            .layers
            .iter()
            .map(|l| MaskedParams::with_mask(l.weights.to_dense(), l.weights.pattern()))
            .collect::<Result<Vec<_>>>()?;
        let biases = self.layers.iter().map(|l| l.bias.clone()).collect();
        Network::assemble(self.arch.clone(), params, biases)
    }
}
