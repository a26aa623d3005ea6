//! `DNSD`: the full network, bit for bit.
//!
//! ```text
//! "DNSD" | version u16 | input c,h,w u32 | layer count u32 | layer specs
//! per learnable layer, in order:
//!   rows u32 | cols u32 | weights f64[rows*cols] | bias count u32 | bias f64[]
//!   mask bitset u8[ceil(rows*cols/8)] (row-major, least significant bit first)
//!   c f64 | band_lo f64 | band_hi f64 | a f64 | b f64 | frozen u8
//! ```
//! All integers and floats are little-endian.

use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::model_io::codec::{read_architecture, read_header, write_architecture, write_header, Reader, Writer};
use crate::network::Network;
use crate::surgery::{MaskedParams, ThresholdSpec};

pub const DENSE_MAGIC: &[u8; 4] = b"DNSD";
pub const DENSE_VERSION: u16 = 1;

pub fn save_dense(net: &Network) -> Vec<u8> {
    let mut w = Writer::default();
    write_header(&mut w, DENSE_MAGIC, DENSE_VERSION);
    write_architecture(&mut w, net.architecture());
    for (p, bias) in net.params.iter().zip(&net.biases) {
        w.u32(p.w.rows());
        w.u32(p.w.cols());
        w.f64s(p.w.as_slice());
        w.u32(bias.len());
        w.f64s(bias);
        let mut bits = vec![0u8; p.t.len().div_ceil(8)];
        for (i, &t) in p.t.as_slice().iter().enumerate() {
            if t != 0.0 {
                bits[i / 8] |= 1 << (i % 8);
            }
        }
        w.bytes(&bits);
        let th = &p.thresholds;
        for v in [th.c, th.band_lo, th.band_hi, th.a, th.b] {
            w.f64(v);
        }
        w.u8(th.frozen as u8);
    }
    w.buf
}

pub fn load_dense(bytes: &[u8]) -> Result<Network> {
    let mut r = Reader::new(bytes);
    read_header(&mut r, DENSE_MAGIC, DENSE_VERSION)?;
    let arch = read_architecture(&mut r)?;
    let mut params = Vec::new();
    let mut biases = Vec::new();
    for i in arch.learnable() {
        let (rows, cols) = (r.u32()?, r.u32()?);
        if Some((rows, cols)) != arch.weight_shape(i) {
            return Err(Error::Format {
                expected: format!("{:?} weights for layer {:?}", arch.weight_shape(i), arch.layers()[i].name),
                found: format!("{rows}x{cols}"),
            });
        }
        let w = Matrix::from_vec(rows, cols, r.f64s(rows * cols)?)?;
        let nb = r.u32()?;
        let bias = r.f64s(nb)?;
        let bits = r.take((rows * cols).div_ceil(8))?;
        let t: Vec<f64> = (0..rows * cols)
            .map(|i| if bits[i / 8] >> (i % 8) & 1 == 1 { 1.0 } else { 0.0 })
            .collect();
        let mut p = MaskedParams::with_mask(w, Matrix::from_vec(rows, cols, t)?)?;
        p.thresholds = ThresholdSpec {
            c: r.f64()?,
            band_lo: r.f64()?,
            band_hi: r.f64()?,
            a: r.f64()?,
            b: r.f64()?,
            frozen: r.u8()? != 0,
        };
        params.push(p);
        biases.push(bias);
    }
    r.finish()?;
    Network::assemble(arch, params, biases).map_err(|e| Error::Format {
        expected: "parameters matching the architecture".into(),
        found: e.to_string(),
    })
}
