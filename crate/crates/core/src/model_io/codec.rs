//! Little-endian primitives and the layer-spec encoding shared by both
//! model formats.

use crate::error::{Error, Result};
use crate::math::{KernelSpec, Shape3};
use crate::network::{Architecture, LayerKind, LayerSpec};

#[derive(Default)]
pub(crate) struct Writer {
    pub buf: Vec<u8>,
}

impl Writer {
    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: usize) {
        let v = u32::try_from(v).expect("dimension fits in u32");
        self.bytes(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn f64s(&mut self, vs: &[f64]) {
        self.buf.reserve(vs.len() * 8);
        for &v in vs {
            self.f64(v);
        }
    }

    pub fn str(&mut self, s: &str) {
        let len = u16::try_from(s.len()).expect("layer name shorter than 64 KiB");
        self.u16(len);
        self.bytes(s.as_bytes());
    }
}

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pub offset: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, offset: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.offset;
        if available < n {
            return Err(Error::Truncated {
                offset: self.offset,
                needed: n,
                available,
            });
        }
        let out = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    pub fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    pub fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Format {
            expected: "a sane value count".into(),
            found: n.to_string(),
        })?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    pub fn str(&mut self) -> Result<String> {
        let len = self.u16()? as usize;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::Format {
            expected: "UTF-8 layer name".into(),
            found: format!("{raw:?}"),
        })
    }

    pub fn finish(&self) -> Result<()> {
        if self.offset != self.bytes.len() {
            return Err(Error::Format {
                expected: "end of file".into(),
                found: format!("{} trailing bytes", self.bytes.len() - self.offset),
            });
        }
        Ok(())
    }
}

pub(crate) fn write_header(w: &mut Writer, magic: &[u8; 4], version: u16) {
    w.bytes(magic);
    w.u16(version);
}

pub(crate) fn read_header(r: &mut Reader<'_>, magic: &[u8; 4], version: u16) -> Result<()> {
    let found = r.take(4)?;
    if found != magic {
        return Err(Error::Format {
            expected: format!("magic {:?}", String::from_utf8_lossy(magic)),
            found: format!("{:?}", String::from_utf8_lossy(found)),
        });
    }
    let v = r.u16()?;
    if v != version {
        return Err(Error::Version {
            found: v,
            supported: version,
        });
    }
    Ok(())
}

const TAG_FC: u8 = 0;
const TAG_CONV: u8 = 1;
const TAG_MAX_POOL: u8 = 2;
const TAG_SIGMOID: u8 = 3;
const TAG_RELU: u8 = 4;
const TAG_SOFTMAX_XENT: u8 = 5;
const TAG_SIGMOID_XENT: u8 = 6;

pub(crate) fn write_architecture(w: &mut Writer, arch: &Architecture) {
    let input = arch.input();
    w.u32(input.channels);
    w.u32(input.height);
    w.u32(input.width);
    w.u32(arch.layers().len());
    for layer in arch.layers() {
        w.str(&layer.name);
        match layer.kind {
            LayerKind::FullyConnected { outputs } => {
                w.u8(TAG_FC);
                w.u32(outputs);
                w.u8(layer.has_bias as u8);
            }
            LayerKind::Convolution(k) => {
                w.u8(TAG_CONV);
                for v in [k.in_channels, k.out_channels, k.kernel_h, k.kernel_w, k.stride, k.pad] {
                    w.u32(v);
                }
                w.u8(layer.has_bias as u8);
            }
            LayerKind::MaxPool { size, stride } => {
                w.u8(TAG_MAX_POOL);
                w.u32(size);
                w.u32(stride);
            }
            LayerKind::Sigmoid => w.u8(TAG_SIGMOID),
            LayerKind::Relu => w.u8(TAG_RELU),
            LayerKind::SoftmaxXent => w.u8(TAG_SOFTMAX_XENT),
            LayerKind::SigmoidXent => w.u8(TAG_SIGMOID_XENT),
        }
    }
}

pub(crate) fn read_architecture(r: &mut Reader<'_>) -> Result<Architecture> {
    let input = Shape3::new(r.u32()?, r.u32()?, r.u32()?);
    let count = r.u32()?;
    let mut layers = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name = r.str()?;
        let tag = r.u8()?;
        let spec = match tag {
            TAG_FC => {
                let outputs = r.u32()?;
                let has_bias = r.u8()? != 0;
                LayerSpec {
                    name,
                    kind: LayerKind::FullyConnected { outputs },
                    has_bias,
                }
            }
            TAG_CONV => {
                let k = KernelSpec {
                    in_channels: r.u32()?,
                    out_channels: r.u32()?,
                    kernel_h: r.u32()?,
                    kernel_w: r.u32()?,
                    stride: r.u32()?,
                    pad: r.u32()?,
                };
                let has_bias = r.u8()? != 0;
                LayerSpec {
                    name,
                    kind: LayerKind::Convolution(k),
                    has_bias,
                }
            }
            TAG_MAX_POOL => LayerSpec::max_pool(name, r.u32()?, r.u32()?),
            TAG_SIGMOID => LayerSpec::sigmoid(name),
            TAG_RELU => LayerSpec::relu(name),
            TAG_SOFTMAX_XENT => LayerSpec::softmax_xent(name),
            TAG_SIGMOID_XENT => LayerSpec::sigmoid_xent(name),
            other => {
                return Err(Error::Format {
                    expected: "a known layer kind tag".into(),
                    found: other.to_string(),
                })
            }
        };
        layers.push(spec);
    }
    Architecture::new(input, layers).map_err(|e| Error::Format {
        expected: "a valid layer chain".into(),
        found: e.to_string(),
    })
}
