//! Binary model checkpoint.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! "CDEE"                      magic
//! u16                         format version (1)
//! u32 u32 u32                 input height, width, channels
//! u32                         layer count
//! per layer:
//!   u8                        kind: 1 conv2d, 2 max_pool, 3 dense, 4 relu,
//!                             5 sigmoid, 6 flatten, 7 reshape, 8 upsample
//!   u8, u32 × n               shape dims
//!                             conv2d (out, in, kh, kw); dense (in, out);
//!                             max_pool (window); upsample (factor);
//!                             reshape (h, w, c); others none
//!   f32 × …                   conv2d: kernels then bias; dense: weights then bias
//! u8                          optimizer section present (0/1)
//!   f64 × 4                   learning rate, beta1, beta2, epsilon
//!   u32                       parameter tensor count
//!   per tensor: u64 step, u32 len, f32 × len (m), f32 × len (v)
//! u32                         CRC-32 of every preceding byte
//! ```

use std::path::Path;

use crate::classifier::Classifier;
use crate::dataio::{read_bytes, write_atomic};
use crate::error::{Error, Result};
use crate::layers::{Conv2dLayer, DenseLayer, Layer, LayerStack, MaxPoolLayer, UpsampleLayer};
use crate::optim::{Adam, AdamConfig, AdamState};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"CDEE";
pub const VERSION: u16 = 1;

mod kind {
    pub const CONV2D: u8 = 1;
    pub const MAX_POOL: u8 = 2;
    pub const DENSE: u8 = 3;
    pub const RELU: u8 = 4;
    pub const SIGMOID: u8 = 5;
    pub const FLATTEN: u8 = 6;
    pub const RESHAPE: u8 = 7;
    pub const UPSAMPLE: u8 = 8;
}

fn ckpt_err(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| ckpt_err(format!("{v} does not fit in u32")))?;
        self.buf.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn dims(&mut self, dims: &[usize]) -> Result<()> {
        self.u8(dims.len() as u8);
        for &d in dims {
            self.u32(d)?;
        }
        Ok(())
    }
    fn floats<T: Scalar>(&mut self, t: &Tensor<T>) {
        for &v in t.data() {
            self.buf.extend_from_slice(&v.to_f32_lossy().to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| ckpt_err(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
    fn dims(&mut self) -> Result<Vec<usize>> {
        let n = self.u8()? as usize;
        (0..n).map(|_| self.u32()).collect()
    }
    fn floats(&mut self, shape: &[usize]) -> Result<Tensor<f32>> {
        let n: usize = shape.iter().product();
        let raw = self.take(
            n.checked_mul(4)
                .ok_or_else(|| ckpt_err("tensor size overflow"))?,
        )?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Tensor::from_vec(shape, data)
    }
}

/// Decoded checkpoint contents. Parameters are always `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub input_hwc: [usize; 3],
    pub stack: LayerStack<f32>,
    pub optimizer: Option<Adam<f32>>,
}

pub fn encode<T: Scalar>(
    stack: &LayerStack<T>,
    input_hwc: [usize; 3],
    optimizer: Option<&Adam<T>>,
) -> Result<Vec<u8>> {
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(MAGIC);
    w.u16(VERSION);
    for d in input_hwc {
        w.u32(d)?;
    }
    w.u32(stack.layers.len())?;
    for layer in &stack.layers {
        match layer {
            Layer::Conv2d(c) => {
                w.u8(kind::CONV2D);
                w.dims(c.kernels.shape())?;
                w.floats(&c.kernels);
                w.floats(&c.bias);
            }
            Layer::Dense(d) => {
                w.u8(kind::DENSE);
                w.dims(d.weights.shape())?;
                w.floats(&d.weights);
                w.floats(&d.bias);
            }
            Layer::MaxPool(p) => {
                w.u8(kind::MAX_POOL);
                w.dims(&[p.window])?;
            }
            Layer::Upsample(u) => {
                w.u8(kind::UPSAMPLE);
                w.dims(&[u.factor])?;
            }
            Layer::Reshape {
                height,
                width,
                channels,
            } => {
                w.u8(kind::RESHAPE);
                w.dims(&[*height, *width, *channels])?;
            }
            Layer::Relu => {
                w.u8(kind::RELU);
                w.dims(&[])?;
            }
            Layer::Sigmoid => {
                w.u8(kind::SIGMOID);
                w.dims(&[])?;
            }
            Layer::Flatten => {
                w.u8(kind::FLATTEN);
                w.dims(&[])?;
            }
        }
    }
    match optimizer {
        None => w.u8(0),
        Some(adam) => {
            w.u8(1);
            let c = &adam.config;
            for v in [c.learning_rate, c.beta1, c.beta2, c.epsilon] {
                w.f64(v.to_f64_lossy());
            }
            w.u32(adam.states.len())?;
            for s in &adam.states {
                w.u64(s.t);
                w.u32(s.m.len())?;
                w.floats(&s.m);
                w.floats(&s.v);
            }
        }
    }
    let crc = crc32fast::hash(&w.buf);
    w.buf.extend_from_slice(&crc.to_le_bytes());
    Ok(w.buf)
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < MAGIC.len() + 2 + 4 {
        return Err(ckpt_err(format!("file too short ({} bytes)", bytes.len())));
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(crc_bytes.try_into().expect("4 bytes"));
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(ckpt_err(format!(
            "CRC mismatch: stored {stored:08x}, computed {actual:08x}"
        )));
    }
    let mut r = Reader { buf: body, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(ckpt_err("bad magic"));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(ckpt_err(format!("unsupported version {version}")));
    }
    let input_hwc = [r.u32()?, r.u32()?, r.u32()?];
    let n_layers = r.u32()?;
    let mut layers = Vec::with_capacity(n_layers.min(1024));
    for _ in 0..n_layers {
        let code = r.u8()?;
        let dims = r.dims()?;
        let want = |n: usize| -> Result<()> {
            if dims.len() == n {
                Ok(())
            } else {
                Err(ckpt_err(format!(
                    "layer kind {code} expects {n} dims, got {}",
                    dims.len()
                )))
            }
        };
        let layer = match code {
            kind::CONV2D => {
                want(4)?;
                let kernels = r.floats(&dims)?;
                let bias = r.floats(&[dims[0]])?;
                Layer::Conv2d(Conv2dLayer::new(kernels, bias)?)
            }
            kind::DENSE => {
                want(2)?;
                let weights = r.floats(&dims)?;
                let bias = r.floats(&[dims[1]])?;
                Layer::Dense(DenseLayer::new(weights, bias)?)
            }
            kind::MAX_POOL => {
                want(1)?;
                Layer::MaxPool(MaxPoolLayer::new(dims[0])?)
            }
            kind::UPSAMPLE => {
                want(1)?;
                Layer::Upsample(UpsampleLayer { factor: dims[0] })
            }
            kind::RESHAPE => {
                want(3)?;
                Layer::Reshape {
                    height: dims[0],
                    width: dims[1],
                    channels: dims[2],
                }
            }
            kind::RELU => Layer::Relu,
            kind::SIGMOID => Layer::Sigmoid,
            kind::FLATTEN => Layer::Flatten,
            other => return Err(ckpt_err(format!("unknown layer kind {other}"))),
        };
        layers.push(layer);
    }
    let stack = LayerStack::new(layers);

    let optimizer = match r.u8()? {
        0 => None,
        1 => {
            let config = AdamConfig {
                learning_rate: r.f64()? as f32,
                beta1: r.f64()? as f32,
                beta2: r.f64()? as f32,
                epsilon: r.f64()? as f32,
            };
            let n = r.u32()?;
            let params = stack.params();
            if n != params.len() {
                return Err(ckpt_err(format!(
                    "optimizer has {n} tensors for {} parameters",
                    params.len()
                )));
            }
            let mut states = Vec::with_capacity(n);
            for p in params {
                let t = r.u64()?;
                let len = r.u32()?;
                if len != p.len() {
                    return Err(ckpt_err("optimizer moment length does not match parameter"));
                }
                states.push(AdamState {
                    t,
                    m: r.floats(p.shape())?,
                    v: r.floats(p.shape())?,
                });
            }
            Some(Adam { config, states })
        }
        f => return Err(ckpt_err(format!("bad optimizer flag {f}"))),
    };
    if r.pos != body.len() {
        return Err(ckpt_err(format!("{} trailing bytes", body.len() - r.pos)));
    }
    stack.shape_chain(&[1, input_hwc[0], input_hwc[1], input_hwc[2]])?;
    Ok(Checkpoint {
        input_hwc,
        stack,
        optimizer,
    })
}

pub fn save_classifier<T: Scalar>(model: &Classifier<T>, path: &Path) -> Result<()> {
    write_atomic(
        path,
        &encode(&model.stack, model.input_hwc, model.optimizer.as_ref())?,
    )
}

pub fn load_classifier(path: &Path) -> Result<Classifier<f32>> {
    let ck = decode(&read_bytes(path)?)?;
    Ok(Classifier {
        stack: ck.stack,
        input_hwc: ck.input_hwc,
        optimizer: ck.optimizer,
    })
}
