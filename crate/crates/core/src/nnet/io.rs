//! Weight files.
//!
//! ```text
//! "CNNW"                  magic
//! u32 version             currently 1
//! u32 channels, height, width, num_classes, layer_count
//! per layer: u8 tag (0 conv, 1 max-pool, 2 dense, 3 relu) and its u32 fields
//!            conv: kernel, stride, out_channels; pool: window, stride; dense: width
//! u32 tensor_count, then per tensor: u32 element count, f32 values
//! ```
//! All integers and floats are little-endian.

use std::path::Path;

use super::{ConvNet, LayerSpec, Real, Shape3, Tensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"CNNW";
const VERSION: u32 = 1;

pub fn save_model<F: Real>(model: &ConvNet<F>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + model.parameter_count() * 4);
    out.extend_from_slice(MAGIC);
    let put = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
    put(&mut out, VERSION as usize);
    let s = model.input_shape();
    for v in [s.channels, s.height, s.width, model.num_classes()] {
        put(&mut out, v);
    }
    let specs = model.specs();
    put(&mut out, specs.len());
    for spec in &specs {
        match *spec {
            LayerSpec::Conv { kernel, stride, out_channels } => {
                out.push(0);
                for v in [kernel, stride, out_channels] {
                    put(&mut out, v);
                }
            }
            LayerSpec::MaxPool { window, stride } => {
                out.push(1);
                put(&mut out, window);
                put(&mut out, stride);
            }
            LayerSpec::Dense { width } => {
                out.push(2);
                put(&mut out, width);
            }
            LayerSpec::Relu => out.push(3),
        }
    }
    let params = model.parameters();
    put(&mut out, params.len());
    for t in params {
        put(&mut out, t.len());
        for v in t.values() {
            out.extend_from_slice(&(v.f64() as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos + n;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or(Error::Length { expected: end, found: self.bytes.len() })?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

pub fn load_model<F: Real>(bytes: &[u8]) -> Result<ConvNet<F>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("not a CNNW weight file".into()));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::Format(format!("unsupported weight file version {version}")));
    }
    let input = Shape3::new(r.u32()?, r.u32()?, r.u32()?);
    let num_classes = r.u32()?;
    let layer_count = r.u32()?;
    let mut specs = Vec::with_capacity(layer_count.min(1024));
    for _ in 0..layer_count {
        let spec = match r.u8()? {
            0 => LayerSpec::Conv { kernel: r.u32()?, stride: r.u32()?, out_channels: r.u32()? },
            1 => LayerSpec::MaxPool { window: r.u32()?, stride: r.u32()? },
            2 => LayerSpec::Dense { width: r.u32()? },
            3 => LayerSpec::Relu,
            tag => return Err(Error::Format(format!("unknown layer tag {tag}"))),
        };
        specs.push(spec);
    }
    let tensor_count = r.u32()?;
    let skeleton = ConvNet::<F>::new(input, &specs, 0)?;
    if skeleton.num_classes() != num_classes {
        return Err(Error::shape(format!(
            "header says {num_classes} classes, layers produce {}",
            skeleton.num_classes()
        )));
    }
    let shapes: Vec<Vec<usize>> = skeleton.parameters().iter().map(|t| t.shape().to_vec()).collect();
    if tensor_count != shapes.len() {
        return Err(Error::shape(format!("{tensor_count} tensors stored, layers need {}", shapes.len())));
    }
    let mut params = Vec::with_capacity(shapes.len());
    for shape in shapes {
        let n = r.u32()?;
        let want: usize = shape.iter().product();
        if n != want {
            return Err(Error::shape(format!("tensor of {n} values where {want} are needed")));
        }
        let raw = r.take(n * 4)?;
        let values = raw
            .chunks_exact(4)
            .map(|b| F::of(f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))))
            .collect();
        params.push(Tensor::new(shape, values)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes in weight file", bytes.len() - r.pos)));
    }
    ConvNet::from_parts(input, &specs, params)
}

pub fn write_model<F: Real>(model: &ConvNet<F>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path.as_ref(), save_model(model)).map_err(|e| Error::io(path, e))
}

pub fn read_model<F: Real>(path: impl AsRef<Path>) -> Result<ConvNet<F>> {
    let bytes = std::fs::read(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    load_model(&bytes)
}
