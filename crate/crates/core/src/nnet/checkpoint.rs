//! `CUNW` checkpoint files.
//!
//! Layout, all integers and floats little-endian:
//!
//! | field                | type            |
//! |----------------------|-----------------|
//! | magic `"CUNW"`       | 4 bytes         |
//! | format version       | u32             |
//! | depth, base channels, input channels | 3 × u32 |
//! | dropout rate         | f64             |
//! | seed                 | u64             |
//! | kernel sigma, truncation | 2 × f64     |
//! | training tile width, height | 2 × u32  |
//! | tensor count         | u32             |
//! | per tensor: length u32, then values | f32 × length |
//! | CRC32 of everything above | u32        |
//!
//! Tensor order: for every conv unit (encoder levels shallow to deep, the two
//! bottleneck units, decoder levels deep to shallow with the upsampling unit
//! first) conv weight, conv bias, gamma, beta, running mean, running
//! variance; then the head weight and bias.

use std::io::{Read, Write};
use std::path::Path;

use super::unet::{UNet, UNetConfig, UNetParams};
use crate::error::{Error, Result};
use crate::heatmap::KernelSpec;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"CUNW";

/// Everything besides weights needed to run a saved model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelMeta {
    pub unet: UNetConfig,
    pub kernel: KernelSpec,
    /// Spatial size of the training images.
    pub tile_width: usize,
    pub tile_height: usize,
}

fn tensors(params: &UNetParams<f32>) -> Vec<&[f32]> {
    let mut out: Vec<&[f32]> = Vec::new();
    for u in params.units() {
        out.extend([
            &u.conv.weight[..],
            &u.conv.bias,
            &u.bn.gamma,
            &u.bn.beta,
            &u.bn.running_mean,
            &u.bn.running_var,
        ]);
    }
    out.push(&params.head.weight);
    out.push(&params.head.bias);
    out
}

fn tensors_mut(params: &mut UNetParams<f32>) -> Vec<&mut Vec<f32>> {
    let mut out: Vec<&mut Vec<f32>> = Vec::new();
    let UNetParams {
        encoder,
        bottleneck,
        decoder,
        head,
    } = params;
    let mut units = Vec::new();
    for level in encoder.iter_mut() {
        units.extend(level.iter_mut());
    }
    units.extend(bottleneck.iter_mut());
    for d in decoder.iter_mut() {
        units.push(&mut d.up);
        units.extend(d.convs.iter_mut());
    }
    for u in units {
        out.push(&mut u.conv.weight);
        out.push(&mut u.conv.bias);
        out.push(&mut u.bn.gamma);
        out.push(&mut u.bn.beta);
        out.push(&mut u.bn.running_mean);
        out.push(&mut u.bn.running_var);
    }
    out.push(&mut head.weight);
    out.push(&mut head.bias);
    out
}

pub fn write_checkpoint<W: Write>(model: &UNet<f32>, meta: &ModelMeta, mut out: W) -> Result<()> {
    if model.config != meta.unet {
        return Err(Error::Parameter("model config and checkpoint metadata disagree".into()));
    }
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let c = &meta.unet;
    for v in [c.depth, c.base_channels, c.in_channels] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    buf.extend_from_slice(&c.dropout_rate.to_le_bytes());
    buf.extend_from_slice(&c.seed.to_le_bytes());
    buf.extend_from_slice(&meta.kernel.sigma().to_le_bytes());
    buf.extend_from_slice(&meta.kernel.truncation().to_le_bytes());
    buf.extend_from_slice(&(meta.tile_width as u32).to_le_bytes());
    buf.extend_from_slice(&(meta.tile_height as u32).to_le_bytes());
    let list = tensors(&model.params);
    buf.extend_from_slice(&(list.len() as u32).to_le_bytes());
    for t in list {
        buf.extend_from_slice(&(t.len() as u32).to_le_bytes());
        for v in t {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    out.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format("checkpoint body ends early".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<(UNet<f32>, ModelMeta)> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() >= 4 && &bytes[..4] != MAGIC {
        return Err(Error::Format(format!(
            "expected magic \"CUNW\", found {:?}",
            String::from_utf8_lossy(&bytes[..4])
        )));
    }
    if bytes.len() < 12 {
        return Err(Error::Crc {
            stored: 0,
            computed: crc32fast::hash(&bytes),
        });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Crc { stored, computed });
    }
    let mut cur = Cursor { bytes: body, pos: 4 };
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            supported: CHECKPOINT_VERSION,
        });
    }
    let depth = cur.u32()? as usize;
    let base_channels = cur.u32()? as usize;
    let in_channels = cur.u32()? as usize;
    let dropout_rate = cur.f64()?;
    let seed = cur.u64()?;
    let unet = UNetConfig {
        depth,
        base_channels,
        in_channels,
        dropout_rate,
        seed,
    };
    unet.validate()?;
    let kernel = KernelSpec::new(cur.f64()?, cur.f64()?)?;
    let tile_width = cur.u32()? as usize;
    let tile_height = cur.u32()? as usize;

    let mut model = UNet::<f32>::new(unet)?;
    let slots = tensors_mut(&mut model.params);
    let count = cur.u32()? as usize;
    if count != slots.len() {
        return Err(Error::Format(format!(
            "checkpoint holds {count} tensors, config implies {}",
            slots.len()
        )));
    }
    for (i, slot) in slots.into_iter().enumerate() {
        let len = cur.u32()? as usize;
        if len != slot.len() {
            return Err(Error::Format(format!(
                "tensor {i} holds {len} values, config implies {}",
                slot.len()
            )));
        }
        let raw = cur.take(len * 4)?;
        for (v, chunk) in slot.iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    if cur.pos != body.len() {
        return Err(Error::Format("trailing bytes after tensors".into()));
    }
    Ok((
        model,
        ModelMeta {
            unet,
            kernel,
            tile_width,
            tile_height,
        },
    ))
}

pub fn save_checkpoint(model: &UNet<f32>, meta: &ModelMeta, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(model, meta, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(UNet<f32>, ModelMeta)> {
    read_checkpoint(std::fs::File::open(path)?)
}
