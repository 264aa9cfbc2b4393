//! Binary parameter files.
//!
//! Layout, little endian: 8-byte magic, `u32` version, `u8` variant tag,
//! `u32` generator and `u32` discriminator tensor counts, then a shape table
//! (`u32` rank followed by `u64` dims per tensor), then every value as `f64`
//! in table order.

use std::io::{Read, Write};

use super::{GanError, Variant};
use crate::ndcore::Tensor;

pub const PARAMS_MAGIC: &[u8; 8] = b"PHYZZYP\0";
pub const PARAMS_VERSION: u32 = 1;

fn io_err(e: std::io::Error) -> GanError {
    GanError::Params(e.to_string())
}

pub fn write_params(
    out: &mut impl Write,
    variant: Variant,
    generator: &[Tensor],
    discriminator: &[Tensor],
) -> Result<(), GanError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(PARAMS_MAGIC);
    buf.extend_from_slice(&PARAMS_VERSION.to_le_bytes());
    buf.push(variant.tag());
    buf.extend_from_slice(&(generator.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(discriminator.len() as u32).to_le_bytes());
    let all = || generator.iter().chain(discriminator);
    for t in all() {
        buf.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
    }
    for t in all() {
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf).map_err(io_err)
}

struct Cursor<'a>(&'a [u8]);

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], GanError> {
        if self.0.len() < N {
            return Err(GanError::Params("truncated file".into()));
        }
        let (head, rest) = self.0.split_at(N);
        self.0 = rest;
        Ok(head.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32, GanError> {
        Ok(u32::from_le_bytes(self.take()?))
    }
}

/// Returns the variant and the generator and discriminator tensors.
pub fn read_params(input: &mut impl Read) -> Result<(Variant, Vec<Tensor>, Vec<Tensor>), GanError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(io_err)?;
    let mut cur = Cursor(&bytes);
    if &cur.take::<8>()? != PARAMS_MAGIC {
        return Err(GanError::Params("not a parameter file (bad magic)".into()));
    }
    let version = cur.u32()?;
    if version != PARAMS_VERSION {
        return Err(GanError::Params(format!("unsupported version {version}")));
    }
    let tag = cur.take::<1>()?[0];
    let variant = Variant::from_tag(tag).ok_or_else(|| GanError::Params(format!("unknown variant tag {tag}")))?;
    let (n_g, n_d) = (cur.u32()? as usize, cur.u32()? as usize);
    let mut shapes = Vec::with_capacity(n_g + n_d);
    for _ in 0..n_g + n_d {
        let rank = cur.u32()? as usize;
        if rank > 8 {
            return Err(GanError::Params(format!("implausible tensor rank {rank}")));
        }
        let shape = (0..rank)
            .map(|_| cur.take::<8>().map(|b| u64::from_le_bytes(b) as usize))
            .collect::<Result<Vec<_>, _>>()?;
        shapes.push(shape);
    }
    let mut tensors = Vec::with_capacity(shapes.len());
    for shape in shapes {
        let n: usize = shape.iter().product();
        if cur.0.len() < n * 8 {
            return Err(GanError::Params("truncated file".into()));
        }
        let data = (0..n).map(|_| cur.take::<8>().map(f64::from_le_bytes)).collect::<Result<_, _>>()?;
        tensors.push(Tensor::new(shape, data)?);
    }
    if !cur.0.is_empty() {
        return Err(GanError::Params(format!("{} trailing bytes", cur.0.len())));
    }
    let discriminator = tensors.split_off(n_g);
    Ok((variant, tensors, discriminator))
}
