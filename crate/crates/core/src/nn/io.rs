//! Binary model format (little-endian): magic `NFNN`, version u16, layer count
//! u16, then per layer rows u32, cols u32, row-major f64 weights, f64 biases;
//! finally f64 residual damping and f64 leaky-ReLU slope.

use std::io::{Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::{Dense, Mlp};
use crate::error::{Error, Result};
use crate::linalg::{RMat, RVec};

pub const MAGIC: &[u8; 4] = b"NFNN";
const VERSION: u16 = 1;

pub fn write_mlp<W: Write>(mut w: W, net: &Mlp) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u16::<LE>(VERSION)?;
    let count =
        u16::try_from(net.layers().len()).map_err(|_| Error::Format("too many layers".into()))?;
    w.write_u16::<LE>(count)?;
    for l in net.layers() {
        let (rows, cols) = l.weight.shape();
        w.write_u32::<LE>(rows as u32)?;
        w.write_u32::<LE>(cols as u32)?;
        for r in 0..rows {
            for c in 0..cols {
                w.write_f64::<LE>(l.weight[(r, c)])?;
            }
        }
        for &b in l.bias.iter() {
            w.write_f64::<LE>(b)?;
        }
    }
    w.write_f64::<LE>(net.damping())?;
    w.write_f64::<LE>(net.slope())?;
    Ok(())
}

pub fn read_mlp<R: Read>(mut r: R) -> Result<Mlp> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected NFNN")));
    }
    let version = r.read_u16::<LE>()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported model version {version}"
        )));
    }
    let count = r.read_u16::<LE>()? as usize;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let rows = r.read_u32::<LE>()? as usize;
        let cols = r.read_u32::<LE>()? as usize;
        let mut data = vec![0.0; rows * cols];
        r.read_f64_into::<LE>(&mut data)?;
        let mut bias = vec![0.0; rows];
        r.read_f64_into::<LE>(&mut bias)?;
        layers.push(Dense {
            weight: RMat::from_row_slice(rows, cols, &data),
            bias: RVec::from_vec(bias),
        });
    }
    let damping = r.read_f64::<LE>()?;
    let slope = r.read_f64::<LE>()?;
    Mlp::new(layers, slope, damping)
}
