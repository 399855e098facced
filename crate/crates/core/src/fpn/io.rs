//! FPN model files: a header record (gamma f64, lip_budget f64, N u32, M u32)
//! followed by the `NFNN` network body.

use std::io::{Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::FpnModel;
use crate::error::{Error, Result};
use crate::nn::{lipschitz_bound, read_mlp, write_mlp};

pub fn write_fpn<W: Write>(mut w: W, model: &FpnModel) -> Result<()> {
    w.write_f64::<LE>(model.gamma)?;
    w.write_f64::<LE>(model.lip_budget)?;
    w.write_u32::<LE>(model.n as u32)?;
    w.write_u32::<LE>(model.m as u32)?;
    write_mlp(w, &model.denoiser)
}

/// Reads a model and checks its contraction certificate; the weights are not
/// modified.
pub fn read_fpn<R: Read>(mut r: R) -> Result<FpnModel> {
    let gamma = r.read_f64::<LE>()?;
    let lip_budget = r.read_f64::<LE>()?;
    let n = r.read_u32::<LE>()? as usize;
    let m = r.read_u32::<LE>()? as usize;
    let denoiser = read_mlp(r)?;
    if denoiser.input_dim() != 2 * n || denoiser.output_dim() != 2 * n {
        return Err(Error::Format(format!(
            "denoiser widths do not match N = {n}"
        )));
    }
    if !(lip_budget > 0.0 && lip_budget < 1.0) || !(gamma > 0.0) {
        return Err(Error::Format(
            "invalid gamma or Lipschitz budget in header".into(),
        ));
    }
    let bound = lipschitz_bound(&denoiser);
    if bound > lip_budget * (1.0 + 1e-9) {
        return Err(Error::Format(format!(
            "denoiser Lipschitz bound {bound} exceeds the stored budget {lip_budget}"
        )));
    }
    Ok(FpnModel {
        denoiser,
        gamma,
        lip_budget,
        n,
        m,
    })
}
