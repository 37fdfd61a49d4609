//! Binary model file: `GRBM`, u32 version, u32 p, u32 dim_s, u32 dim_c, then
//! b, f, g, z, F (row-major), G (row-major) as little-endian f64.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{DMatrix, DVector};

use super::GrbmParams;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"GRBM";
const VERSION: u32 = 1;

pub fn write_model<W: Write>(params: &GrbmParams, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    for d in [params.dim_p(), params.dim_s(), params.dim_c()] {
        w.write_u32::<LittleEndian>(d as u32)?;
    }
    for v in [
        &params.visible_bias,
        &params.speaker_bias,
        &params.channel_bias,
        &params.log_variance,
    ] {
        write_f64s(&mut w, v.iter())?;
    }
    for m in [&params.speaker_loading, &params.channel_loading] {
        write_f64s(&mut w, m.transpose().iter())?;
    }
    Ok(())
}

pub fn read_model<R: Read>(mut r: R) -> Result<GrbmParams> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("missing GRBM magic".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported GRBM version {version}")));
    }
    let p = r.read_u32::<LittleEndian>()? as usize;
    let ds = r.read_u32::<LittleEndian>()? as usize;
    let dc = r.read_u32::<LittleEndian>()? as usize;
    let visible_bias = DVector::from_vec(read_f64s(&mut r, p)?);
    let speaker_bias = DVector::from_vec(read_f64s(&mut r, ds)?);
    let channel_bias = DVector::from_vec(read_f64s(&mut r, dc)?);
    let log_variance = DVector::from_vec(read_f64s(&mut r, p)?);
    let speaker_loading = DMatrix::from_row_slice(p, ds, &read_f64s(&mut r, p * ds)?);
    let channel_loading = DMatrix::from_row_slice(p, dc, &read_f64s(&mut r, p * dc)?);
    let params = GrbmParams {
        visible_bias,
        speaker_bias,
        channel_bias,
        speaker_loading,
        channel_loading,
        log_variance,
    };
    params.validate()?;
    Ok(params)
}

pub(crate) fn write_f64s<'a, W: Write>(w: &mut W, values: impl Iterator<Item = &'a f64>) -> Result<()> {
    for &v in values {
        w.write_f64::<LittleEndian>(v)?;
    }
    Ok(())
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n];
    r.read_f64_into::<LittleEndian>(&mut out)?;
    Ok(out)
}
