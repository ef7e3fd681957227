//! Binary serialisation of trained model parameters.
//!
//! Layout: magic `SBPM`, a little-endian `u64` block count, then per block
//! `u64` rows, `u64` cols and `rows·cols` little-endian `f64` values. The
//! blocks of [`SbParams`] are `W`, `b` (as `1 × d`), `W̃1`, `W̃2`.

use std::io::{Read, Write};

use crate::classifier::{ClassifierParams, SbParams};
use crate::diffusion::DiffusionParams;
use crate::{DenseMatrix, Error, Result};

const MAGIC: &[u8; 4] = b"SBPM";

pub fn write_blocks(blocks: &[&DenseMatrix], mut out: impl Write) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&(blocks.len() as u64).to_le_bytes())?;
    for m in blocks {
        out.write_all(&(m.rows() as u64).to_le_bytes())?;
        out.write_all(&(m.cols() as u64).to_le_bytes())?;
        for v in m.as_slice() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u64(input: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

pub fn read_blocks(mut input: impl Read) -> Result<Vec<DenseMatrix>> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Data("not a parameter file (bad magic)".into()));
    }
    let count = read_u64(&mut input)?;
    let mut blocks = Vec::new();
    for _ in 0..count {
        let rows = read_u64(&mut input)? as usize;
        let cols = read_u64(&mut input)? as usize;
        let len = rows
            .checked_mul(cols)
            .filter(|&l| l <= 1 << 32)
            .ok_or_else(|| Error::Data(format!("implausible block shape {rows}×{cols}")))?;
        let mut data = Vec::with_capacity(len);
        let mut buf = [0u8; 8];
        for _ in 0..len {
            input.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        blocks.push(DenseMatrix::from_vec(rows, cols, data)?);
    }
    Ok(blocks)
}

pub fn write_params(params: &SbParams, out: impl Write) -> Result<()> {
    let b = DenseMatrix::from_vec(1, params.diffusion.b.len(), params.diffusion.b.clone())?;
    write_blocks(
        &[&params.diffusion.w, &b, &params.classifier.w1, &params.classifier.w2],
        out,
    )
}

pub fn read_params(input: impl Read) -> Result<SbParams> {
    let blocks = read_blocks(input)?;
    let [w, b, w1, w2]: [DenseMatrix; 4] = blocks
        .try_into()
        .map_err(|v: Vec<DenseMatrix>| Error::Data(format!("expected 4 parameter blocks, found {}", v.len())))?;
    let d = w.cols();
    if b.shape() != (1, d) || w1.shape() != (d, 2 * d) || w2.cols() != d {
        return Err(Error::Data(format!(
            "inconsistent parameter shapes: W {:?}, b {:?}, W1 {:?}, W2 {:?}",
            w.shape(),
            b.shape(),
            w1.shape(),
            w2.shape()
        )));
    }
    Ok(SbParams {
        diffusion: DiffusionParams { w, b: b.into_vec() },
        classifier: ClassifierParams { w1, w2 },
    })
}
