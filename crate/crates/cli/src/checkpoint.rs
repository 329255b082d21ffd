//! `MRLM1` model checkpoints: the magic, then `d_in`, `hidden` and
//! `n_classes` as little-endian u32, then every parameter as a little-endian
//! f64 in W1, b1, W2, b2 order.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use voradv_core::net::{MlpDims, MlpModel};

use crate::error::{CliError, CliResult, IoContext};

pub const MAGIC: &[u8; 5] = b"MRLM1";

pub fn encode<W: Write>(model: &MlpModel, mut w: W) -> std::io::Result<()> {
    let d = model.dims();
    w.write_all(MAGIC)?;
    for v in [d.d_in, d.hidden, d.n_classes] {
        w.write_u32::<LittleEndian>(v as u32)?;
    }
    for &p in model.params() {
        w.write_f64::<LittleEndian>(p)?;
    }
    w.flush()
}

pub fn decode<R: Read>(mut r: R, path: &Path) -> CliResult<MlpModel> {
    let bad = |msg: &str| CliError::format(path, msg.to_string());
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
    if &magic != MAGIC {
        return Err(bad("not an MRLM1 checkpoint"));
    }
    let mut dims = [0usize; 3];
    for v in &mut dims {
        *v = r.read_u32::<LittleEndian>().map_err(|_| bad("truncated header"))? as usize;
    }
    let dims = MlpDims::new(dims[0], dims[1], dims[2])?;
    let mut params = vec![0.0; dims.n_params()];
    r.read_f64_into::<LittleEndian>(&mut params).map_err(|_| bad("truncated parameters"))?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest).at(path)? != 0 {
        return Err(bad("trailing bytes after parameters"));
    }
    Ok(MlpModel::from_params(dims, params)?)
}

pub fn save(model: &MlpModel, path: &Path) -> CliResult<()> {
    let f = std::fs::File::create(path).at(path)?;
    encode(model, std::io::BufWriter::new(f)).at(path)
}

pub fn load(path: &Path) -> CliResult<MlpModel> {
    let f = std::fs::File::open(path).at(path)?;
    decode(std::io::BufReader::new(f), path)
}
