//! Binary checkpoint, little-endian throughout:
//!
//! ```text
//! "RNLS" | version u32 | n u32 | N_j u64 x3 | L_j f64 x3 | t f64 | dt f64
//!        | meta length u64 | meta JSON (params, steps, status, refine)
//!        | payload: re, im f64 pairs in canonical node order
//! ```

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::IoError;
use crate::grid::{GridSpec, WaveField};
use crate::integrator::{EvolutionState, RefineState, Status};
use crate::operators::ParamsSpec;

pub const MAGIC: &[u8; 4] = b"RNLS";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Meta {
    params: ParamsSpec,
    steps: u64,
    status: Status,
    refine: RefineState,
}

pub fn encode_checkpoint(state: &EvolutionState) -> Result<Vec<u8>, IoError> {
    let g = &state.field.grid;
    let meta = Meta {
        params: state
            .params
            .spec()
            .map_err(|e| IoError::Header(e.to_string()))?,
        steps: state.steps,
        status: state.status,
        refine: state.refine.clone(),
    };
    let blob = serde_json::to_vec(&meta).map_err(|e| IoError::Header(e.to_string()))?;
    let mut out = Vec::with_capacity(80 + blob.len() + 16 * state.field.values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(g.dim as u32).to_le_bytes());
    for n in g.points {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    for l in g.extents {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out.extend_from_slice(&state.t.to_le_bytes());
    out.extend_from_slice(&state.dt.to_le_bytes());
    out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
    out.extend_from_slice(&blob);
    for z in &state.field.values {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IoError> {
        if self.buf.len() - self.pos < n {
            return Err(IoError::TruncatedHeader);
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, IoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, IoError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, IoError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<EvolutionState, IoError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4).map_err(|_| IoError::Magic)? != MAGIC {
        return Err(IoError::Magic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(IoError::Version {
            found: version,
            expected: VERSION,
        });
    }
    let dim = r.u32()? as usize;
    let mut points = [0usize; 3];
    for p in points.iter_mut() {
        *p = r.u64()? as usize;
    }
    let mut extents = [0.0; 3];
    for l in extents.iter_mut() {
        *l = r.f64()?;
    }
    let t = r.f64()?;
    let dt = r.f64()?;
    let len = r.u64()? as usize;
    let blob = r.take(len)?;
    let meta: Meta = serde_json::from_slice(blob).map_err(|e| IoError::Header(e.to_string()))?;
    let grid = GridSpec::new(dim, &extents[..dim], &points[..dim])
        .map_err(|e| IoError::Header(e.to_string()))?;
    let payload = &bytes[r.pos..];
    let need = 16 * grid.len();
    if payload.len() < need {
        return Err(IoError::Truncated {
            expected: need,
            found: payload.len(),
        });
    }
    if payload.len() > need {
        return Err(IoError::Header(format!(
            "{} trailing bytes",
            payload.len() - need
        )));
    }
    let values = payload
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    Ok(EvolutionState {
        field: WaveField { grid, values },
        t,
        steps: meta.steps,
        params: meta.params.into(),
        dt,
        status: meta.status,
        refine: meta.refine,
    })
}

pub fn save_checkpoint(state: &EvolutionState, path: &Path) -> Result<(), IoError> {
    fs::write(path, encode_checkpoint(state)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<EvolutionState, IoError> {
    decode_checkpoint(&fs::read(path)?)
}
