//! Feature-stack file: magic `MCFS`, then little-endian u32 header fields and
//! channel-major float32 maps.

use std::fs;
use std::path::Path;

use mcgs_core::pruning::{FeatureMap, FeatureStack};

use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 4] = b"MCFS";
pub const VERSION: u32 = 1;

pub fn encode(stack: &FeatureStack) -> Vec<u8> {
    let mut out = Vec::new();
    let u32le = |v: u32, out: &mut Vec<u8>| out.extend_from_slice(&v.to_le_bytes());
    out.extend_from_slice(MAGIC);
    u32le(VERSION, &mut out);
    u32le(stack.views.len() as u32, &mut out);
    u32le(stack.level_dims.len() as u32, &mut out);
    for &k in &stack.level_dims {
        u32le(k as u32, &mut out);
    }
    for (id, map) in &stack.views {
        u32le(*id, &mut out);
        u32le(map.height as u32, &mut out);
        u32le(map.width as u32, &mut out);
        for v in &map.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], String> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<FeatureStack, String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err("missing MCFS magic".into());
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let n_views = r.u32()? as usize;
    let levels = r.u32()? as usize;
    let level_dims: Vec<usize> = (0..levels).map(|_| r.u32().map(|v| v as usize)).collect::<Result<_, _>>()?;
    let dims: usize = level_dims.iter().sum();
    let mut views = Vec::with_capacity(n_views);
    for _ in 0..n_views {
        let id = r.u32()?;
        let h = r.u32()? as usize;
        let w = r.u32()? as usize;
        let n = dims * h * w;
        let raw = r.take(n * 4)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        views.push((
            id,
            FeatureMap {
                dims,
                width: w,
                height: h,
                data,
            },
        ));
    }
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    Ok(FeatureStack { level_dims, views })
}

pub fn read_features(path: &Path) -> CliResult<FeatureStack> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes).map_err(|m| CliError::parse(path, m))
}

pub fn write_features(path: &Path, stack: &FeatureStack) -> CliResult<()> {
    fs::write(path, encode(stack)).map_err(|e| CliError::io(path, e))
}
