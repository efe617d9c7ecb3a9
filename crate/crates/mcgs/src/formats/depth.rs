//! Raw depth dump: u32 height, u32 width, then row-major float32 values.

use std::fs;
use std::path::Path;

use mcgs_core::Image;

use crate::error::{CliError, CliResult};

pub fn encode(depth: &Image) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * depth.data.len());
    out.extend_from_slice(&(depth.height as u32).to_le_bytes());
    out.extend_from_slice(&(depth.width as u32).to_le_bytes());
    for v in &depth.data {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Image, String> {
    if bytes.len() < 8 {
        return Err("missing header".into());
    }
    let h = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = &bytes[8..];
    if body.len() != 4 * h * w {
        return Err(format!("expected {} bytes of depth, found {}", 4 * h * w, body.len()));
    }
    let data = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
    Image::from_data(w, h, 1, data).map_err(|e| e.to_string())
}

pub fn write_depth(path: &Path, depth: &Image) -> CliResult<()> {
    fs::write(path, encode(depth)).map_err(|e| CliError::io(path, e))
}

pub fn read_depth(path: &Path) -> CliResult<Image> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes).map_err(|m| CliError::parse(path, m))
}
