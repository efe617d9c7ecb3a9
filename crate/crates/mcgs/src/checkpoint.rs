//! Training checkpoints.
//!
//! A checkpoint is three files sharing a stem: `<stem>.ply` (the field in the
//! interchange format, float32), `<stem>.json` (iteration counters and file
//! names) and `<stem>.bin`, which holds the exact f64 field parameters, the
//! densification statistics and every optimizer moment buffer so that a run
//! resumed from it continues bit for bit.

use std::fs;
use std::path::{Path, PathBuf};

use mcgs_core::gaussian::GaussianField;
use mcgs_core::trainer::{Moments, OptimizerState, TrainState};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::formats::ply::write_field;

const MAGIC: &[u8; 4] = b"MCCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub version: u32,
    pub iter: usize,
    /// Feature-guided pruning steps completed.
    pub t: usize,
    pub optimizer_step: u64,
    pub scene_extent: f64,
    pub n_gaussians: usize,
    pub sh_degree: usize,
    /// Relative to the JSON file.
    pub ply: String,
    pub moments: String,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        v.iter().for_each(|x| self.0.extend_from_slice(&x.to_le_bytes()));
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], String> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len()).ok_or("truncated checkpoint")?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64s(&mut self) -> Result<Vec<f64>, String> {
        let n = self.u64()? as usize;
        let raw = self.take(n.checked_mul(8).ok_or("length overflow")?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

fn groups(opt: &OptimizerState) -> [&Moments; 5] {
    [&opt.positions, &opt.rotations, &opt.log_scales, &opt.opacity, &opt.sh]
}

pub fn encode_state(state: &TrainState) -> Vec<u8> {
    let f = &state.field;
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.u32(f.sh_degree as u32);
    for buf in [&f.positions, &f.rotations, &f.log_scales, &f.opacity_logits, &f.sh_coeffs, &f.grad_accum] {
        w.f64s(buf);
    }
    w.u64(f.grad_count.len() as u64);
    f.grad_count.iter().for_each(|c| w.u32(*c));
    for g in groups(&state.optimizer) {
        w.f64s(&g.m);
        w.f64s(&g.v);
    }
    w.0
}

/// Field and optimizer moments from a blob; counters come from the sidecar.
pub fn decode_state(bytes: &[u8]) -> Result<(GaussianField, OptimizerState), String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err("not a checkpoint blob".into());
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let mut field = GaussianField::empty(r.u32()? as usize);
    field.positions = r.f64s()?;
    field.rotations = r.f64s()?;
    field.log_scales = r.f64s()?;
    field.opacity_logits = r.f64s()?;
    field.sh_coeffs = r.f64s()?;
    field.grad_accum = r.f64s()?;
    let n = r.u64()? as usize;
    field.grad_count = (0..n).map(|_| r.u32()).collect::<Result<_, _>>()?;
    let mut opt = OptimizerState::default();
    for g in [&mut opt.positions, &mut opt.rotations, &mut opt.log_scales, &mut opt.opacity, &mut opt.sh] {
        g.m = r.f64s()?;
        g.v = r.f64s()?;
    }
    if r.pos != bytes.len() {
        return Err("trailing bytes after checkpoint".into());
    }
    field.check_consistent().map_err(|e| e.to_string())?;
    let sh_width = field.sh_len() * 3;
    if opt.rows(sh_width) != [field.len(); 5] || opt.sh.v.len() != opt.sh.m.len() {
        return Err("optimizer moments do not match the field".into());
    }
    Ok((field, opt))
}

/// Writes `<stem>.ply`, `<stem>.bin` and `<stem>.json`; returns the JSON path.
pub fn write_checkpoint(dir: &Path, stem: &str, state: &TrainState) -> CliResult<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let ply = format!("{stem}.ply");
    let blob = format!("{stem}.bin");
    write_field(&dir.join(&ply), &state.field)?;
    let blob_path = dir.join(&blob);
    fs::write(&blob_path, encode_state(state)).map_err(|e| CliError::io(&blob_path, e))?;
    let meta = CheckpointMeta {
        format: "mcgs-checkpoint".into(),
        version: VERSION,
        iter: state.iter,
        t: state.prune_step,
        optimizer_step: state.optimizer.step,
        scene_extent: state.scene_extent,
        n_gaussians: state.field.len(),
        sh_degree: state.field.sh_degree,
        ply,
        moments: blob,
    };
    let path = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(&meta).expect("checkpoint metadata serializes");
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

pub fn read_checkpoint(path: &Path) -> CliResult<TrainState> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let meta: CheckpointMeta = serde_json::from_str(&text).map_err(|e| CliError::parse(path, e.to_string()))?;
    if meta.format != "mcgs-checkpoint" || meta.version != VERSION {
        return Err(CliError::parse(path, "not a version 1 checkpoint"));
    }
    let blob_path = path.parent().unwrap_or(Path::new(".")).join(&meta.moments);
    let bytes = fs::read(&blob_path).map_err(|e| CliError::io(&blob_path, e))?;
    let (field, mut optimizer) = decode_state(&bytes).map_err(|m| CliError::parse(&blob_path, m))?;
    if field.len() != meta.n_gaussians || field.sh_degree != meta.sh_degree {
        return Err(CliError::parse(path, "metadata disagrees with the moment blob"));
    }
    optimizer.step = meta.optimizer_step;
    Ok(TrainState {
        field,
        iter: meta.iter,
        optimizer,
        prune_step: meta.t,
        history: Vec::new(),
        events: Vec::new(),
        scene_extent: meta.scene_extent,
    })
}
