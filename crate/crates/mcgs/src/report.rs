//! Training loss log and evaluation report.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use mcgs_core::trainer::IterRecord;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const LOSS_HEADER: &str = "iter,photometric,eadr,eadr_weight,total,n_gaussians";

pub fn format_loss_csv(records: &[IterRecord]) -> String {
    let mut s = String::from(LOSS_HEADER);
    s.push('\n');
    for r in records {
        let l = &r.loss;
        writeln!(
            s,
            "{},{:?},{:?},{:?},{:?},{}",
            r.iter, l.photometric, l.eadr, l.eadr_weight, l.total, r.n_gaussians
        )
        .expect("writing to a string");
    }
    s
}

pub fn write_loss_csv(path: &Path, records: &[IterRecord]) -> CliResult<()> {
    fs::write(path, format_loss_csv(records)).map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewScore {
    pub view_id: u32,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub views: Vec<ViewScore>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub n_gaussians: usize,
    /// Renders per second of the first view.
    pub fps: f64,
    pub masked: bool,
    /// Always `null`: no learned perceptual metric ships with this tool.
    pub lpips: Option<f64>,
    pub notes: Vec<String>,
}

impl EvalReport {
    pub fn new(views: Vec<ViewScore>, n_gaussians: usize, fps: f64, masked: bool) -> Self {
        let n = views.len().max(1) as f64;
        Self {
            mean_psnr: views.iter().map(|v| v.psnr).sum::<f64>() / n,
            mean_ssim: views.iter().map(|v| v.ssim).sum::<f64>() / n,
            views,
            n_gaussians,
            fps,
            masked,
            lpips: None,
            notes: vec!["LPIPS is not computed: it needs pretrained network weights".into()],
        }
    }
}

pub fn write_report(path: &Path, report: &EvalReport) -> CliResult<()> {
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_report(path: &Path) -> CliResult<EvalReport> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::parse(path, e.to_string()))
}
