//! `cameras.json`: an array of pinhole views with their image paths.

use std::fs;
use std::path::{Path, PathBuf};

use mcgs_core::{CameraView, Image};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::image_io::{read_png, write_png};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub view_id: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Row-major world-to-camera rotation.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
    pub width: usize,
    pub height: usize,
    /// Relative to the directory holding the camera file.
    pub image_path: String,
}

impl CameraRecord {
    pub fn from_view(view: &CameraView, image_path: impl Into<String>) -> Self {
        let r = &view.rotation;
        Self {
            view_id: view.view_id,
            fx: view.fx,
            fy: view.fy,
            cx: view.cx,
            cy: view.cy,
            rotation: [
                r[(0, 0)],
                r[(0, 1)],
                r[(0, 2)],
                r[(1, 0)],
                r[(1, 1)],
                r[(1, 2)],
                r[(2, 0)],
                r[(2, 1)],
                r[(2, 2)],
            ],
            translation: [view.translation.x, view.translation.y, view.translation.z],
            width: view.width,
            height: view.height,
            image_path: image_path.into(),
        }
    }

    pub fn to_view(&self, image: Image) -> CliResult<CameraView> {
        Ok(CameraView::new(
            self.view_id,
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            Matrix3::from_row_slice(&self.rotation),
            Vector3::from(self.translation),
            image,
        )?)
    }
}

pub fn read_records(path: &Path) -> CliResult<Vec<CameraRecord>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::parse(path, e.to_string()))
}

/// Loads every camera with its image.
pub fn read_cameras(path: &Path) -> CliResult<Vec<CameraView>> {
    let base = path.parent().unwrap_or(Path::new("."));
    read_records(path)?
        .iter()
        .map(|rec| {
            let image = read_png(&base.join(&rec.image_path))?;
            rec.to_view(image)
        })
        .collect()
}

/// Loads cameras with blank images, for rendering without ground truth.
pub fn read_cameras_without_images(path: &Path) -> CliResult<Vec<CameraView>> {
    read_records(path)?
        .iter()
        .map(|rec| rec.to_view(Image::new(rec.width, rec.height, 3)))
        .collect()
}

pub fn write_records(path: &Path, records: &[CameraRecord]) -> CliResult<()> {
    let text = serde_json::to_string_pretty(records).expect("camera records serialize");
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Writes `cameras.json` plus one PNG per view under `images/`.
pub fn write_cameras(dir: &Path, views: &[CameraView]) -> CliResult<PathBuf> {
    let images = dir.join("images");
    fs::create_dir_all(&images).map_err(|e| CliError::io(&images, e))?;
    let mut records = Vec::with_capacity(views.len());
    for v in views {
        let rel = format!("images/{:03}.png", v.view_id);
        write_png(&dir.join(&rel), &v.image)?;
        records.push(CameraRecord::from_view(v, rel));
    }
    let path = dir.join("cameras.json");
    write_records(&path, &records)?;
    Ok(path)
}
