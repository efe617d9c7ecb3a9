//! Binary little-endian PLY with a single `vertex` element.
//!
//! Gaussian fields use the usual splatting property names (`f_dc_*`,
//! channel-major `f_rest_*`, `opacity`, `scale_*`, `rot_*`) stored as raw,
//! pre-activation float32 values. Seed clouds store double positions,
//! 8-bit colours and a `source` tag (0 matched, 1 filled).

use std::fs;
use std::io::{BufRead, Cursor, Read};
use std::path::Path;

use mcgs_core::gaussian::{GaussianField, Primitive};
use mcgs_core::initializer::{PointCloudSeed, PointSource};
use mcgs_core::sh;
use nalgebra::Vector3;

use super::image_io::to_u8;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Scalar::I8 => "char",
            Scalar::U8 => "uchar",
            Scalar::I16 => "short",
            Scalar::U16 => "ushort",
            Scalar::I32 => "int",
            Scalar::U32 => "uint",
            Scalar::F32 => "float",
            Scalar::F64 => "double",
        }
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }

    fn encode(self, v: f64, out: &mut Vec<u8>) {
        match self {
            Scalar::I8 => out.push(v as i8 as u8),
            Scalar::U8 => out.push(v as u8),
            Scalar::I16 => out.extend_from_slice(&(v as i16).to_le_bytes()),
            Scalar::U16 => out.extend_from_slice(&(v as u16).to_le_bytes()),
            Scalar::I32 => out.extend_from_slice(&(v as i32).to_le_bytes()),
            Scalar::U32 => out.extend_from_slice(&(v as u32).to_le_bytes()),
            Scalar::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Scalar::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
}

/// Vertex table: property names and types plus row-major values.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexTable {
    pub properties: Vec<(String, Scalar)>,
    pub rows: usize,
    pub values: Vec<f64>,
}

impl VertexTable {
    pub fn new(properties: Vec<(String, Scalar)>) -> Self {
        Self {
            properties,
            rows: 0,
            values: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.properties.len());
        self.values.extend_from_slice(row);
        self.rows += 1;
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.properties.iter().position(|(n, _)| n == name)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.properties.len() + col]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"ply\nformat binary_little_endian 1.0\n");
        out.extend_from_slice(format!("element vertex {}\n", self.rows).as_bytes());
        for (name, ty) in &self.properties {
            out.extend_from_slice(format!("property {} {}\n", ty.name(), name).as_bytes());
        }
        out.extend_from_slice(b"end_header\n");
        let width = self.properties.len();
        for r in 0..self.rows {
            for (c, (_, ty)) in self.properties.iter().enumerate() {
                ty.encode(self.values[r * width + c], &mut out);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, String> {
        let mut cursor = Cursor::new(bytes);
        let mut line = String::new();
        let mut next_line = |cursor: &mut Cursor<&[u8]>| -> Result<String, String> {
            line.clear();
            let n = cursor.read_line(&mut line).map_err(|e| e.to_string())?;
            if n == 0 {
                return Err("unexpected end of header".into());
            }
            Ok(line.trim_end().to_string())
        };
        if next_line(&mut cursor)? != "ply" {
            return Err("missing `ply` magic".into());
        }
        let mut rows = None;
        let mut properties = Vec::new();
        let mut in_vertex = false;
        loop {
            let l = next_line(&mut cursor)?;
            let parts: Vec<&str> = l.split_whitespace().collect();
            match parts.as_slice() {
                ["format", "binary_little_endian", _] => {}
                ["format", other, _] => return Err(format!("unsupported format `{other}`")),
                ["comment", ..] | ["obj_info", ..] | [] => {}
                ["element", "vertex", n] => {
                    rows = Some(n.parse::<usize>().map_err(|e| e.to_string())?);
                    in_vertex = true;
                }
                ["element", name, _] => return Err(format!("unsupported element `{name}`")),
                ["property", "list", ..] => return Err("list properties are not supported".into()),
                ["property", ty, name] if in_vertex => {
                    let ty = Scalar::parse(ty).ok_or_else(|| format!("unknown property type `{ty}`"))?;
                    properties.push((name.to_string(), ty));
                }
                ["end_header"] => break,
                _ => return Err(format!("unexpected header line `{l}`")),
            }
        }
        let rows = rows.ok_or("no vertex element")?;
        let stride: usize = properties.iter().map(|(_, t)| t.size()).sum();
        let mut body = Vec::new();
        cursor.read_to_end(&mut body).map_err(|e| e.to_string())?;
        if body.len() < rows * stride {
            return Err(format!("body holds {} bytes, expected {}", body.len(), rows * stride));
        }
        let mut values = Vec::with_capacity(rows * properties.len());
        for r in 0..rows {
            let mut off = r * stride;
            for (_, ty) in &properties {
                values.push(ty.decode(&body[off..off + ty.size()]));
                off += ty.size();
            }
        }
        Ok(Self {
            properties,
            rows,
            values,
        })
    }
}

pub fn read_table(path: &Path) -> CliResult<VertexTable> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    VertexTable::from_bytes(&bytes).map_err(|m| CliError::parse(path, m))
}

pub fn write_table(path: &Path, table: &VertexTable) -> CliResult<()> {
    fs::write(path, table.to_bytes()).map_err(|e| CliError::io(path, e))
}

fn field_properties(sh_degree: usize) -> Vec<(String, Scalar)> {
    let rest = sh::basis_len(sh_degree) - 1;
    let mut names: Vec<String> = ["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"].map(String::from).to_vec();
    names.extend((0..3 * rest).map(|k| format!("f_rest_{k}")));
    names.push("opacity".into());
    names.extend((0..3).map(|k| format!("scale_{k}")));
    names.extend((0..4).map(|k| format!("rot_{k}")));
    names.into_iter().map(|n| (n, Scalar::F32)).collect()
}

pub fn field_to_table(field: &GaussianField) -> VertexTable {
    let nb = field.sh_len();
    let rest = nb - 1;
    let mut table = VertexTable::new(field_properties(field.sh_degree));
    let mut row = Vec::with_capacity(table.properties.len());
    for i in 0..field.len() {
        row.clear();
        let p = field.primitive(i);
        row.extend_from_slice(&p.position);
        row.extend_from_slice(&p.sh[..3]);
        for c in 0..3 {
            for b in 1..=rest {
                row.push(p.sh[b * 3 + c]);
            }
        }
        row.push(p.opacity_logit);
        row.extend_from_slice(&p.log_scale);
        row.extend_from_slice(&p.rotation);
        table.push_row(&row);
    }
    table
}

pub fn table_to_field(table: &VertexTable) -> Result<GaussianField, String> {
    let col = |name: &str| table.column(name).ok_or_else(|| format!("missing property `{name}`"));
    let n_rest = table.properties.iter().filter(|(n, _)| n.starts_with("f_rest_")).count();
    if n_rest % 3 != 0 {
        return Err(format!("{n_rest} f_rest properties is not a multiple of 3"));
    }
    let nb = n_rest / 3 + 1;
    let degree = (0..=sh::MAX_DEGREE)
        .find(|d| sh::basis_len(*d) == nb)
        .ok_or_else(|| format!("{n_rest} f_rest properties match no SH degree"))?;
    let pos = [col("x")?, col("y")?, col("z")?];
    let dc = [col("f_dc_0")?, col("f_dc_1")?, col("f_dc_2")?];
    let rest: Vec<usize> = (0..n_rest).map(|k| col(&format!("f_rest_{k}"))).collect::<Result<_, _>>()?;
    let opacity = col("opacity")?;
    let scale = [col("scale_0")?, col("scale_1")?, col("scale_2")?];
    let rot = [col("rot_0")?, col("rot_1")?, col("rot_2")?, col("rot_3")?];
    let mut field = GaussianField::empty(degree);
    for r in 0..table.rows {
        let mut coeffs = vec![0.0; nb * 3];
        for c in 0..3 {
            coeffs[c] = table.get(r, dc[c]);
            for b in 1..nb {
                coeffs[b * 3 + c] = table.get(r, rest[c * (nb - 1) + b - 1]);
            }
        }
        field.push(&Primitive {
            position: pos.map(|k| table.get(r, k)),
            rotation: rot.map(|k| table.get(r, k)),
            log_scale: scale.map(|k| table.get(r, k)),
            opacity_logit: table.get(r, opacity),
            sh: coeffs,
        });
    }
    Ok(field)
}

pub fn write_field(path: &Path, field: &GaussianField) -> CliResult<()> {
    write_table(path, &field_to_table(field))
}

pub fn read_field(path: &Path) -> CliResult<GaussianField> {
    let table = read_table(path)?;
    table_to_field(&table).map_err(|m| CliError::parse(path, m))
}

pub fn seed_to_table(seed: &PointCloudSeed) -> VertexTable {
    let props = vec![
        ("x".into(), Scalar::F64),
        ("y".into(), Scalar::F64),
        ("z".into(), Scalar::F64),
        ("red".into(), Scalar::U8),
        ("green".into(), Scalar::U8),
        ("blue".into(), Scalar::U8),
        ("source".into(), Scalar::U8),
    ];
    let mut table = VertexTable::new(props);
    for i in 0..seed.len() {
        let p = seed.positions[i];
        let c = seed.colors[i];
        let tag = match seed.source[i] {
            PointSource::Matched => 0.0,
            PointSource::Filled => 1.0,
        };
        table.push_row(&[
            p.x,
            p.y,
            p.z,
            to_u8(c[0]) as f64,
            to_u8(c[1]) as f64,
            to_u8(c[2]) as f64,
            tag,
        ]);
    }
    table
}

/// Colours are 8-bit in the file; a missing `source` property means Matched.
pub fn table_to_seed(table: &VertexTable) -> Result<PointCloudSeed, String> {
    let col = |name: &str| table.column(name).ok_or_else(|| format!("missing property `{name}`"));
    let (x, y, z) = (col("x")?, col("y")?, col("z")?);
    let rgb = [col("red")?, col("green")?, col("blue")?];
    let source = table.column("source");
    let mut seed = PointCloudSeed::default();
    for r in 0..table.rows {
        let tag = match source.map(|c| table.get(r, c)) {
            None | Some(0.0) => PointSource::Matched,
            Some(1.0) => PointSource::Filled,
            Some(other) => return Err(format!("row {r}: unknown source tag {other}")),
        };
        seed.push(
            Vector3::new(table.get(r, x), table.get(r, y), table.get(r, z)),
            rgb.map(|c| table.get(r, c) / 255.0),
            tag,
        );
    }
    Ok(seed)
}

pub fn write_seed(path: &Path, seed: &PointCloudSeed) -> CliResult<()> {
    write_table(path, &seed_to_table(seed))
}

pub fn read_seed(path: &Path) -> CliResult<PointCloudSeed> {
    let table = read_table(path)?;
    table_to_seed(&table).map_err(|m| CliError::parse(path, m))
}
