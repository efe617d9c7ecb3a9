//! Correspondence text: `view_s view_t u_s v_s u_t v_t confidence` per line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use mcgs_core::initializer::{CorrespondenceSet, Match};

use crate::error::{CliError, CliResult};

pub fn parse_matches(text: &str) -> Result<CorrespondenceSet, String> {
    let mut pairs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 7 {
            return Err(format!("line {}: expected 7 fields, found {}", n + 1, f.len()));
        }
        let int = |s: &str| s.parse::<u32>().map_err(|e| format!("line {}: {e}", n + 1));
        let num = |s: &str| s.parse::<f64>().map_err(|e| format!("line {}: {e}", n + 1));
        let m = Match {
            view_s: int(f[0])?,
            view_t: int(f[1])?,
            pixel_s: (num(f[2])?, num(f[3])?),
            pixel_t: (num(f[4])?, num(f[5])?),
            confidence: num(f[6])?,
        };
        if m.view_s == m.view_t {
            return Err(format!("line {}: a match needs two different views", n + 1));
        }
        pairs.push(m);
    }
    Ok(CorrespondenceSet { pairs })
}

/// Shortest round-trip formatting, so parsing recovers every value exactly.
pub fn format_matches(set: &CorrespondenceSet) -> String {
    let mut out = String::from("# view_s view_t u_s v_s u_t v_t confidence\n");
    for m in &set.pairs {
        writeln!(
            out,
            "{} {} {:?} {:?} {:?} {:?} {:?}",
            m.view_s, m.view_t, m.pixel_s.0, m.pixel_s.1, m.pixel_t.0, m.pixel_t.1, m.confidence
        )
        .expect("writing to a string");
    }
    out
}

pub fn read_matches(path: &Path) -> CliResult<CorrespondenceSet> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_matches(&text).map_err(|m| CliError::parse(path, m))
}

pub fn write_matches(path: &Path, set: &CorrespondenceSet) -> CliResult<()> {
    fs::write(path, format_matches(set)).map_err(|e| CliError::io(path, e))
}
