//! Flat `key = value` training configuration. `#` starts a comment; list
//! values are comma separated.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use mcgs_core::trainer::{TrainConfig, TrainPreset};

use crate::error::{CliError, CliResult};

fn list<T: std::str::FromStr>(v: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    v.split(',')
        .map(|s| s.trim().parse::<T>().map_err(|e| format!("`{s}`: {e}")))
        .collect()
}

fn one<T: std::str::FromStr>(v: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("`{v}`: {e}"))
}

/// Applies one setting. `preset` resets the pruning schedule to the preset's.
pub fn apply(config: &mut TrainConfig, key: &str, value: &str) -> Result<(), String> {
    match key {
        "preset" => {
            let p = TrainPreset::parse(value).map_err(|e| e.to_string())?;
            let fresh = TrainConfig::preset(p);
            config.preset = p;
            config.prune_steps_total = fresh.prune_steps_total;
            config.tau_schedule = fresh.tau_schedule;
        }
        "total_iters" => config.total_iters = one(value)?,
        "position_lr_init" => config.position_lr_init = one(value)?,
        "position_lr_final" => config.position_lr_final = one(value)?,
        "rotation_lr" => config.rotation_lr = one(value)?,
        "scale_lr" => config.scale_lr = one(value)?,
        "opacity_lr" => config.opacity_lr = one(value)?,
        "sh_lr" => config.sh_lr = one(value)?,
        "densify_interval" => config.densify_interval = one(value)?,
        "opacity_reset_interval" => config.opacity_reset_interval = one(value)?,
        "densify_grad_threshold" => config.densify_grad_threshold = one(value)?,
        "densify_until_iter" => config.densify_until_iter = one(value)?,
        "percent_dense" => config.percent_dense = one(value)?,
        "min_opacity" => config.min_opacity = one(value)?,
        "prune_steps_total" => config.prune_steps_total = one(value)?,
        "prune_i_step" => config.prune_i_step = one(value)?,
        "tau_schedule" => config.tau_schedule = list(value)?,
        "level_dims" => config.level_dims = list(value)?,
        "sh_degree" => config.sh_degree = one(value)?,
        "background" => {
            let v: Vec<f64> = list(value)?;
            config.background = v.try_into().map_err(|_| "background needs three values".to_string())?;
        }
        "seed" => config.seed = one(value)?,
        "lambda_dssim" => config.lambda_dssim = one(value)?,
        "eadr_beta" => config.eadr_beta = one(value)?,
        "eadr_depth_scale" => config.eadr_depth_scale = one(value)?,
        "mvc_prune" => config.mvc_prune = one(value)?,
        "eadr" => config.eadr = one(value)?,
        other => return Err(format!("unknown key `{other}`")),
    }
    Ok(())
}

pub fn parse_into(config: &mut TrainConfig, text: &str) -> Result<(), String> {
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`", n + 1))?;
        apply(config, k.trim(), v.trim()).map_err(|m| format!("line {}: {m}", n + 1))?;
    }
    Ok(())
}

pub fn read_config(path: &Path, base: TrainConfig) -> CliResult<TrainConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut config = base;
    parse_into(&mut config, &text).map_err(|m| CliError::parse(path, m))?;
    Ok(config)
}

fn join<T: std::fmt::Debug>(v: &[T]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

/// Inverse of [`parse_into`]; floats use round-trip formatting.
pub fn format_config(c: &TrainConfig) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("writing to a string");
    kv("preset", c.preset.name().into());
    kv("total_iters", c.total_iters.to_string());
    kv("position_lr_init", format!("{:?}", c.position_lr_init));
    kv("position_lr_final", format!("{:?}", c.position_lr_final));
    kv("rotation_lr", format!("{:?}", c.rotation_lr));
    kv("scale_lr", format!("{:?}", c.scale_lr));
    kv("opacity_lr", format!("{:?}", c.opacity_lr));
    kv("sh_lr", format!("{:?}", c.sh_lr));
    kv("densify_interval", c.densify_interval.to_string());
    kv("opacity_reset_interval", c.opacity_reset_interval.to_string());
    kv("densify_grad_threshold", format!("{:?}", c.densify_grad_threshold));
    kv("densify_until_iter", c.densify_until_iter.to_string());
    kv("percent_dense", format!("{:?}", c.percent_dense));
    kv("min_opacity", format!("{:?}", c.min_opacity));
    kv("prune_steps_total", c.prune_steps_total.to_string());
    kv("prune_i_step", c.prune_i_step.to_string());
    kv("tau_schedule", join(&c.tau_schedule));
    kv("level_dims", join(&c.level_dims));
    kv("sh_degree", c.sh_degree.to_string());
    kv("background", join(&c.background));
    kv("seed", c.seed.to_string());
    kv("lambda_dssim", format!("{:?}", c.lambda_dssim));
    kv("eadr_beta", format!("{:?}", c.eadr_beta));
    kv("eadr_depth_scale", format!("{:?}", c.eadr_depth_scale));
    kv("mvc_prune", c.mvc_prune.to_string());
    kv("eadr", c.eadr.to_string());
    s
}
