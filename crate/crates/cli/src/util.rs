use std::path::Path;

use clap::ValueEnum;
use serde::de::DeserializeOwned;
use serde::Serialize;
use vasq_core::io::{write_volume, ElementType};
use vasq_core::volume::VoxelGrid;

use crate::error::{CliError, CliResult};

pub fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::invalid(format!("input {} does not exist", path.display())))
    }
}

pub fn require_dir(path: &Path) -> CliResult<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::invalid(format!("directory {} does not exist", path.display())))
    }
}

pub fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::runtime(format!("cannot create {}: {e}", path.display())))
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, String> {
    s.split(',').map(|p| p.trim().parse::<T>().map_err(|_| format!("cannot parse `{p}` in `{s}`"))).collect()
}

pub fn parse_f64_triple(s: &str) -> Result<[f64; 3], String> {
    parse_list::<f64>(s)?.try_into().map_err(|v: Vec<f64>| format!("expected 3 values, got {}", v.len()))
}

pub fn parse_usize_triple(s: &str) -> Result<[usize; 3], String> {
    parse_list::<usize>(s)?.try_into().map_err(|v: Vec<usize>| format!("expected 3 values, got {}", v.len()))
}

pub fn parse_f32_pair(s: &str) -> Result<[f32; 2], String> {
    parse_list::<f32>(s)?.try_into().map_err(|v: Vec<f32>| format!("expected 2 values, got {}", v.len()))
}

/// Element type of written intensity volumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutType {
    Float,
    /// Rounded to the nearest integer and saturated to the i16 range.
    Short,
}

pub fn write_grid(path: &Path, grid: &VoxelGrid, ty: OutType) -> CliResult<()> {
    match ty {
        OutType::Float => write_volume(path, grid, ElementType::Float)?,
        OutType::Short => {
            let rounded = grid.map(|&v| v.round().clamp(f32::from(i16::MIN), f32::from(i16::MAX)));
            write_volume(path, &rounded, ElementType::Short)?
        }
    }
    Ok(())
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    require_file(path)?;
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::runtime(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    require_file(path)?;
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::runtime(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    vasq_core::io::write_json(path, value).map_err(CliError::runtime)
}
