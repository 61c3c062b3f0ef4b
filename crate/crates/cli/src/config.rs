//! Flat `key = value` configuration files.

use std::collections::HashSet;
use std::path::Path;

use optomech_core::model::{ModelParams, DEFAULT_BOX_SIDE, DEFAULT_HALF_EXTENT};

use crate::error::{CliError, Result};

pub const KEYS: [&str; 9] = [
    "detuning0",
    "mirror_freq",
    "mirror_damping",
    "coupling",
    "thermal_occupation",
    "pump_amplitude",
    "pump_waist",
    "half_extent",
    "box_side",
];

#[derive(Debug, Clone, PartialEq)]
pub struct FileConfig {
    pub model: ModelParams,
    pub half_extent: usize,
    pub box_side: f64,
}

impl Default for FileConfig {
    fn default() -> Self {
        Self {
            model: ModelParams::default(),
            half_extent: DEFAULT_HALF_EXTENT,
            box_side: DEFAULT_BOX_SIDE,
        }
    }
}

impl FileConfig {
    /// Every key with its value, in [`KEYS`] order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let m = &self.model;
        let g = crate::format::g17;
        vec![
            ("detuning0", g(m.detuning0)),
            ("mirror_freq", g(m.mirror_freq)),
            ("mirror_damping", g(m.mirror_damping)),
            ("coupling", g(m.coupling)),
            ("thermal_occupation", g(m.thermal_occupation)),
            ("pump_amplitude", g(m.pump_amplitude)),
            ("pump_waist", g(m.pump_waist)),
            ("half_extent", self.half_extent.to_string()),
            ("box_side", g(self.box_side)),
        ]
    }
}

/// Parses `text`; keys not present keep their defaults. `source` names the
/// input in error messages.
pub fn parse_config(text: &str, source: &str) -> Result<FileConfig> {
    let mut config = FileConfig::default();
    let mut seen = HashSet::new();
    for (index, raw) in text.lines().enumerate() {
        let line = index + 1;
        let err = |message: String| CliError::Config {
            path: source.to_string(),
            line,
            message,
        };
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, found `{content}`")))?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(err(format!("unknown key `{key}`")));
        }
        if !seen.insert(key) {
            return Err(err(format!("duplicate key `{key}`")));
        }
        if key == "half_extent" {
            config.half_extent = value.parse().map_err(|_| {
                err(format!(
                    "`half_extent` must be a non-negative integer, got `{value}`"
                ))
            })?;
            continue;
        }
        let number: f64 = value
            .parse()
            .map_err(|_| err(format!("`{key}` must be a number, got `{value}`")))?;
        let m = &mut config.model;
        match key {
            "detuning0" => m.detuning0 = number,
            "mirror_freq" => m.mirror_freq = number,
            "mirror_damping" => m.mirror_damping = number,
            "coupling" => m.coupling = number,
            "thermal_occupation" => m.thermal_occupation = number,
            "pump_amplitude" => m.pump_amplitude = number,
            "pump_waist" => m.pump_waist = number,
            "box_side" => config.box_side = number,
            _ => unreachable!("key list checked above"),
        }
    }
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&text, &path.display().to_string())
}
