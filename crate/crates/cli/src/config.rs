//! Experiment configuration: a JSON parameter file with an optional `run`
//! block, patched by `--set key=value` overrides.

use std::path::Path;

use anyhow::{anyhow, bail, Context};
use delayspread_core::ParamsSpec;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

const PARAM_KEYS: [&str; 9] = ["T", "alpha", "beta", "D_M", "D_I", "d_M", "d_I", "tau", "birth"];

/// Numerical settings. Anything left unset gets a per-command default.
#[derive(Clone, Debug, Default, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    pub grid_n: Option<usize>,
    pub grid_halfwidth: Option<f64>,
    pub quad_n: Option<usize>,
    pub years: Option<usize>,
    /// Absolute adult density whose crossing defines the front.
    pub front_level: Option<f64>,
    pub initial: Option<Initial>,
    /// Yearly mean of the extra adult mortality in `prop-mortality`.
    pub eta_mean: Option<f64>,
    /// Diffusion multipliers for `prop-scaling`.
    pub scaling_k: Option<Vec<f64>>,
    /// Times within the year at which immature profiles are reported.
    pub phases: Option<Vec<f64>>,
    /// Periods run before the immature profile is read off.
    pub periods: Option<usize>,
    /// Length of the kinetic orbit dump.
    pub orbit_len: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Initial {
    /// Plateau at `u*` with the critical exponential tail `(1+μ*r)e^{−μ*r}`.
    CriticalTail,
    /// Plateau at `u*` with a short cosine ramp to zero.
    Plateau,
}

#[derive(Clone, Debug)]
pub struct Config {
    pub params: ParamsSpec,
    pub run: RunSettings,
}

pub fn load(path: &Path, overrides: &[String]) -> anyhow::Result<Config> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let doc: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    from_value(doc, overrides)
}

pub fn from_value(mut doc: Value, overrides: &[String]) -> anyhow::Result<Config> {
    for item in overrides {
        apply_override(&mut doc, item)?;
    }
    let Value::Object(mut map) = doc else {
        bail!("configuration must be a JSON object");
    };
    let run = match map.remove("run") {
        Some(v) => serde_json::from_value(v).context("invalid run settings")?,
        None => RunSettings::default(),
    };
    if let Some(key) = map.keys().find(|k| !PARAM_KEYS.contains(&k.as_str())) {
        bail!("unknown parameter key {key:?}; expected one of {PARAM_KEYS:?} or \"run\"");
    }
    let params = serde_json::from_value(Value::Object(map)).context("invalid model parameters")?;
    Ok(Config { params, run })
}

/// Applies `a.b.c=value`. The value is read as JSON when it parses and as a
/// plain string otherwise; missing intermediate objects are created.
pub fn apply_override(doc: &mut Value, item: &str) -> anyhow::Result<()> {
    let (path, raw) = item
        .split_once('=')
        .ok_or_else(|| anyhow!("override {item:?} is not of the form key=value"))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        bail!("override key {path:?} has an empty segment");
    }
    let mut node = doc;
    for key in &keys[..keys.len() - 1] {
        let Value::Object(map) = node else {
            bail!("override {path:?}: {key:?} is inside a non-object value");
        };
        node = map.entry(key.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    let Value::Object(map) = node else {
        bail!("override {path:?} targets a field of a non-object value");
    };
    map.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}
