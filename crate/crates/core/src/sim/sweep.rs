//! One-parameter sweeps over a base scenario.

use toml::Value;

use crate::error::{Error, Result};
use crate::mr::Adjuster;

use super::config::ScenarioConfig;
use super::study::{run_study, SimulationReport};

/// Dotted names of the numeric fields that can be swept.
pub const SWEEPABLE: &[&str] = &[
    "n",
    "beta",
    "theta",
    "alpha",
    "zx_effect",
    "zy_effect",
    "target_observed_fraction",
    "selection.alpha_r",
    "selection.beta_r",
    "selection.gamma_r",
    "selection.delta_r",
    "confounder_selection.lambda_y",
    "confounder_selection.lambda_r",
    "mr.alpha_x",
    "mr.alpha_y",
    "mr.gamma_x",
    "mr.gamma_y",
    "mr.beta_x.fixed",
    "mr.beta_x2",
];

const INTEGER_FIELDS: &[&str] = &["n"];

/// Copy of `base` with `parameter` set to `value`.
///
/// Setting the selection intercept drops the target observed fraction and vice versa.
pub fn with_parameter(base: &ScenarioConfig, parameter: &str, value: f64) -> Result<ScenarioConfig> {
    if !SWEEPABLE.contains(&parameter) {
        return Err(Error::Config(format!("unknown sweep parameter `{parameter}`")));
    }
    let mut root = Value::try_from(base).map_err(|e| Error::Config(e.to_string()))?;
    let table = root.as_table_mut().expect("config serializes to a table");
    match parameter {
        "selection.alpha_r" => {
            table.remove("target_observed_fraction");
        }
        "target_observed_fraction" => {
            if let Some(Value::Table(sel)) = table.get_mut("selection") {
                sel.remove("alpha_r");
            }
        }
        _ => {}
    }
    let new = if INTEGER_FIELDS.contains(&parameter) {
        if value.fract() != 0.0 || value < 0.0 {
            return Err(Error::Config(format!("`{parameter}` needs a non-negative integer, got {value}")));
        }
        Value::Integer(value as i64)
    } else {
        Value::Float(value)
    };
    let mut parts: Vec<&str> = parameter.split('.').collect();
    let leaf = parts.pop().expect("non-empty path");
    let mut node = table;
    for p in parts {
        node = match node.get_mut(p) {
            Some(Value::Table(t)) => t,
            _ => {
                return Err(Error::Config(format!(
                    "sweep parameter `{parameter}`: section `{p}` is not present in the base scenario"
                )))
            }
        };
    }
    if !node.contains_key(leaf) && !matches!(leaf, "alpha_r" | "target_observed_fraction" | "beta" | "theta") {
        return Err(Error::Config(format!("sweep parameter `{parameter}` is not set in the base scenario")));
    }
    node.insert(leaf.to_string(), new);
    let cfg: ScenarioConfig = root.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one study per value. Study i uses seed `base_seed + i` and has no sweep section.
pub fn sweep(
    base: &ScenarioConfig,
    parameter: &str,
    values: &[f64],
    methods: &[Adjuster],
    parallelism: usize,
) -> Result<Vec<SimulationReport>> {
    if !SWEEPABLE.contains(&parameter) {
        return Err(Error::Config(format!("unknown sweep parameter `{parameter}`")));
    }
    let mut base = base.clone();
    base.sweep = None;
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut cfg = with_parameter(&base, parameter, v)?;
            cfg.base_seed = base.base_seed.wrapping_add(i as u64);
            run_study(&cfg, methods, parallelism)
        })
        .collect()
}
