//! Run configuration: a JSON document with the model, integrator settings and
//! exactly one command block, optionally patched by `--set key=value`.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use pullin_core::basins::GridSpec;
use pullin_core::{IntegratorConfig, ModelParams, PeriodicOrbit};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Pgm,
    Ppm,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdsBlock {}

/// Seeds for a section scan: points on a segment, explicit points, or both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedLine {
    pub from: [f64; 2],
    pub to: [f64; 2],
    pub count: usize,
}

/// Window and resolution of the hit-count raster written next to a scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Raster {
    pub x_range: (f64, f64),
    pub v_range: (f64, f64),
    pub nx: usize,
    pub nv: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanBlock {
    #[serde(default = "one")]
    pub n: usize,
    pub iterations: usize,
    #[serde(default)]
    pub line: Option<SeedLine>,
    #[serde(default)]
    pub points: Vec<[f64; 2]>,
    #[serde(default)]
    pub raster: Option<Raster>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitBlock {
    pub n: usize,
    pub guess: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub x_range: (f64, f64),
    pub v_range: (f64, f64),
    pub nx: usize,
    pub nv: usize,
    pub iterations: usize,
    /// Fully specified attractors, used as given.
    #[serde(default)]
    pub attractors: Option<Vec<PeriodicOrbit>>,
    /// Attractors to locate by Newton at the run's parameters before the sweep.
    #[serde(default)]
    pub attractor_guesses: Vec<OrbitBlock>,
    #[serde(default)]
    pub match_tol: Option<f64>,
    #[serde(default)]
    pub block: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuationBlock {
    pub n: usize,
    /// Guess for the seed orbit at the model's own damping.
    pub guess: [f64; 2],
    /// Damping at which the orbit is expected to be gone.
    pub c_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    pub initial: [f64; 2],
    #[serde(default)]
    pub t0: f64,
    /// End time; defaults to `t0` plus the integrator's `max_time`, else 100 forcing periods.
    #[serde(default)]
    pub t_end: Option<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn one() -> usize {
    1
}

fn default_samples() -> usize {
    1000
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Free-form description, ignored by the runner.
    #[serde(default)]
    pub note: Option<String>,
    pub model: ModelParams,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub thresholds: Option<ThresholdsBlock>,
    #[serde(default)]
    pub scan: Option<ScanBlock>,
    #[serde(default)]
    pub orbit: Option<OrbitBlock>,
    #[serde(default)]
    pub grid: Option<GridBlock>,
    #[serde(default)]
    pub continuation: Option<ContinuationBlock>,
    #[serde(default)]
    pub simulate: Option<SimulateBlock>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub emit: Vec<Format>,
}

impl RunConfig {
    /// Names of the command blocks present.
    pub fn blocks(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.thresholds.is_some() {
            out.push("thresholds");
        }
        if self.scan.is_some() {
            out.push("scan");
        }
        if self.orbit.is_some() {
            out.push("orbit");
        }
        if self.grid.is_some() {
            out.push("grid");
        }
        if self.continuation.is_some() {
            out.push("continuation");
        }
        if self.simulate.is_some() {
            out.push("simulate");
        }
        out
    }

    /// Check that the config carries the one block `wanted`. The thresholds
    /// command only reads the model, so it runs on any single-block config.
    pub fn require_block(&self, wanted: &str) -> Result<(), CliError> {
        let present = self.blocks();
        match present.as_slice() {
            [only] if *only == wanted => Ok(()),
            [] | [_] if wanted == "thresholds" => Ok(()),
            [] => Err(CliError::Config(format!("config has no `{wanted}` block"))),
            [only] => Err(CliError::Config(format!("this command needs a `{wanted}` block, config has `{only}`"))),
            many => Err(CliError::Config(format!(
                "config must hold exactly one command block, found {}",
                many.join(", ")
            ))),
        }
    }

    pub fn grid_spec(&self, attractors: Option<Vec<PeriodicOrbit>>) -> Option<GridSpec> {
        let g = self.grid.as_ref()?;
        let mut spec = GridSpec::new(g.x_range, g.v_range, g.nx, g.nv, g.iterations);
        spec.attractors = attractors;
        if let Some(t) = g.match_tol {
            spec.match_tol = t;
        }
        if let Some(b) = g.block {
            spec.block = b;
        }
        Some(spec)
    }
}

/// Set `path` (dot separated, numeric segments index arrays) in `doc` to `raw`.
/// `raw` is read as JSON when it parses, else as a string.
pub fn apply_override(doc: &mut Value, path: &str, raw: &str) -> Result<(), CliError> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("malformed override path `{path}`")));
    }
    let mut node = doc;
    for (depth, key) in keys.iter().enumerate() {
        let last = depth + 1 == keys.len();
        node = match node {
            Value::Array(items) => {
                let idx: usize = key
                    .parse()
                    .map_err(|_| CliError::Config(format!("`{key}` in `{path}` indexes an array")))?;
                let len = items.len();
                items
                    .get_mut(idx)
                    .ok_or_else(|| CliError::Config(format!("index {idx} out of range (len {len}) in `{path}`")))?
            }
            Value::Object(map) => {
                if last {
                    map.insert(key.to_string(), Value::Null);
                }
                map.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            other => {
                if other.is_null() {
                    *other = Value::Object(Default::default());
                    let Value::Object(map) = other else { unreachable!() };
                    map.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()))
                } else {
                    return Err(CliError::Config(format!("`{path}` descends into a scalar")));
                }
            }
        };
    }
    *node = value;
    Ok(())
}

/// Read a config file (or start from `{}`), apply overrides and decode.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut doc = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => Value::Object(Default::default()),
    };
    for ov in overrides {
        let (key, raw) = ov
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override `{ov}` is not of the form key=value")))?;
        apply_override(&mut doc, key.trim(), raw)?;
    }
    serde_json::from_value(doc).map_err(|e| CliError::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn override_creates_and_replaces() {
        let mut doc = json!({"grid": {"nx": 500}, "xs": [1, 2]});
        apply_override(&mut doc, "grid.nx", "100").unwrap();
        apply_override(&mut doc, "grid.x_range", "[-1, 1]").unwrap();
        apply_override(&mut doc, "output_dir", "runs/a").unwrap();
        apply_override(&mut doc, "xs.1", "7").unwrap();
        apply_override(&mut doc, "deep.new.key", "0.5").unwrap();
        assert_eq!(
            doc,
            json!({
                "grid": {"nx": 100, "x_range": [-1, 1]},
                "xs": [1, 7],
                "output_dir": "runs/a",
                "deep": {"new": {"key": 0.5}}
            })
        );
    }

    #[test]
    fn override_errors() {
        let mut doc = json!({"a": 1, "xs": [1]});
        assert!(apply_override(&mut doc, "a.b", "1").is_err());
        assert!(apply_override(&mut doc, "xs.3", "1").is_err());
        assert!(apply_override(&mut doc, "xs.k", "1").is_err());
        assert!(apply_override(&mut doc, "a..b", "1").is_err());
    }

    fn config(extra: Value) -> RunConfig {
        let mut doc = json!({"model": {"c": 0.0, "alpha": 0.5, "lambda": 0.01, "delta": 30.0, "omega": 1.2}});
        doc.as_object_mut().unwrap().extend(extra.as_object().unwrap().clone());
        serde_json::from_value(doc).unwrap()
    }

    #[test]
    fn block_rules() {
        assert!(config(json!({})).require_block("thresholds").is_ok());
        assert!(config(json!({})).require_block("orbit").is_err());
        let orbit = config(json!({"orbit": {"n": 3, "guess": [0.1, 0.0]}}));
        assert!(orbit.require_block("orbit").is_ok());
        assert!(orbit.require_block("grid").is_err());
        assert!(orbit.require_block("thresholds").is_ok());
        let two = config(json!({"orbit": {"n": 3, "guess": [0.1, 0.0]}, "thresholds": {}}));
        assert!(two.require_block("orbit").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let doc = json!({"model": {"c": 0.0, "alpha": 0.5, "lambda": 0.01, "delta": 30.0, "omega": 1.2}, "gird": {}});
        assert!(serde_json::from_value::<RunConfig>(doc).is_err());
    }
}
