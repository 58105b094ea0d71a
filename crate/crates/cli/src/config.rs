//! Run configuration: a JSON file merged with command-line flags.
//!
//! Precedence is flag > config file > documented default. The file is strict:
//! unknown fields are rejected with the offending field named, so typos fail
//! loudly instead of silently falling back to a default.
//!
//! # File schema (all fields optional)
//!
//! ```json
//! {
//!   "model": "path/to/model.json",
//!   "seed": 7,
//!   "paths": 10000,
//!   "t": 1.0,
//!   "lambda": 0.01,
//!   "lambda-step": 0.001,
//!   "omega-grid": "0:10:21",
//!   "tolerance": 1e-9,
//!   "out": "results.json",
//!   "period": 6.283185307179586,
//!   "slices": 16,
//!   "initial": [1.0, 0.0],
//!   "functional": { "kind": "time-integral", "observable": { ... } },
//!   "observable": { "kind": "static", "values": [...] },
//!   "truncations": [25, 50, 100, 200],
//!   "theta-grid": [0.05, 0.1, 0.2],
//!   "dump": "paths.jsonl"
//! }
//! ```
//!
//! `functional` and `observable` follow the model-document schema for
//! functionals and observables (see the library's `document` module). Paths in
//! the file are resolved relative to the file's own directory.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use mjp_core::document::{FunctionalDocument, ObservableDocument};
use mjp_core::ModelDocument;

use crate::{Failure, RunArgs};

/// Fixed default seed so every command is reproducible out of the box.
pub const DEFAULT_SEED: u64 = 7;
/// Default number of Monte-Carlo paths.
pub const DEFAULT_PATHS: u64 = 10_000;
/// Default time horizon.
pub const DEFAULT_T: f64 = 1.0;
/// Default tilt strength for tilted-kernel commands (`oss`).
pub const DEFAULT_LAMBDA: f64 = 0.01;
/// Default finite-difference step in the tilt parameter.
pub const DEFAULT_LAMBDA_STEP: f64 = 1e-3;
/// Default quadrature tolerance for the exact route.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;
/// Default frequency grid `start:stop:points` (inclusive endpoints).
pub const DEFAULT_OMEGA_GRID: &str = "0:10:21";
/// Default driving period (2 pi).
pub const DEFAULT_PERIOD: f64 = std::f64::consts::TAU;
/// Default number of phase slices per period reported by `oss`.
pub const DEFAULT_SLICES: usize = 16;
/// Default truncation ladder for the birth-death condition checker.
pub const DEFAULT_TRUNCATIONS: [usize; 4] = [25, 50, 100, 200];

/// On-disk configuration file. Every field optional; see module docs.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub model: Option<PathBuf>,
    pub seed: Option<u64>,
    pub paths: Option<u64>,
    pub t: Option<f64>,
    pub lambda: Option<f64>,
    pub lambda_step: Option<f64>,
    pub omega_grid: Option<String>,
    pub tolerance: Option<f64>,
    pub out: Option<PathBuf>,
    pub period: Option<f64>,
    pub slices: Option<usize>,
    pub initial: Option<Vec<f64>>,
    pub functional: Option<FunctionalDocument>,
    pub observable: Option<ObservableDocument>,
    pub truncations: Option<Vec<usize>>,
    pub theta_grid: Option<Vec<f64>>,
    pub dump: Option<PathBuf>,
}

/// Fully resolved configuration: flags merged over the file, defaults filled.
#[derive(Debug)]
pub struct Resolved {
    pub model_path: Option<PathBuf>,
    pub seed: u64,
    pub paths: u64,
    pub t: f64,
    pub lambda: f64,
    pub lambda_step: f64,
    pub omega_grid: String,
    pub tolerance: f64,
    pub out: Option<PathBuf>,
    pub period: f64,
    pub slices: usize,
    pub initial: Option<Vec<f64>>,
    pub functional: Option<FunctionalDocument>,
    pub observable: Option<ObservableDocument>,
    pub truncations: Vec<usize>,
    pub theta_grid: Option<Vec<f64>>,
    pub dump: Option<PathBuf>,
}

impl Resolved {
    /// Merge flags over an optional config file and fill documented defaults.
    pub fn from_args(args: &RunArgs) -> Result<Self, Failure> {
        let (file, base) = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    Failure::Config(format!("cannot read config {}: {e}", path.display()))
                })?;
                let parsed: FileConfig = serde_json::from_str(&text).map_err(|e| {
                    Failure::Config(format!("config {}: {e}", path.display()))
                })?;
                let base = path.parent().map(Path::to_path_buf);
                (parsed, base)
            }
            None => (FileConfig::default(), None),
        };
        // Paths inside the config file are relative to the file itself;
        // paths given as flags are relative to the working directory.
        let anchor = |p: PathBuf| -> PathBuf {
            match (&base, p.is_absolute()) {
                (Some(dir), false) => dir.join(p),
                _ => p,
            }
        };
        Ok(Self {
            model_path: args
                .model
                .clone()
                .or_else(|| file.model.clone().map(anchor)),
            seed: args.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            paths: args.paths.or(file.paths).unwrap_or(DEFAULT_PATHS),
            t: args.t.or(file.t).unwrap_or(DEFAULT_T),
            lambda: args.lambda.or(file.lambda).unwrap_or(DEFAULT_LAMBDA),
            lambda_step: args
                .lambda_step
                .or(file.lambda_step)
                .unwrap_or(DEFAULT_LAMBDA_STEP),
            omega_grid: args
                .omega_grid
                .clone()
                .or(file.omega_grid)
                .unwrap_or_else(|| DEFAULT_OMEGA_GRID.to_string()),
            tolerance: args.tolerance.or(file.tolerance).unwrap_or(DEFAULT_TOLERANCE),
            out: args.out.clone().or(file.out.map(anchor)),
            period: file.period.unwrap_or(DEFAULT_PERIOD),
            slices: file.slices.unwrap_or(DEFAULT_SLICES),
            initial: file.initial,
            functional: file.functional,
            observable: file.observable,
            truncations: file
                .truncations
                .unwrap_or_else(|| DEFAULT_TRUNCATIONS.to_vec()),
            theta_grid: file.theta_grid,
            dump: file.dump.map(anchor),
        })
    }

    /// Read and parse the model document; error if none was given.
    pub fn model_document(&self) -> Result<ModelDocument, Failure> {
        let path = self.model_path.as_ref().ok_or_else(|| {
            Failure::Config("no model document: pass --model or set `model` in the config".into())
        })?;
        let text = std::fs::read_to_string(path).map_err(|e| {
            Failure::Config(format!("cannot read model {}: {e}", path.display()))
        })?;
        ModelDocument::from_json(&text).map_err(Failure::from)
    }

    /// Starting distribution: explicit `initial` or the stationary law.
    pub fn initial_distribution(
        &self,
        built: &mjp_core::BuiltModel,
    ) -> Result<Vec<f64>, Failure> {
        match &self.initial {
            None => Ok(built.chain().pi().as_slice().to_vec()),
            Some(raw) => {
                if raw.len() != built.len() {
                    return Err(Failure::Config(format!(
                        "initial distribution has {} entries for {} states",
                        raw.len(),
                        built.len()
                    )));
                }
                if raw.iter().any(|&p| !p.is_finite() || p < 0.0) {
                    return Err(Failure::Config(
                        "initial distribution entries must be finite and non-negative".into(),
                    ));
                }
                let total: f64 = raw.iter().sum();
                // Entries are finite and non-negative, so the sum is too.
                if total <= 0.0 {
                    return Err(Failure::Config(
                        "initial distribution must have positive mass".into(),
                    ));
                }
                Ok(raw.iter().map(|&p| p / total).collect())
            }
        }
    }
}

/// Parse `start:stop:points` into an inclusive, evenly spaced grid.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, Failure> {
    let bad = |why: &str| {
        Failure::Config(format!(
            "omega grid `{text}`: {why} (expected start:stop:points, e.g. 0:10:21)"
        ))
    };
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(bad("need exactly three colon-separated fields"));
    }
    let start: f64 = parts[0].trim().parse().map_err(|_| bad("bad start"))?;
    let stop: f64 = parts[1].trim().parse().map_err(|_| bad("bad stop"))?;
    let points: usize = parts[2].trim().parse().map_err(|_| bad("bad point count"))?;
    if !start.is_finite() || !stop.is_finite() {
        return Err(bad("endpoints must be finite"));
    }
    if points == 0 {
        return Err(bad("need at least one point"));
    }
    if points == 1 {
        if start != stop {
            return Err(bad("a single point needs start == stop"));
        }
        return Ok(vec![start]);
    }
    let step = (stop - start) / (points - 1) as f64;
    Ok((0..points).map(|i| start + step * i as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_inclusive_endpoints() {
        let g = parse_grid("0:10:21").unwrap();
        assert_eq!(g.len(), 21);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[20], 10.0);
        assert!((g[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn grid_singleton_and_errors() {
        assert_eq!(parse_grid("1.5:1.5:1").unwrap(), vec![1.5]);
        assert!(parse_grid("1:2:0").is_err());
        assert!(parse_grid("1:2").is_err());
        assert!(parse_grid("1:2:1").is_err());
        assert!(parse_grid("a:2:3").is_err());
    }

    #[test]
    fn unknown_config_field_is_named() {
        let err = serde_json::from_str::<FileConfig>(r#"{"seeed": 3}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("seeed"), "{err}");
    }
}
