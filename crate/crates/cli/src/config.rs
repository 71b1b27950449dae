//! Run configuration: a TOML file, optionally seeded from a named preset,
//! resolved into concrete values before anything runs.
//!
//! ```toml
//! preset = "example1"        # example1 | example2 | remark1 | gaussian
//! d = 10
//! p = 0.7                    # overrides the model's attack probability
//! target_norm = 0.6          # spectral norm of the random A*
//! horizon = 4000             # simulate: trajectory length
//! seed = 7
//! trials = 10
//! checkpoints = [125, 250, 500, 1000, 2000, 4000]
//! estimators = ["OLS", "L2Norm", "L1Norm"]
//!
//! [grid]                     # experiment: one cell per (p, d)
//! p = [0.7, 0.75, 0.8]
//! d = [10, 20]
//!
//! [model]                    # replaces the preset's model
//! kind = "iid_gaussian"
//! mean = 0.0
//! variance = 1.0
//! p = 1.0
//! declared_sigma_w = 1.0
//!
//! [system]                   # fixed A* and x0 instead of a random draw
//! a_star = [[0.5]]
//! x0 = [0.5]
//! ```

use std::path::Path;

use advsysid::disturbances::{example1_model, example2_model, gaussian_model, remark1_model, DisturbanceModel};
use advsysid::dynamics::SystemSpec;
use advsysid::estimators::Method;
use advsysid::experiments::{ExperimentConfig, DEFAULT_CHECKPOINTS, DEFAULT_RECOVERY_TOL, DEFAULT_TRIALS};
use advsysid::Matrix;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const PRESETS: [&str; 4] = ["example1", "example2", "remark1", "gaussian"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub a_star: Vec<Vec<f64>>,
    pub x0: Vec<f64>,
}

impl SystemConfig {
    pub fn to_spec(&self) -> advsysid::Result<SystemSpec> {
        SystemSpec::new(Matrix::from_rows(&self.a_star)?, self.x0.clone())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default)]
    pub p: Vec<f64>,
    #[serde(default)]
    pub d: Vec<usize>,
}

/// The file as written; every key optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    preset: Option<String>,
    d: Option<usize>,
    p: Option<f64>,
    target_norm: Option<f64>,
    horizon: Option<usize>,
    seed: Option<u64>,
    trials: Option<usize>,
    checkpoints: Option<Vec<usize>>,
    recovery_tol: Option<f64>,
    confidence_delta: Option<f64>,
    estimators: Option<Vec<Method>>,
    certify: Option<bool>,
    epsilon: Option<f64>,
    model: Option<DisturbanceModel>,
    system: Option<SystemConfig>,
    grid: Option<GridConfig>,
}

/// Fully resolved configuration, echoed verbatim into the run manifest.
/// Feeding the manifest back as `--config` reproduces the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub d: usize,
    pub target_norm: f64,
    pub horizon: usize,
    pub seed: u64,
    pub trials: usize,
    pub checkpoints: Vec<usize>,
    pub recovery_tol: f64,
    pub confidence_delta: f64,
    pub estimators: Vec<Method>,
    pub certify: bool,
    pub epsilon: Option<f64>,
    pub model: DisturbanceModel,
    pub system: Option<SystemConfig>,
    pub grid: GridConfig,
}

impl RunConfig {
    /// Experiment settings for one `(p, d)` cell.
    pub fn experiment(&self, p: f64, d: usize) -> Result<ExperimentConfig, CliError> {
        let model = self.model.clone().with_p(p).map_err(|e| usage(format!("grid.p: {e}")))?;
        let mut c = ExperimentConfig::new(d, self.target_norm, model);
        c.checkpoints = self.checkpoints.clone();
        c.trials = self.trials;
        c.recovery_tol = self.recovery_tol;
        c.confidence_delta = self.confidence_delta;
        c.master_seed = self.seed;
        c.estimators = self.estimators.clone();
        c.certify = self.certify;
        c.validate().map_err(|e| usage(format!("cell p={p}, d={d}: {e}")))?;
        Ok(c)
    }

    pub fn cells(&self) -> Vec<(f64, usize)> {
        self.grid.d.iter().flat_map(|&d| self.grid.p.iter().map(move |&p| (p, d))).collect()
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.horizon < self.d {
            return Err(usage(format!("horizon: {} is below d = {}", self.horizon, self.d)));
        }
        if let Some(sys) = &self.system {
            let spec = sys.to_spec().map_err(|e| usage(format!("system: {e}")))?;
            if spec.dim() != self.d {
                return Err(usage(format!("system: A* is {0}x{0} but d = {1}", spec.dim(), self.d)));
            }
        }
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0 && eps < 2.0) {
                return Err(usage(format!("epsilon: {eps} outside (0, 2)")));
            }
        }
        if self.grid.p.is_empty() || self.grid.d.is_empty() {
            return Err(usage("grid: p and d lists must be nonempty"));
        }
        for (p, d) in self.cells() {
            self.experiment(p, d)?;
        }
        self.model.check_dimension(self.d).map_err(|e| usage(format!("model: {e}")))?;
        Ok(())
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

struct Preset {
    d: usize,
    target_norm: f64,
    horizon: usize,
    model: DisturbanceModel,
    checkpoints: Vec<usize>,
    system: Option<SystemConfig>,
    grid: GridConfig,
}

fn preset(name: &str) -> Result<Preset, CliError> {
    let defaults = DEFAULT_CHECKPOINTS.to_vec();
    Ok(match name {
        "example1" => Preset {
            d: 10,
            target_norm: 0.6,
            horizon: 4000,
            model: example1_model(0.7).expect("valid preset"),
            checkpoints: defaults,
            system: None,
            grid: GridConfig { p: vec![0.7, 0.75, 0.8], d: vec![10, 20] },
        },
        "example2" => Preset {
            d: 10,
            target_norm: 0.95,
            horizon: 8000,
            model: example2_model(0.5).expect("valid preset"),
            checkpoints: vec![125, 250, 500, 1000, 2000, 4000, 8000],
            system: None,
            grid: GridConfig { p: vec![0.45, 0.47, 0.48, 0.5], d: vec![10] },
        },
        "remark1" => Preset {
            d: 1,
            target_norm: 0.5,
            horizon: 500,
            model: remark1_model(),
            checkpoints: vec![10, 20, 50, 100, 200, 500],
            system: Some(SystemConfig { a_star: vec![vec![0.5]], x0: vec![0.5] }),
            grid: GridConfig { p: vec![1.0], d: vec![1] },
        },
        "gaussian" => Preset {
            d: 10,
            target_norm: 0.6,
            horizon: 4000,
            model: gaussian_model(1.0, 1.0).expect("valid preset"),
            checkpoints: defaults,
            system: None,
            grid: GridConfig { p: vec![1.0], d: vec![10] },
        },
        other => {
            return Err(usage(format!("preset: unknown preset {other:?}; expected one of {}", PRESETS.join(", "))))
        }
    })
}

fn resolve(raw: RawConfig) -> Result<RunConfig, CliError> {
    let base = raw.preset.as_deref().map(preset).transpose()?;
    let d = raw.d.or(base.as_ref().map(|b| b.d)).ok_or_else(|| usage("d: required when no preset is given"))?;
    let mut model = match (raw.model, &base) {
        (Some(m), _) => m,
        (None, Some(b)) => b.model.clone(),
        (None, None) => return Err(usage("model: required when no preset is given")),
    };
    if let Some(p) = raw.p {
        model = model.with_p(p).map_err(|e| usage(format!("p: {e}")))?;
    }
    model.validate().map_err(|e| usage(format!("model: {e}")))?;

    let checkpoints = match (raw.checkpoints, &base, raw.horizon) {
        (Some(c), _, _) => c,
        (None, Some(b), _) => b.checkpoints.clone(),
        (None, None, Some(h)) => DEFAULT_CHECKPOINTS.iter().copied().filter(|&t| t < h).chain([h]).collect(),
        (None, None, None) => DEFAULT_CHECKPOINTS.to_vec(),
    };
    let horizon =
        raw.horizon.or(base.as_ref().map(|b| b.horizon)).unwrap_or_else(|| checkpoints.last().copied().unwrap_or(d));
    // A fixed system only fits the dimension it was written for.
    let system = match raw.system {
        Some(s) => Some(s),
        None => base.as_ref().and_then(|b| b.system.clone()).filter(|s| s.x0.len() == d),
    };
    let raw_grid = raw.grid.unwrap_or_default();
    let base_grid = base.as_ref().map(|b| b.grid.clone()).unwrap_or_default();
    let grid = GridConfig {
        p: if !raw_grid.p.is_empty() {
            raw_grid.p
        } else if raw.p.is_none() && !base_grid.p.is_empty() {
            base_grid.p
        } else {
            vec![model.p]
        },
        d: if !raw_grid.d.is_empty() {
            raw_grid.d
        } else if raw.d.is_none() && !base_grid.d.is_empty() {
            base_grid.d
        } else {
            vec![d]
        },
    };

    let config = RunConfig {
        preset: raw.preset,
        d,
        target_norm: raw.target_norm.or(base.as_ref().map(|b| b.target_norm)).unwrap_or(0.6),
        horizon,
        seed: raw.seed.unwrap_or(0),
        trials: raw.trials.unwrap_or(DEFAULT_TRIALS),
        checkpoints,
        recovery_tol: raw.recovery_tol.unwrap_or(DEFAULT_RECOVERY_TOL),
        confidence_delta: raw.confidence_delta.unwrap_or(0.1),
        estimators: raw.estimators.unwrap_or_else(|| Method::ALL.to_vec()),
        certify: raw.certify.unwrap_or(true),
        epsilon: raw.epsilon,
        model,
        system,
        grid,
    };
    config.validate()?;
    Ok(config)
}

/// Parses TOML config text.
pub fn parse_toml(text: &str) -> Result<RunConfig, CliError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| usage(format!("invalid config: {e}")))?;
    resolve(raw)
}

/// Loads a config file. A `.json` path may be a run manifest, whose
/// `config` section is used.
pub fn load(path: &Path, seed_override: Option<u64>) -> Result<RunConfig, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read config file {}: {e}", path.display())))?;
    let mut config = if path.extension().is_some_and(|e| e == "json") {
        let mut value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| usage(format!("{}: invalid JSON: {e}", path.display())))?;
        if let Some(inner) = value.get_mut("config") {
            value = inner.take();
        }
        let raw: RawConfig =
            serde_json::from_value(value).map_err(|e| usage(format!("{}: invalid config: {e}", path.display())))?;
        resolve(raw)
    } else {
        parse_toml(&text)
    }
    .map_err(|e| match e {
        CliError::Usage(m) => usage(format!("{}: {m}", path.display())),
        other => other,
    })?;
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_resolve() {
        for name in PRESETS {
            let c = parse_toml(&format!("preset = \"{name}\"")).unwrap();
            assert_eq!(c.preset.as_deref(), Some(name));
            assert!(!c.cells().is_empty());
        }
        let e1 = parse_toml("preset = \"example1\"").unwrap();
        assert_eq!(e1.cells().len(), 6);
        assert_eq!(parse_toml("preset = \"example2\"").unwrap().cells().len(), 4);
    }

    #[test]
    fn file_values_override_the_preset() {
        let c = parse_toml("preset = \"example1\"\nd = 3\np = 0.6\nseed = 9").unwrap();
        assert_eq!((c.d, c.model.p, c.seed), (3, 0.6, 9));
        assert_eq!(c.grid, GridConfig { p: vec![0.6], d: vec![3] });
    }

    #[test]
    fn field_level_errors() {
        let err = |text: &str| match parse_toml(text) {
            Err(CliError::Usage(m)) => m,
            other => panic!("expected usage error, got {other:?}"),
        };
        assert!(err("preset = \"example1\"\nestimators = []").contains("estimators"));
        assert!(err("preset = \"example1\"\ntrails = 3").contains("trails"));
        assert!(err("preset = \"nope\"").contains("preset"));
        assert!(err("d = 2").contains("model"));
        assert!(err("preset = \"example1\"\ntarget_norm = 1.5").contains("target_norm"));
        assert!(err("preset = \"remark1\"\n[system]\na_star = [[2.0]]\nx0 = [1.0]").contains("system"));
    }

    #[test]
    fn explicit_model_table() {
        let text = r#"
            d = 2
            [model]
            kind = "iid_gaussian"
            mean = 0.0
            variance = 2.0
            p = 1
            declared_sigma_w = 1.5
        "#;
        let c = parse_toml(text).unwrap();
        assert_eq!(c.model.p, 1.0);
        assert_eq!(c.grid.d, vec![2]);
        let scripted = "d = 1\n[model]\nkind = \"scripted\"\nrule = \"oppose_sign\"\nmagnitude = 1.0\np = 1.0\ndeclared_sigma_w = 1.0";
        assert!(parse_toml(scripted).is_ok());
    }
}
