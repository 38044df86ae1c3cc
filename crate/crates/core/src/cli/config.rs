//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Relative paths are
//! resolved against the directory of the config file (or the working
//! directory when no file is given). Command-line `--set key=value`
//! overrides are applied after the file, in order.
//!
//! | key | default |
//! |-----|---------|
//! | `seed` | none; required by every command except `predict` |
//! | `sim_database`, `shots` | `sim_database.csv`, `shots.csv` |
//! | `base_model`, `calibrated_model` | `base_model.json`, `calibrated_model.json` |
//! | `learning_curve`, `actual_vs_predicted` | `learning_curve.csv`, `actual_vs_predicted.csv` |
//! | `n_sim`, `n_shots`, `holdout` | 20000, 47, 7 |
//! | `ev_holdout_fraction` | 0.1 |
//! | `n_experiments` | all training shots |
//! | `base.{learning_rate,epochs,batch_size,beta1,beta2,epsilon}` | 0.01, 800, 300, 0.9, 0.999, 1e-8 |
//! | `transfer.{...}` | 0.001, 300, 1, 0.9, 0.999, 1e-8 |
//! | `noise.<observable>` | 0.05, 0.003, 0.02, 0.03, 0.02, 0.03, 0.0005 |
//! | `warp.<field>`, `drift` | see [`crate::datagen::Warp`], 0.5 |
//! | `curve.parallel` | false |

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::calibration::OBSERVABLE_NAMES;
use crate::datagen::GeneratorConfig;
use crate::network::TrainConfig;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub base_dir: PathBuf,
    pub sim_database: PathBuf,
    pub shots: PathBuf,
    pub base_model: PathBuf,
    pub calibrated_model: PathBuf,
    pub learning_curve: PathBuf,
    pub actual_vs_predicted: PathBuf,
    pub n_sim: usize,
    pub n_shots: usize,
    pub holdout: usize,
    pub ev_holdout_fraction: f64,
    pub n_experiments: Option<usize>,
    /// Seeds inside these are replaced by `seed` when a command runs.
    pub base: TrainConfig,
    pub transfer: TrainConfig,
    pub generator: GeneratorConfig,
    pub curve_parallel: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            base_dir: PathBuf::from("."),
            sim_database: "sim_database.csv".into(),
            shots: "shots.csv".into(),
            base_model: "base_model.json".into(),
            calibrated_model: "calibrated_model.json".into(),
            learning_curve: "learning_curve.csv".into(),
            actual_vs_predicted: "actual_vs_predicted.csv".into(),
            n_sim: 20_000,
            n_shots: 47,
            holdout: 7,
            ev_holdout_fraction: 0.1,
            n_experiments: None,
            base: TrainConfig::base(0),
            transfer: TrainConfig::transfer(0),
            generator: GeneratorConfig::default(),
            curve_parallel: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn set_train(cfg: &mut TrainConfig, field: &str, key: &str, value: &str) -> Result<()> {
    match field {
        "learning_rate" => cfg.learning_rate = parse(key, value)?,
        "epochs" => cfg.epochs = parse(key, value)?,
        "batch_size" => cfg.batch_size = parse(key, value)?,
        "beta1" => cfg.beta1 = parse(key, value)?,
        "beta2" => cfg.beta2 = parse(key, value)?,
        "epsilon" => cfg.epsilon = parse(key, value)?,
        _ => return Err(Error::Config(format!("unknown key `{key}`"))),
    }
    Ok(())
}

impl RunConfig {
    /// Parses config text; relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg = Self {
            base_dir: base_dir.into(),
            ..Self::default()
        };
        let mut seen = HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = split_pair(line)
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
            cfg.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {}", lineno + 1, strip(e))))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        Self::parse(&text, dir)
    }

    /// Applies a single `key=value` override.
    pub fn apply_override(&mut self, pair: &str) -> Result<()> {
        let (key, value) =
            split_pair(pair).ok_or_else(|| Error::Config(format!("override `{pair}` is not key=value")))?;
        self.set(key, value)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = Some(parse(key, value)?),
            "sim_database" => self.sim_database = value.into(),
            "shots" => self.shots = value.into(),
            "base_model" => self.base_model = value.into(),
            "calibrated_model" => self.calibrated_model = value.into(),
            "learning_curve" => self.learning_curve = value.into(),
            "actual_vs_predicted" => self.actual_vs_predicted = value.into(),
            "n_sim" => self.n_sim = parse(key, value)?,
            "n_shots" => self.n_shots = parse(key, value)?,
            "holdout" => self.holdout = parse(key, value)?,
            "ev_holdout_fraction" => {
                let f: f64 = parse(key, value)?;
                if !(0.0..1.0).contains(&f) {
                    return Err(Error::Config(format!("`{key}` must be in [0, 1), got {f}")));
                }
                self.ev_holdout_fraction = f;
            }
            "n_experiments" => self.n_experiments = Some(parse(key, value)?),
            "drift" => self.generator.drift = parse(key, value)?,
            "curve.parallel" => self.curve_parallel = parse(key, value)?,
            _ => {
                if let Some(field) = key.strip_prefix("base.") {
                    set_train(&mut self.base, field, key, value)?;
                } else if let Some(field) = key.strip_prefix("transfer.") {
                    set_train(&mut self.transfer, field, key, value)?;
                } else if let Some(name) = key.strip_prefix("noise.") {
                    let i = OBSERVABLE_NAMES
                        .iter()
                        .position(|n| *n == name)
                        .ok_or_else(|| Error::Config(format!("unknown key `{key}`")))?;
                    self.generator.noise_sd[i] = parse(key, value)?;
                } else if let Some(field) = key.strip_prefix("warp.") {
                    let w = &mut self.generator.warp;
                    let slot = match field {
                        "yield_offset" => &mut w.yield_offset,
                        "yield_asymmetry_slope" => &mut w.yield_asymmetry_slope,
                        "tion_scale" => &mut w.tion_scale,
                        "tion_offset" => &mut w.tion_offset,
                        "bang_time_shift" => &mut w.bang_time_shift,
                        "burnwidth_scale" => &mut w.burnwidth_scale,
                        "dsr_scale" => &mut w.dsr_scale,
                        _ => return Err(Error::Config(format!("unknown key `{key}`"))),
                    };
                    *slot = parse(key, value)?;
                } else {
                    return Err(Error::Config(format!("unknown key `{key}`")));
                }
            }
        }
        Ok(())
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("`seed` is required for this command".into()))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn base_train(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.base.clone()
        }
    }

    pub fn transfer_train(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.transfer.clone()
        }
    }
}

fn split_pair(s: &str) -> Option<(&str, &str)> {
    let (k, v) = s.split_once('=')?;
    let (k, v) = (k.trim(), v.trim());
    (!k.is_empty()).then_some((k, v))
}

fn strip(e: Error) -> String {
    match e {
        Error::Config(msg) => msg,
        other => other.to_string(),
    }
}
