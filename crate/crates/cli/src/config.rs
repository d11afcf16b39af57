//! `key = value` training configuration files.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use vtm::training::{FeatureMode, TrainConfig};
use vtm::{Result, VtmError};

pub const SEED_ENV: &str = "VTM_SEED";
pub const DEFAULT_FEATURE_DIM: usize = 16;

/// Everything a training command reads from its config file.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub train: TrainConfig,
    /// Width of the per-frame visual features seen by the visual encoder.
    pub feature_dim: usize,
}

impl Settings {
    pub fn tpmae_defaults() -> Self {
        Settings {
            train: TrainConfig::tpmae_defaults(),
            feature_dim: DEFAULT_FEATURE_DIM,
        }
    }

    pub fn vtm_defaults() -> Self {
        Settings {
            train: TrainConfig::vtm_defaults(),
            feature_dim: DEFAULT_FEATURE_DIM,
        }
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "epochs" => t.epochs = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "lr" => t.lr = parse(key, value)?,
            "lr_decay" => t.lr_decay = parse(key, value)?,
            "decay_every" => t.decay_every = parse(key, value)?,
            "weight_decay" => t.weight_decay = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "threads" => t.threads = parse(key, value)?,
            "feature_mode" => {
                t.feature_mode = match value {
                    "zeros" => FeatureMode::Zeros,
                    "file" => FeatureMode::File,
                    _ => {
                        return Err(VtmError::Config(format!(
                            "feature_mode must be zeros or file, got {value:?}"
                        )))
                    }
                }
            }
            "feature_dim" => self.feature_dim = parse(key, value)?,
            "weight_root" => t.joint_weights.root = parse(key, value)?,
            "weight_end_effector" => t.joint_weights.end_effector = parse(key, value)?,
            "weight_other" => t.joint_weights.other = parse(key, value)?,
            "weight_alignment" => t.loss_weights.alignment = parse(key, value)?,
            "weight_bone" => t.loss_weights.bone = parse(key, value)?,
            "weight_prediction" => t.loss_weights.prediction = parse(key, value)?,
            "weight_prediction_smoothness" => t.loss_weights.prediction_smoothness = parse(key, value)?,
            "weight_motion" => t.loss_weights.motion = parse(key, value)?,
            _ => return Err(VtmError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Renders every key with its current value, in file syntax.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let mode = match t.feature_mode {
            FeatureMode::Zeros => "zeros",
            FeatureMode::File => "file",
        };
        let rows: [(&str, String); 18] = [
            ("epochs", t.epochs.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("lr", format!("{:e}", t.lr)),
            ("lr_decay", t.lr_decay.to_string()),
            ("decay_every", t.decay_every.to_string()),
            ("weight_decay", t.weight_decay.to_string()),
            ("seed", t.seed.to_string()),
            ("threads", t.threads.to_string()),
            ("feature_mode", mode.to_string()),
            ("feature_dim", self.feature_dim.to_string()),
            ("weight_root", t.joint_weights.root.to_string()),
            ("weight_end_effector", t.joint_weights.end_effector.to_string()),
            ("weight_other", t.joint_weights.other.to_string()),
            ("weight_alignment", t.loss_weights.alignment.to_string()),
            ("weight_bone", t.loss_weights.bone.to_string()),
            ("weight_prediction", t.loss_weights.prediction.to_string()),
            (
                "weight_prediction_smoothness",
                t.loss_weights.prediction_smoothness.to_string(),
            ),
            ("weight_motion", t.loss_weights.motion.to_string()),
        ];
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| VtmError::Config(format!("cannot parse {key} = {value:?}")))
}

/// Reads `key = value` lines over `base`. Blank lines and `#` comments are
/// skipped; repeated keys are rejected.
pub fn parse_config(text: &str, base: Settings) -> Result<Settings> {
    let mut settings = base;
    let mut seen = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| VtmError::Config(format!("line {}: expected key = value", i + 1)))?;
        let key = key.trim();
        if !seen.insert(key.to_string()) {
            return Err(VtmError::Config(format!("line {}: {key} set twice", i + 1)));
        }
        settings
            .set(key, value.trim())
            .map_err(|e| VtmError::Config(format!("line {}: {}", i + 1, strip_prefix(&e))))?;
    }
    Ok(settings)
}

fn strip_prefix(e: &VtmError) -> String {
    match e {
        VtmError::Config(m) => m.clone(),
        other => other.to_string(),
    }
}

/// Applies the seed override from the environment, if set.
pub fn apply_seed_env(settings: &mut Settings, value: Option<&str>) -> Result<()> {
    if let Some(v) = value {
        settings.train.seed = v
            .trim()
            .parse()
            .map_err(|_| VtmError::Config(format!("{SEED_ENV} must be an unsigned integer, got {v:?}")))?;
    }
    Ok(())
}

/// The `--help` appendix listing both default sets.
pub fn defaults_help() -> String {
    format!(
        "Config file keys and defaults for train-tpmae:\n{}\nFor train-vtm:\n{}\n{SEED_ENV} overrides seed; --threads overrides threads.",
        indent(&Settings::tpmae_defaults().to_text()),
        indent(&Settings::vtm_defaults().to_text())
    )
}

/// The `--help` appendix of one training subcommand.
pub fn subcommand_help(defaults: &Settings) -> String {
    format!(
        "Config file keys and defaults:\n{}\n{SEED_ENV} overrides seed; --threads overrides threads.",
        indent(&defaults.to_text())
    )
}

fn indent(text: &str) -> String {
    text.lines().map(|l| format!("  {l}\n")).collect()
}
